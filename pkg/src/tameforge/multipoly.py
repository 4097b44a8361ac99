"""Multivariate polynomials over a ring spec, with an explicit variable frame.

Terms are stored sparsely as {exponent tuple: coefficient payload}.  The
frame (an ordered tuple of variable names) is part of the value: arithmetic
requires matching frames, and frame changes are explicit (embed, rename,
drop).  Printing uses graded-lex order and round-trips through parse_poly.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Optional

from .errors import FrameMismatch, NotQAlgebra, ParseError, SpecMismatch
from .grammar import ExprAdapter, parse_full
from .rings import Payload, RingElem, RingSpec, convert_payload, lift_payload, ppow


def from_fraction(spec: RingSpec, q: Fraction) -> Payload:
    """Image of a rational number in spec; requires the denominator invertible."""
    num = spec.from_int(q.numerator)
    if q.denominator == 1:
        return num
    den_inv = spec.try_inverse(spec.from_int(q.denominator))
    if den_inv is None:
        raise NotQAlgebra(f"{q.denominator} is not invertible in {spec.spec_str()}")
    return spec.mul(num, den_inv)


class MultiPoly:
    __slots__ = ("spec", "vars", "terms")

    def __init__(self, spec: RingSpec, vars: tuple[str, ...], terms: dict, *, _canon: bool = True):
        self.spec = spec
        self.vars = tuple(vars)
        if _canon:
            clean = {}
            for e, c in terms.items():
                if len(e) != len(self.vars):
                    raise FrameMismatch(f"exponent {e} vs frame {self.vars}")
                c = spec.canon(c)
                if not spec.is_zero(c):
                    clean[tuple(e)] = c
            self.terms = clean
        else:
            self.terms = terms

    # constructors
    @classmethod
    def zero(cls, spec, vars):
        return cls(spec, vars, {}, _canon=False)

    @classmethod
    def const(cls, spec, vars, payload):
        payload = spec.canon(payload)
        if spec.is_zero(payload):
            return cls.zero(spec, vars)
        return cls(spec, vars, {(0,) * len(vars): payload}, _canon=False)

    @classmethod
    def from_int(cls, spec, vars, n: int):
        return cls.const(spec, vars, spec.from_int(n))

    @classmethod
    def var(cls, spec, vars, name: str):
        if name not in vars:
            raise FrameMismatch(f"{name!r} is not in frame {tuple(vars)}")
        e = tuple(1 if v == name else 0 for v in vars)
        return cls(spec, vars, {e: spec.one()}, _canon=False)

    @classmethod
    def monomial(cls, spec, vars, exps: tuple[int, ...], payload):
        return cls(spec, vars, {tuple(exps): payload})

    # structure
    def is_zero(self) -> bool:
        return all(self.spec.is_zero(c) for c in self.terms.values())

    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e in self.terms)

    def constant_payload(self) -> Payload:
        return self.terms.get((0,) * len(self.vars), self.spec.zero())

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        degs = [sum(e) for e, c in self.terms.items() if not self.spec.is_zero(c)]
        return max(degs) if degs else -1

    def degree_in(self, name: str) -> int:
        i = self._index(name)
        degs = [e[i] for e, c in self.terms.items() if not self.spec.is_zero(c)]
        return max(degs) if degs else -1

    def uses(self, name: str) -> bool:
        return self.degree_in(name) > 0

    def _index(self, name: str) -> int:
        try:
            return self.vars.index(name)
        except ValueError:
            raise FrameMismatch(f"{name!r} is not in frame {self.vars}") from None

    def _check(self, other: "MultiPoly"):
        if self.spec != other.spec:
            raise SpecMismatch(f"{self.spec.spec_str()} vs {other.spec.spec_str()}")
        if self.vars != other.vars:
            raise FrameMismatch(f"{self.vars} vs {other.vars}")

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        if isinstance(other, int):
            return MultiPoly.from_int(self.spec, self.vars, other)
        if isinstance(other, RingElem):
            if other.spec != self.spec:
                raise SpecMismatch(f"{other.spec.spec_str()} vs {self.spec.spec_str()}")
            return MultiPoly.const(self.spec, self.vars, other.payload)
        return NotImplemented

    # arithmetic
    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        spec = self.spec
        out = dict(self.terms)
        for e, c in o.terms.items():
            if e in out:
                s = spec.add(out[e], c)
                if spec.is_zero(s):
                    del out[e]
                else:
                    out[e] = s
            else:
                out[e] = c
        return MultiPoly(spec, self.vars, out, _canon=False)

    __radd__ = __add__

    def __neg__(self):
        spec = self.spec
        return MultiPoly(spec, self.vars, {e: spec.neg(c) for e, c in self.terms.items()}, _canon=False)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        spec = self.spec
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in o.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                p = spec.mul(c1, c2)
                if e in out:
                    p = spec.add(out[e], p)
                if spec.is_zero(p):
                    out.pop(e, None)
                else:
                    out[e] = p
        return MultiPoly(spec, self.vars, out, _canon=False)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power of a polynomial")
        result = MultiPoly.from_int(self.spec, self.vars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def scale(self, payload: Payload) -> "MultiPoly":
        spec = self.spec
        return MultiPoly(spec, self.vars, {e: spec.mul(payload, c) for e, c in self.terms.items()})

    def __eq__(self, other):
        if isinstance(other, (int, RingElem)):
            other = self._coerce(other)
        if not isinstance(other, MultiPoly):
            return NotImplemented
        if self.spec != other.spec or self.vars != other.vars:
            return False
        return (self - other).is_zero()

    __hash__ = None

    def __bool__(self):
        return not self.is_zero()

    # calculus
    def partial(self, name: str) -> "MultiPoly":
        i = self._index(name)
        spec = self.spec
        out = {}
        for e, c in self.terms.items():
            if e[i] == 0:
                continue
            d = spec.mul(spec.from_int(e[i]), c)
            if spec.is_zero(d):
                continue
            e2 = e[:i] + (e[i] - 1,) + e[i + 1:]
            out[e2] = spec.add(out[e2], d) if e2 in out else d
        return MultiPoly(spec, self.vars, out)

    def antiderivative(self, name: str) -> "MultiPoly":
        """Termwise integral in name with zero constant; needs 1/(k+1) in the ring."""
        i = self._index(name)
        spec = self.spec
        out = {}
        for e, c in self.terms.items():
            inv = spec.try_inverse(spec.from_int(e[i] + 1))
            if inv is None:
                raise NotQAlgebra(f"{e[i] + 1} is not invertible in {spec.spec_str()}")
            e2 = e[:i] + (e[i] + 1,) + e[i + 1:]
            out[e2] = spec.mul(inv, c)
        return MultiPoly(spec, self.vars, out)

    def homogeneous_components(self) -> dict[int, "MultiPoly"]:
        buckets: dict[int, dict] = {}
        for e, c in self.terms.items():
            buckets.setdefault(sum(e), {})[e] = c
        return {d: MultiPoly(self.spec, self.vars, t, _canon=False) for d, t in sorted(buckets.items())}

    def leading_form(self) -> "MultiPoly":
        comps = self.homogeneous_components()
        if not comps:
            return MultiPoly.zero(self.spec, self.vars)
        return comps[max(comps)]

    def coeffs_in(self, name: str) -> dict[int, "MultiPoly"]:
        """Coefficients as polynomials over the frame without name."""
        i = self._index(name)
        rest = self.vars[:i] + self.vars[i + 1:]
        buckets: dict[int, dict] = {}
        for e, c in self.terms.items():
            e2 = e[:i] + e[i + 1:]
            buckets.setdefault(e[i], {})[e2] = c
        return {k: MultiPoly(self.spec, rest, t, _canon=False) for k, t in sorted(buckets.items())}

    # substitution
    def substitute(self, images: dict[str, "MultiPoly"]) -> "MultiPoly":
        """Substitute polynomials for variables; unmapped variables map to
        themselves in the images' frame (which must then contain them)."""
        if not images:
            return self
        sample = next(iter(images.values()))
        spec, tvars = sample.spec, sample.vars
        if spec != self.spec:
            raise SpecMismatch("substitution images must share the coefficient ring")
        full = []
        for v in self.vars:
            img = images.get(v)
            if img is None:
                img = MultiPoly.var(spec, tvars, v)
            elif img.vars != tvars or img.spec != spec:
                raise FrameMismatch("substitution images must share one frame")
            full.append(img)
        maxexp = [0] * len(self.vars)
        for e in self.terms:
            for i, k in enumerate(e):
                if k > maxexp[i]:
                    maxexp[i] = k
        powers = []
        for i in range(len(self.vars)):
            row = [MultiPoly.from_int(spec, tvars, 1)]
            for _ in range(maxexp[i]):
                row.append(row[-1] * full[i])
            powers.append(row)
        acc = MultiPoly.zero(spec, tvars)
        for e, c in self.terms.items():
            term = MultiPoly.const(spec, tvars, c)
            for i, k in enumerate(e):
                if k:
                    term = term * powers[i][k]
            acc = acc + term
        return acc

    def specialize(self, assign: dict[str, Payload]) -> "MultiPoly":
        """Substitute ring payloads for some variables and drop them from the frame."""
        spec = self.spec
        idx = {self._index(v): spec.canon(p) for v, p in assign.items()}
        keep = [i for i in range(len(self.vars)) if i not in idx]
        new_vars = tuple(self.vars[i] for i in keep)
        out: dict = {}
        for e, c in self.terms.items():
            for i, p in idx.items():
                if e[i]:
                    c = spec.mul(c, ppow(spec, p, e[i]))
            e2 = tuple(e[i] for i in keep)
            out[e2] = spec.add(out[e2], c) if e2 in out else c
        return MultiPoly(spec, new_vars, out)

    def eval_payload(self, assign: dict[str, Payload]) -> Payload:
        if set(assign) != set(self.vars):
            raise FrameMismatch("evaluation must assign every variable")
        return self.specialize(assign).constant_payload()

    # frame and coefficient changes
    def embed(self, new_vars: Iterable[str]) -> "MultiPoly":
        new_vars = tuple(new_vars)
        pos = []
        for v in self.vars:
            if v not in new_vars:
                raise FrameMismatch(f"{v!r} missing from target frame {new_vars}")
            pos.append(new_vars.index(v))
        out = {}
        for e, c in self.terms.items():
            e2 = [0] * len(new_vars)
            for i, k in enumerate(e):
                e2[pos[i]] = k
            out[tuple(e2)] = c
        return MultiPoly(self.spec, new_vars, out, _canon=False)

    def rename(self, mapping: dict[str, str]) -> "MultiPoly":
        new_vars = tuple(mapping.get(v, v) for v in self.vars)
        if len(set(new_vars)) != len(new_vars):
            raise FrameMismatch(f"renaming collides: {new_vars}")
        return MultiPoly(self.spec, new_vars, dict(self.terms), _canon=False)

    def drop_vars(self, names: Iterable[str]) -> "MultiPoly":
        names = set(names)
        drop_idx = {self._index(v) for v in names}
        for e, c in self.terms.items():
            for i in drop_idx:
                if e[i] and not self.spec.is_zero(c):
                    raise FrameMismatch(f"polynomial still uses {self.vars[i]!r}")
        keep = [i for i in range(len(self.vars)) if i not in drop_idx]
        new_vars = tuple(self.vars[i] for i in keep)
        out = {tuple(e[i] for i in keep): c for e, c in self.terms.items()
               if not self.spec.is_zero(c)}
        return MultiPoly(self.spec, new_vars, out, _canon=False)

    def map_coeffs(self, fn: Callable[[Payload], Payload], new_spec: Optional[RingSpec] = None) -> "MultiPoly":
        spec = new_spec if new_spec is not None else self.spec
        out = {}
        for e, c in self.terms.items():
            c2 = spec.canon(fn(c))
            if not spec.is_zero(c2):
                out[e] = c2
        return MultiPoly(spec, self.vars, out, _canon=False)

    # printing
    def __str__(self):
        spec = self.spec
        items = [(e, c) for e, c in self.terms.items() if not spec.is_zero(c)]
        if not items:
            return "0"
        items.sort(key=lambda ec: (-sum(ec[0]), tuple(-k for k in ec[0])))
        parts = []
        one = spec.one()
        for e, c in items:
            mono = "*".join(
                v if k == 1 else f"{v}^{k}"
                for v, k in zip(self.vars, e) if k
            )
            cs = spec.elem_str(c)
            neg = cs.startswith("-")
            mag = cs[1:] if neg else cs
            if (" " in mag) or ("+" in mag) or ("-" in mag):
                mag = f"({cs})"
                neg = False
            if not mono:
                body = mag
            elif c == one or mag == "1":
                body = mono
            else:
                body = f"{mag}*{mono}"
            if not parts:
                parts.append(("-" if neg else "") + body)
            else:
                parts.append(("- " if neg else "+ ") + body)
        return " ".join(parts)

    def __repr__(self):
        return f"<{self} | {','.join(self.vars)} over {self.spec.spec_str()}>"


def convert_poly(p: MultiPoly, dst: RingSpec) -> MultiPoly:
    return p.map_coeffs(lambda c: convert_payload(p.spec, c, dst), dst)


def lift_poly(p: MultiPoly, dst: RingSpec) -> MultiPoly:
    return p.map_coeffs(lambda c: lift_payload(p.spec, c, dst), dst)


class _PolyAdapter(ExprAdapter):
    def __init__(self, spec: RingSpec, vars: tuple[str, ...]):
        self.spec = spec
        self.vars = tuple(vars)
        self.gens = spec.generators()

    def from_int(self, value):
        return MultiPoly.from_int(self.spec, self.vars, value)

    def from_name(self, name):
        if name in self.vars:
            return MultiPoly.var(self.spec, self.vars, name)
        if name in self.gens:
            return MultiPoly.const(self.spec, self.vars, self.gens[name])
        raise ParseError(f"unknown symbol {name!r} (frame {self.vars}, ring {self.spec.spec_str()})")

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def div(self, a, b):
        if not b.is_constant():
            raise ParseError("division is only allowed by constant units")
        inv = self.spec.try_inverse(b.constant_payload())
        if inv is None:
            raise ParseError(f"division by non-unit {b}")
        return a.scale(inv)

    def pow(self, a, k):
        return a ** k


def parse_poly(spec: RingSpec, vars: Iterable[str], text: str) -> MultiPoly:
    return parse_full(text, _PolyAdapter(spec, tuple(vars)))

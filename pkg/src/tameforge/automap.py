"""Polynomial maps in explicit variable frames, tame words, and certificates.

A PolyMap assigns one polynomial per frame variable; every variable is a
coordinate, so maps over coefficient rings like R[Z] are represented in the
widened frame with the scalar variables held fixed.  Composition follows one
global convention: (phi o psi)(X) = phi(psi(X)).  A TameWord is a sequence
of elementary / linear / translation generators; evaluate_word composes them
left to right, so [g1, g2, g3] means g1 o g2 o g3.
"""
from __future__ import annotations

from typing import Iterable, Optional, Sequence, Union

from .errors import (
    DimensionMismatch,
    FrameMismatch,
    NotElementary,
    NotOriginPreserving,
    SingularMatrix,
    SpecMismatch,
    UnsupportedHom,
    VerificationFailed,
)
from .multipoly import MultiPoly, convert_poly, parse_poly
from .rings import Payload, RingSpec, ppow


def fresh_names(existing: Iterable[str], stem: str, count: int) -> tuple[str, ...]:
    """count fresh identifiers stem1, stem2, ... avoiding existing names."""
    taken = set(existing)
    out = []
    i = 1
    while len(out) < count:
        cand = f"{stem}{i}"
        if cand not in taken:
            out.append(cand)
            taken.add(cand)
        i += 1
    return tuple(out)


# ---------------------------------------------------------------------------
# exact determinants and matrix inverses (division-free row expansion)


def _det_expand(rows, zero, add, sub, mul, one):
    n = len(rows)
    if n == 0:
        return one
    memo: dict[int, object] = {}

    def rec(row: int, mask: int):
        if row == n:
            return one
        if mask in memo:
            return memo[mask]
        acc = zero
        sign = True
        for j in range(n):
            bit = 1 << j
            if not mask & bit:
                continue
            term = mul(rows[row][j], rec(row + 1, mask & ~bit))
            acc = add(acc, term) if sign else sub(acc, term)
            sign = not sign
        memo[mask] = acc
        return acc

    return rec(0, (1 << n) - 1)


def payload_det(spec: RingSpec, rows: Sequence[Sequence[Payload]]) -> Payload:
    return _det_expand(rows, spec.zero(), spec.add, spec.sub, spec.mul, spec.one())


def poly_det(rows: Sequence[Sequence[MultiPoly]]) -> MultiPoly:
    probe = rows[0][0]
    zero = MultiPoly.zero(probe.spec, probe.vars)
    one = MultiPoly.from_int(probe.spec, probe.vars, 1)
    return _det_expand(rows, zero, lambda a, b: a + b, lambda a, b: a - b, lambda a, b: a * b, one)


def identity_matrix(spec: RingSpec, n: int) -> tuple:
    return tuple(
        tuple(spec.one() if i == j else spec.zero() for j in range(n)) for i in range(n)
    )


def matrix_mul(spec: RingSpec, a, b) -> tuple:
    n, m, k = len(a), len(b[0]) if b else 0, len(b)
    out = []
    for i in range(n):
        row = []
        for j in range(m):
            s = spec.zero()
            for l in range(k):
                s = spec.add(s, spec.mul(a[i][l], b[l][j]))
            row.append(s)
        out.append(tuple(row))
    return tuple(out)


def matrix_vec(spec: RingSpec, a, v) -> tuple:
    return tuple(
        _sum_payloads(spec, (spec.mul(a[i][j], v[j]) for j in range(len(v))))
        for i in range(len(a))
    )


def _sum_payloads(spec, items):
    s = spec.zero()
    for x in items:
        s = spec.add(s, x)
    return s


def matrix_minor(rows, i, j):
    return [
        [rows[r][c] for c in range(len(rows)) if c != j]
        for r in range(len(rows))
        if r != i
    ]


def matrix_inverse(spec: RingSpec, rows) -> tuple:
    """Exact inverse via the adjugate; the determinant must be a unit."""
    n = len(rows)
    det = payload_det(spec, rows)
    det_inv = spec.try_inverse(det)
    if det_inv is None:
        raise SingularMatrix(f"determinant {spec.elem_str(det)} is not a unit")
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            cof = payload_det(spec, matrix_minor(rows, j, i))
            if (i + j) % 2:
                cof = spec.neg(cof)
            row.append(spec.mul(det_inv, cof))
        out.append(tuple(row))
    return tuple(out)


def matrix_eq(spec: RingSpec, a, b) -> bool:
    return len(a) == len(b) and all(
        len(ra) == len(rb) and all(spec.eq(x, y) for x, y in zip(ra, rb))
        for ra, rb in zip(a, b)
    )


# ---------------------------------------------------------------------------
# polynomial maps


class PolyMap:
    __slots__ = ("spec", "vars", "coords")

    def __init__(self, spec: RingSpec, vars: tuple[str, ...], coords: Sequence[MultiPoly]):
        self.spec = spec
        self.vars = tuple(vars)
        coords = tuple(coords)
        if len(coords) != len(self.vars):
            raise DimensionMismatch(f"{len(coords)} coords for {len(self.vars)} variables")
        for c in coords:
            if c.spec != spec:
                raise SpecMismatch(f"{c.spec.spec_str()} vs {spec.spec_str()}")
            if c.vars != self.vars:
                raise FrameMismatch(f"{c.vars} vs {self.vars}")
        self.coords = coords

    @classmethod
    def identity(cls, spec, vars):
        vars = tuple(vars)
        return cls(spec, vars, tuple(MultiPoly.var(spec, vars, v) for v in vars))

    @classmethod
    def from_strings(cls, spec, vars, texts: Sequence[str]):
        vars = tuple(vars)
        return cls(spec, vars, tuple(parse_poly(spec, vars, t) for t in texts))

    def coord(self, name: str) -> MultiPoly:
        return self.coords[self.vars.index(name)]

    def images(self) -> dict[str, MultiPoly]:
        return dict(zip(self.vars, self.coords))

    def apply_to(self, p: MultiPoly) -> MultiPoly:
        """p composed with this map (substitute coordinates into p)."""
        return p.substitute(self.images())

    def is_identity(self) -> bool:
        return all(
            c == MultiPoly.var(self.spec, self.vars, v)
            for v, c in zip(self.vars, self.coords)
        )

    def with_coord(self, name: str, p: MultiPoly) -> "PolyMap":
        i = self.vars.index(name)
        coords = list(self.coords)
        coords[i] = p
        return PolyMap(self.spec, self.vars, coords)

    def __eq__(self, other):
        if not isinstance(other, PolyMap):
            return NotImplemented
        if self.spec != other.spec or self.vars != other.vars:
            return False
        return all(a == b for a, b in zip(self.coords, other.coords))

    __hash__ = None

    def __str__(self):
        inner = ", ".join(f"{v} -> {c}" for v, c in zip(self.vars, self.coords))
        return f"({inner})"

    def __repr__(self):
        return f"<PolyMap {self} over {self.spec.spec_str()}>"


def compose(phi: PolyMap, psi: PolyMap) -> PolyMap:
    """(phi o psi)(X) = phi(psi(X))."""
    if phi.spec != psi.spec:
        raise SpecMismatch(f"{phi.spec.spec_str()} vs {psi.spec.spec_str()}")
    if len(phi.vars) != len(psi.vars):
        raise DimensionMismatch(f"{len(phi.vars)} vs {len(psi.vars)}")
    if phi.vars != psi.vars:
        raise FrameMismatch(f"{phi.vars} vs {psi.vars}")
    images = psi.images()
    return PolyMap(phi.spec, phi.vars, tuple(c.substitute(images) for c in phi.coords))


def compose_all(maps: Sequence[PolyMap]) -> PolyMap:
    if not maps:
        raise DimensionMismatch("compose_all needs at least one map")
    acc = maps[0]
    for m in maps[1:]:
        acc = compose(acc, m)
    return acc


def jacobian_matrix(phi: PolyMap) -> list[list[MultiPoly]]:
    return [[c.partial(v) for v in phi.vars] for c in phi.coords]


def jacobian_det(phi: PolyMap) -> MultiPoly:
    return poly_det(jacobian_matrix(phi))


def stabilize(phi: PolyMap, extra: Union[int, Sequence[str]]) -> PolyMap:
    """Widen the frame by fresh variables on which the map is the identity."""
    if isinstance(extra, int):
        names = fresh_names(phi.vars, "W", extra)
    else:
        names = tuple(extra)
        for nm in names:
            if nm in phi.vars:
                raise FrameMismatch(f"{nm!r} already in frame {phi.vars}")
        if len(set(names)) != len(names):
            raise FrameMismatch(f"duplicate names in {names}")
    new_vars = phi.vars + names
    coords = [c.embed(new_vars) for c in phi.coords]
    coords += [MultiPoly.var(phi.spec, new_vars, nm) for nm in names]
    return PolyMap(phi.spec, new_vars, coords)


def shrink(phi: PolyMap, names: Sequence[str]) -> PolyMap:
    """Drop variables the map fixes and does not otherwise use."""
    names = tuple(names)
    for nm in names:
        if phi.coord(nm) != MultiPoly.var(phi.spec, phi.vars, nm):
            raise FrameMismatch(f"map does not fix {nm!r}")
    keep = [v for v in phi.vars if v not in names]
    coords = [phi.coord(v).drop_vars(names) for v in keep]
    return PolyMap(phi.spec, tuple(keep), coords)


def scalar_action(phi: PolyMap, t: Payload, graded_vars: Optional[Sequence[str]] = None) -> PolyMap:
    """Scale the degree-d homogeneous part by t^(d-1).

    Degrees are counted in graded_vars (default: the whole frame); the other
    frame variables must be held fixed by the map and stay fixed.
    """
    spec = phi.spec
    graded = set(graded_vars) if graded_vars is not None else set(phi.vars)
    gpos = [i for i, v in enumerate(phi.vars) if v in graded]
    coords = []
    for v, c in zip(phi.vars, phi.coords):
        if v not in graded:
            if c != MultiPoly.var(spec, phi.vars, v):
                raise NotOriginPreserving(f"coordinate {v} is not fixed by the map")
            coords.append(c)
            continue
        out = {}
        for e, coeff in c.terms.items():
            d = sum(e[i] for i in gpos)
            if d == 0:
                if not spec.is_zero(coeff):
                    raise NotOriginPreserving(f"coordinate {v} has a constant term")
                continue
            out[e] = spec.mul(ppow(spec, t, d - 1), coeff)
        coords.append(MultiPoly(spec, phi.vars, out))
    return PolyMap(spec, phi.vars, coords)


def base_change(phi: PolyMap, dst: RingSpec) -> PolyMap:
    """Coefficient-wise image under a supported ring homomorphism."""
    return PolyMap(dst, phi.vars, tuple(convert_poly(c, dst) for c in phi.coords))


def specialize_var(phi: PolyMap, name: str, value: Payload) -> PolyMap:
    """Send a fixed frame variable to a ring value and drop it from the frame."""
    spec = phi.spec
    if phi.coord(name) != MultiPoly.var(spec, phi.vars, name):
        raise UnsupportedHom(f"map does not fix {name!r}; specialization is not a homomorphism")
    keep = [v for v in phi.vars if v != name]
    coords = [phi.coord(v).specialize({name: value}) for v in keep]
    return PolyMap(spec, tuple(keep), coords)


def is_z_vanishing(phi: PolyMap, name: str) -> bool:
    """True iff the map fixes name and collapses to the identity at name = 0."""
    spec = phi.spec
    if phi.coord(name) != MultiPoly.var(spec, phi.vars, name):
        return False
    zero = spec.zero()
    for v in phi.vars:
        if v == name:
            continue
        img = phi.coord(v).specialize({name: zero})
        keep = tuple(w for w in phi.vars if w != name)
        if img != MultiPoly.var(spec, keep, v):
            return False
    return True


# ---------------------------------------------------------------------------
# tame generators and words


class ElemGen:
    """X_i -> X_i + f with f free of X_i."""

    __slots__ = ("var", "poly")

    def __init__(self, var: str, poly: MultiPoly):
        if poly.degree_in(var) > 0:
            raise NotElementary(f"addend for {var} must not involve {var}")
        self.var = var
        self.poly = poly

    def inverse(self) -> "ElemGen":
        return ElemGen(self.var, -self.poly)

    def __str__(self):
        return f"e[{self.var}]({self.poly})"


class LinGen:
    """X -> A X for an invertible matrix with a stored exact inverse."""

    __slots__ = ("spec", "matrix", "inv")

    def __init__(self, spec: RingSpec, matrix, inv=None):
        matrix = tuple(tuple(spec.canon(x) for x in row) for row in matrix)
        n = len(matrix)
        if any(len(row) != n for row in matrix):
            raise DimensionMismatch("linear generator matrix must be square")
        if inv is None:
            inv = matrix_inverse(spec, matrix)
        else:
            inv = tuple(tuple(spec.canon(x) for x in row) for row in inv)
            if not matrix_eq(spec, matrix_mul(spec, matrix, inv), identity_matrix(spec, n)):
                raise SingularMatrix("supplied inverse is not an inverse")
        self.spec = spec
        self.matrix = matrix
        self.inv = inv

    def inverse(self) -> "LinGen":
        out = LinGen.__new__(LinGen)
        out.spec = self.spec
        out.matrix = self.inv
        out.inv = self.matrix
        return out

    def __str__(self):
        rows = "; ".join(
            " ".join(self.spec.elem_str(x) for x in row) for row in self.matrix
        )
        return f"lin[{rows}]"


class TransGen:
    """X -> X + v."""

    __slots__ = ("spec", "vector")

    def __init__(self, spec: RingSpec, vector):
        self.spec = spec
        self.vector = tuple(spec.canon(x) for x in vector)

    def inverse(self) -> "TransGen":
        return TransGen(self.spec, tuple(self.spec.neg(x) for x in self.vector))

    def __str__(self):
        return f"shift[{', '.join(self.spec.elem_str(x) for x in self.vector)}]"


TameGen = Union[ElemGen, LinGen, TransGen]


def gen_to_map(gen: TameGen, spec: RingSpec, vars: tuple[str, ...]) -> PolyMap:
    ident = PolyMap.identity(spec, vars)
    if isinstance(gen, ElemGen):
        i = vars.index(gen.var)
        coords = list(ident.coords)
        coords[i] = coords[i] + gen.poly
        return PolyMap(spec, vars, coords)
    if isinstance(gen, LinGen):
        n = len(vars)
        if len(gen.matrix) != n:
            raise DimensionMismatch(f"matrix is {len(gen.matrix)}x{len(gen.matrix)}, frame has {n}")
        coords = []
        for i in range(n):
            c = MultiPoly.zero(spec, vars)
            for j in range(n):
                if not spec.is_zero(gen.matrix[i][j]):
                    c = c + MultiPoly.var(spec, vars, vars[j]).scale(gen.matrix[i][j])
            coords.append(c)
        return PolyMap(spec, vars, coords)
    if isinstance(gen, TransGen):
        if len(gen.vector) != len(vars):
            raise DimensionMismatch(f"vector length {len(gen.vector)}, frame has {len(vars)}")
        coords = [
            MultiPoly.var(spec, vars, v) + MultiPoly.const(spec, vars, gen.vector[i])
            for i, v in enumerate(vars)
        ]
        return PolyMap(spec, vars, coords)
    raise TypeError(f"not a tame generator: {gen!r}")


def _apply_gen_before(gen: TameGen, psi: PolyMap) -> PolyMap:
    """gen o psi, computed without a full generic substitution."""
    spec, vars = psi.spec, psi.vars
    if isinstance(gen, ElemGen):
        i = vars.index(gen.var)
        coords = list(psi.coords)
        coords[i] = coords[i] + gen.poly.substitute(psi.images())
        return PolyMap(spec, vars, coords)
    if isinstance(gen, LinGen):
        n = len(vars)
        if len(gen.matrix) != n:
            raise DimensionMismatch(f"matrix is {len(gen.matrix)}x{len(gen.matrix)}, frame has {n}")
        coords = []
        for i in range(n):
            c = MultiPoly.zero(spec, vars)
            for j in range(n):
                if not spec.is_zero(gen.matrix[i][j]):
                    c = c + psi.coords[j].scale(gen.matrix[i][j])
            coords.append(c)
        return PolyMap(spec, vars, coords)
    if isinstance(gen, TransGen):
        coords = [
            c + MultiPoly.const(spec, vars, gen.vector[i])
            for i, c in enumerate(psi.coords)
        ]
        return PolyMap(spec, vars, coords)
    raise TypeError(f"not a tame generator: {gen!r}")


class TameWord:
    __slots__ = ("spec", "vars", "gens")

    def __init__(self, spec: RingSpec, vars: tuple[str, ...], gens: Sequence[TameGen] = ()):
        self.spec = spec
        self.vars = tuple(vars)
        gens = tuple(gens)
        for g in gens:
            if isinstance(g, ElemGen):
                if g.poly.spec != spec:
                    raise SpecMismatch("generator coefficient ring differs from the word's")
                if g.poly.vars != self.vars:
                    raise FrameMismatch(f"{g.poly.vars} vs {self.vars}")
                if g.var not in self.vars:
                    raise FrameMismatch(f"{g.var!r} not in frame {self.vars}")
            elif isinstance(g, (LinGen, TransGen)):
                if g.spec != spec:
                    raise SpecMismatch("generator coefficient ring differs from the word's")
                size = len(g.matrix) if isinstance(g, LinGen) else len(g.vector)
                if size != len(self.vars):
                    raise DimensionMismatch(f"generator size {size}, frame has {len(self.vars)}")
            else:
                raise TypeError(f"not a tame generator: {g!r}")
        self.gens = gens

    def __len__(self):
        return len(self.gens)

    def __add__(self, other: "TameWord") -> "TameWord":
        if not isinstance(other, TameWord):
            return NotImplemented
        if self.spec != other.spec or self.vars != other.vars:
            raise FrameMismatch("cannot concatenate words over different frames")
        return TameWord(self.spec, self.vars, self.gens + other.gens)

    def inverse(self) -> "TameWord":
        return TameWord(self.spec, self.vars, tuple(g.inverse() for g in reversed(self.gens)))

    def conjugated_by(self, outer: "TameWord") -> "TameWord":
        """outer + self + outer^{-1}."""
        return outer + self + outer.inverse()

    def evaluate(self) -> PolyMap:
        acc = PolyMap.identity(self.spec, self.vars)
        for g in reversed(self.gens):
            acc = _apply_gen_before(g, acc)
        return acc

    def widen(self, new_vars: Sequence[str]) -> "TameWord":
        """The same word over a larger frame (new variables untouched)."""
        new_vars = tuple(new_vars)
        for v in self.vars:
            if v not in new_vars:
                raise FrameMismatch(f"{v!r} missing from {new_vars}")
        if [v for v in new_vars if v in self.vars] != list(self.vars):
            raise FrameMismatch("widening must preserve the order of existing variables")
        spec = self.spec
        n_new = len(new_vars)
        pos = {v: new_vars.index(v) for v in self.vars}
        gens = []
        for g in self.gens:
            if isinstance(g, ElemGen):
                gens.append(ElemGen(g.var, g.poly.embed(new_vars)))
            elif isinstance(g, LinGen):
                mat = [[spec.one() if i == j else spec.zero() for j in range(n_new)] for i in range(n_new)]
                inv = [[spec.one() if i == j else spec.zero() for j in range(n_new)] for i in range(n_new)]
                for a, va in enumerate(self.vars):
                    for b, vb in enumerate(self.vars):
                        mat[pos[va]][pos[vb]] = g.matrix[a][b]
                        inv[pos[va]][pos[vb]] = g.inv[a][b]
                gens.append(LinGen(spec, mat, inv))
            else:
                vec = [spec.zero()] * n_new
                for a, va in enumerate(self.vars):
                    vec[pos[va]] = g.vector[a]
                gens.append(TransGen(spec, vec))
        return TameWord(spec, new_vars, gens)

    def __str__(self):
        return " . ".join(str(g) for g in self.gens) if self.gens else "id"


def word_base_change(word: TameWord, dst: RingSpec) -> TameWord:
    """Image of a word under a coefficient homomorphism, generator by generator."""
    from .rings import convert_payload

    gens = []
    for g in word.gens:
        if isinstance(g, ElemGen):
            gens.append(ElemGen(g.var, convert_poly(g.poly, dst)))
        elif isinstance(g, LinGen):
            mat = tuple(tuple(convert_payload(word.spec, x, dst) for x in row) for row in g.matrix)
            inv = tuple(tuple(convert_payload(word.spec, x, dst) for x in row) for row in g.inv)
            gens.append(LinGen(dst, mat, inv))
        else:
            gens.append(TransGen(dst, tuple(convert_payload(word.spec, x, dst) for x in g.vector)))
    return TameWord(dst, word.vars, gens)


def evaluate_word(word: TameWord) -> PolyMap:
    return word.evaluate()


def inverse_word(word: TameWord) -> TameWord:
    return word.inverse()


# ---------------------------------------------------------------------------
# certificates


class Certificate:
    """A tame word claimed to equal the target after stabilization."""

    __slots__ = ("target", "added_vars", "word", "provenance")

    def __init__(self, target: PolyMap, added_vars: Sequence[str], word: TameWord, provenance: str = ""):
        added_vars = tuple(added_vars)
        if word.spec != target.spec:
            raise SpecMismatch("certificate word and target must share the ring")
        if word.vars != target.vars + added_vars:
            raise FrameMismatch(
                f"word frame {word.vars} must be target frame {target.vars} plus {added_vars}"
            )
        self.target = target
        self.added_vars = added_vars
        self.word = word
        self.provenance = provenance

    @property
    def stabilize_by(self) -> int:
        return len(self.added_vars)


class VerifyReport:
    __slots__ = ("passed", "coordinate", "monomial", "expected", "got", "message")

    def __init__(self, passed, coordinate=None, monomial=None, expected=None, got=None, message=""):
        self.passed = passed
        self.coordinate = coordinate
        self.monomial = monomial
        self.expected = expected
        self.got = got
        self.message = message

    def __bool__(self):
        return self.passed

    def __str__(self):
        return self.message


def _first_monomial(p: MultiPoly) -> str:
    items = [(e, c) for e, c in p.terms.items() if not p.spec.is_zero(c)]
    items.sort(key=lambda ec: (-sum(ec[0]), tuple(-k for k in ec[0])))
    e = items[0][0]
    mono = "*".join(v if k == 1 else f"{v}^{k}" for v, k in zip(p.vars, e) if k)
    return mono if mono else "1"


def verify_certificate(cert: Certificate) -> VerifyReport:
    expected = stabilize(cert.target, cert.added_vars)
    got = cert.word.evaluate()
    for v, e_coord, g_coord in zip(expected.vars, expected.coords, got.coords):
        diff = g_coord - e_coord
        if not diff.is_zero():
            mono = _first_monomial(diff)
            return VerifyReport(
                False,
                coordinate=v,
                monomial=mono,
                expected=str(e_coord),
                got=str(g_coord),
                message=(
                    f"FAIL at coordinate {v}, monomial {mono}: "
                    f"expected {e_coord}, got {g_coord}"
                ),
            )
    return VerifyReport(True, message="PASS")


def check_word_equals(word: TameWord, target: PolyMap, context: str = "") -> None:
    """Internal guard: raise VerificationFailed unless the word composes to target."""
    cert = Certificate(target, (), word, context)
    report = verify_certificate(cert)
    if not report.passed:
        where = f" [{context}]" if context else ""
        raise VerificationFailed(report.message + where)

"""Exact arithmetic over the supported coefficient rings.

A ring is described by a ``RingSpec``; elements are ``RingElem`` wrappers
around canonical payloads.  Supported rings: the rationals, the integers,
integers mod n, univariate polynomial rings over any supported base,
quotients of those by a principal modulus with unit leading coefficient,
and localizations at a single element.  All arithmetic is exact; there is
no floating point anywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional

from .errors import (
    BoundExceeded,
    NotADomain,
    NotDivisible,
    ParseError,
    SpecMismatch,
    UndecidableEquality,
    UnsupportedHom,
)
from .grammar import ExprAdapter, TokenStream, parse_expression, parse_full, tokenize

Payload = Any

DEFAULT_SEARCH_BOUND = 64


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def factorize(n: int) -> dict[int, int]:
    """Prime factorization by trial division; moduli here are small."""
    out: dict[int, int] = {}
    d = 2
    while d * d <= n:
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 1
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


class RingSpec:
    """Ring description plus payload-level exact arithmetic."""

    kind = "abstract"

    # structure queries
    def qalgebra(self) -> bool:
        raise NotImplementedError

    def is_domain(self) -> bool:
        raise NotImplementedError

    def is_field(self) -> bool:
        return False

    def generators(self) -> dict[str, Payload]:
        """Named ring generators (e.g. the T of Q[T]) as payloads."""
        return {}

    # arithmetic on payloads
    def zero(self) -> Payload:
        raise NotImplementedError

    def one(self) -> Payload:
        return self.from_int(1)

    def from_int(self, n: int) -> Payload:
        raise NotImplementedError

    def canon(self, p: Payload) -> Payload:
        raise NotImplementedError

    def add(self, a: Payload, b: Payload) -> Payload:
        raise NotImplementedError

    def neg(self, a: Payload) -> Payload:
        raise NotImplementedError

    def sub(self, a: Payload, b: Payload) -> Payload:
        return self.add(a, self.neg(b))

    def mul(self, a: Payload, b: Payload) -> Payload:
        raise NotImplementedError

    def is_zero(self, a: Payload) -> bool:
        raise NotImplementedError

    def eq(self, a: Payload, b: Payload) -> bool:
        return self.is_zero(self.sub(a, b))

    def try_inverse(self, a: Payload) -> Optional[Payload]:
        raise NotImplementedError

    def try_divide(self, a: Payload, b: Payload) -> Optional[Payload]:
        """Some solution of b*x = a, or None when there is none (or unknown)."""
        inv = self.try_inverse(b)
        if inv is None:
            return None
        return self.mul(a, inv)

    def nilpotency_index(self, a: Payload, bound: int = DEFAULT_SEARCH_BOUND) -> Optional[int]:
        """Least D with a^D = 0, or None when a is not nilpotent."""
        raise NotImplementedError

    def elem_str(self, a: Payload) -> str:
        raise NotImplementedError

    def spec_str(self) -> str:
        raise NotImplementedError

    def random_elem(self, rng) -> Payload:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.spec_str()


def ppow(spec: RingSpec, a: Payload, k: int) -> Payload:
    if k < 0:
        raise ValueError("negative exponent on a ring payload")
    result = spec.one()
    base = a
    while k:
        if k & 1:
            result = spec.mul(result, base)
        base = spec.mul(base, base)
        k >>= 1
    return result


@dataclass(frozen=True)
class Rationals(RingSpec):
    kind = "rationals"

    def qalgebra(self):
        return True

    def is_domain(self):
        return True

    def is_field(self):
        return True

    def zero(self):
        return Fraction(0)

    def from_int(self, n):
        return Fraction(n)

    def canon(self, p):
        return p if type(p) is Fraction else Fraction(p)

    def add(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def is_zero(self, a):
        return a == 0

    def try_inverse(self, a):
        return None if a == 0 else 1 / Fraction(a)

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        return 1 if a == 0 else None

    def elem_str(self, a):
        return str(a)

    def spec_str(self):
        return "Q"

    def random_elem(self, rng):
        return Fraction(rng.randint(-4, 4), rng.randint(1, 3))


@dataclass(frozen=True)
class Integers(RingSpec):
    kind = "integers"

    def qalgebra(self):
        return False

    def is_domain(self):
        return True

    def zero(self):
        return 0

    def from_int(self, n):
        return int(n)

    def canon(self, p):
        return int(p)

    def add(self, a, b):
        return a + b

    def neg(self, a):
        return -a

    def mul(self, a, b):
        return a * b

    def is_zero(self, a):
        return a == 0

    def try_inverse(self, a):
        return a if a in (1, -1) else None

    def try_divide(self, a, b):
        if b == 0:
            return None
        q, r = divmod(a, b)
        return q if r == 0 else None

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        return 1 if a == 0 else None

    def elem_str(self, a):
        return str(a)

    def spec_str(self):
        return "Z"

    def random_elem(self, rng):
        return rng.randint(-6, 6)


@dataclass(frozen=True)
class ModularIntegers(RingSpec):
    modulus: int
    kind = "modular"

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError("modulus must be at least 2")

    def qalgebra(self):
        return False

    def is_domain(self):
        return _is_prime(self.modulus)

    def is_field(self):
        return _is_prime(self.modulus)

    def zero(self):
        return 0

    def from_int(self, n):
        return n % self.modulus

    def canon(self, p):
        return p % self.modulus

    def add(self, a, b):
        return (a + b) % self.modulus

    def neg(self, a):
        return (-a) % self.modulus

    def mul(self, a, b):
        return (a * b) % self.modulus

    def is_zero(self, a):
        return a % self.modulus == 0

    def try_inverse(self, a):
        try:
            return pow(a, -1, self.modulus)
        except ValueError:
            return None

    def try_divide(self, a, b):
        g = math.gcd(b, self.modulus)
        if a % g:
            return None
        m = self.modulus // g
        if m == 1:
            return 0
        return ((a // g) * pow(b // g, -1, m)) % self.modulus

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        # a^k mod n stabilizes to 0 within bit_length(n) steps when nilpotent
        cur = a % self.modulus
        if cur == 0:
            return 1
        for k in range(2, self.modulus.bit_length() + 2):
            cur = (cur * a) % self.modulus
            if cur == 0:
                return k
        return None

    def elem_str(self, a):
        return str(a % self.modulus)

    def spec_str(self):
        return f"Z/{self.modulus}"

    def random_elem(self, rng):
        return rng.randrange(self.modulus)


# ---------------------------------------------------------------------------
# tuple-of-coefficients helpers shared by UnivariatePoly and Quotient


def _tup_canon(base: RingSpec, coeffs) -> tuple:
    out = [base.canon(c) for c in coeffs]
    while out and base.is_zero(out[-1]):
        out.pop()
    return tuple(out)


def _tup_add(base, a, b):
    n = max(len(a), len(b))
    z = base.zero()
    out = []
    for i in range(n):
        x = a[i] if i < len(a) else z
        y = b[i] if i < len(b) else z
        out.append(base.add(x, y))
    return _tup_canon(base, out)


def _tup_neg(base, a):
    return tuple(base.neg(c) for c in a)


def _tup_mul(base, a, b):
    if not a or not b:
        return ()
    if len(a) > len(b):
        a, b = b, a
    nz = [i for i, x in enumerate(a) if not base.is_zero(x)]
    if not nz:
        return ()
    z = base.zero()
    if len(nz) == 1:
        # single-term factor acts by shift and scale
        i = nz[0]
        x = a[i]
        return _tup_canon(base, [z] * i + [base.mul(x, y) for y in b])
    out = [z] * (len(a) + len(b) - 1)
    for i in nz:
        x = a[i]
        for j, y in enumerate(b):
            out[i + j] = base.add(out[i + j], base.mul(x, y))
    return _tup_canon(base, out)


def _tup_scale(base, c, a):
    return _tup_canon(base, [base.mul(c, x) for x in a])


def _tup_divmod_monic(base, a, m):
    """Divide by a monic modulus; always exact in the remainder sense."""
    rem = list(a)
    quo = [base.zero()] * max(0, len(a) - len(m) + 1)
    d = len(m) - 1
    while len(rem) > d:
        while rem and base.is_zero(rem[-1]):
            rem.pop()
        if len(rem) <= d:
            break
        lead = rem[-1]
        k = len(rem) - 1 - d
        quo[k] = base.add(quo[k], lead)
        for i in range(len(m)):
            rem[k + i] = base.sub(rem[k + i], base.mul(lead, m[i]))
        rem.pop()
    return _tup_canon(base, quo), _tup_canon(base, rem)


def _tup_try_divide(base, a, b):
    """Exact quotient a/b in base[x], or None."""
    if not b:
        return None
    if not a:
        return ()
    nzb = [i for i, x in enumerate(b) if not base.is_zero(x)]
    if not nzb:
        return None
    if len(nzb) == 1:
        # single-term divisor: strip the shift, divide coefficientwise
        i = nzb[0]
        lead = b[i]
        if any(not base.is_zero(c) for c in a[:i]):
            return None
        quo = []
        for c in a[i:]:
            q0 = base.try_divide(c, lead)
            if q0 is None:
                return None
            quo.append(q0)
        return _tup_canon(base, quo)
    rem = list(a)
    quo = [base.zero()] * max(0, len(a) - len(b) + 1)
    while len(rem) >= len(b):
        while rem and base.is_zero(rem[-1]):
            rem.pop()
        if len(rem) < len(b):
            break
        q0 = base.try_divide(rem[-1], b[-1])
        if q0 is None:
            return None
        k = len(rem) - len(b)
        quo[k] = base.add(quo[k], q0)
        for i in range(len(b)):
            rem[k + i] = base.sub(rem[k + i], base.mul(q0, b[i]))
        rem.pop()
    if _tup_canon(base, rem):
        return None
    return _tup_canon(base, quo)


def _tup_ext_gcd(base, a, b):
    """Extended gcd over base[x] with base a field; returns monic (g, u, v)."""
    r0, r1 = _tup_canon(base, a), _tup_canon(base, b)
    u0, u1 = (base.one(),), ()
    v0, v1 = (), (base.one(),)
    while r1:
        inv = base.try_inverse(r1[-1])
        q, r = _tup_divmod_monic(base, r0, _tup_scale(base, inv, r1))
        q = _tup_scale(base, inv, q)
        r0, r1 = r1, r
        u0, u1 = u1, _tup_add(base, u0, _tup_neg(base, _tup_mul(base, q, u1)))
        v0, v1 = v1, _tup_add(base, v0, _tup_neg(base, _tup_mul(base, q, v1)))
    if r0:
        inv = base.try_inverse(r0[-1])
        r0 = _tup_scale(base, inv, r0)
        u0 = _tup_scale(base, inv, u0)
        v0 = _tup_scale(base, inv, v0)
    return r0, u0, v0


def _tup_str(base, a, var: str) -> str:
    if not a:
        return "0"
    parts = []
    for k in range(len(a) - 1, -1, -1):
        c = a[k]
        if base.is_zero(c):
            continue
        cs = base.elem_str(c)
        neg = cs.startswith("-")
        mag = cs[1:] if neg else cs
        composite = (" " in mag) or ("+" in mag) or ("-" in mag)
        if composite:
            mag = f"({cs})"
            neg = False
        if k == 0:
            body = mag
        else:
            xs = var if k == 1 else f"{var}^{k}"
            body = xs if mag == "1" else f"{mag}*{xs}"
        if not parts:
            parts.append(("-" if neg else "") + body)
        else:
            parts.append(("- " if neg else "+ ") + body)
    return " ".join(parts) if parts else "0"


@dataclass(frozen=True)
class UnivariatePoly(RingSpec):
    base: RingSpec
    var: str
    kind = "univariate"

    def __post_init__(self):
        if not self.var.isidentifier():
            raise ValueError(f"bad variable name {self.var!r}")
        if self.var in self.base.generators():
            raise ValueError(f"variable {self.var!r} shadows a base generator")

    def qalgebra(self):
        return self.base.qalgebra()

    def is_domain(self):
        return self.base.is_domain()

    def generators(self):
        out = {}
        for name, g in self.base.generators().items():
            out[name] = (g,)
        out[self.var] = (self.base.zero(), self.base.one())
        return out

    def zero(self):
        return ()

    def from_int(self, n):
        c = self.base.from_int(n)
        return (c,) if not self.base.is_zero(c) else ()

    def canon(self, p):
        return _tup_canon(self.base, p)

    def add(self, a, b):
        return _tup_add(self.base, a, b)

    def neg(self, a):
        return _tup_neg(self.base, a)

    def mul(self, a, b):
        return _tup_mul(self.base, a, b)

    def is_zero(self, a):
        return not _tup_canon(self.base, a)

    def degree(self, a) -> int:
        return len(_tup_canon(self.base, a)) - 1

    def try_inverse(self, a):
        a = self.canon(a)
        if not a:
            return None
        if self.base.is_domain():
            if len(a) > 1:
                return None
            inv = self.base.try_inverse(a[0])
            return None if inv is None else (inv,)
        c_inv = self.base.try_inverse(a[0])
        if c_inv is None:
            return None
        for c in a[1:]:
            if self.base.nilpotency_index(c) is None:
                return None
        # geometric series against the nilpotent tail
        s = self.sub(self.one(), _tup_scale(self.base, c_inv, a))
        acc, term = self.one(), self.one()
        for _ in range(DEFAULT_SEARCH_BOUND):
            term = self.mul(term, s)
            if not term:
                return _tup_scale(self.base, c_inv, acc)
            acc = self.add(acc, term)
        raise BoundExceeded("inverse series did not terminate")

    def try_divide(self, a, b):
        return _tup_try_divide(self.base, self.canon(a), self.canon(b))

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        a = self.canon(a)
        if not a:
            return 1
        indices = []
        for c in a:
            e = self.base.nilpotency_index(c, bound)
            if e is None:
                return None
            indices.append(e)
        # by pigeonhole a^K = 0 once K exceeds the sum of coefficient indices
        kmax = 1 + sum(e - 1 for e in indices)
        cur = a
        for k in range(1, kmax + 2):
            if not cur:
                return k
            cur = self.mul(cur, a)
        raise BoundExceeded("nilpotency search over polynomial ring")

    def elem_str(self, a):
        return _tup_str(self.base, self.canon(a), self.var)

    def spec_str(self):
        return f"{self.base.spec_str()}[{self.var}]"

    def random_elem(self, rng):
        deg = rng.randint(0, 2)
        return self.canon(tuple(self.base.random_elem(rng) for _ in range(deg + 1)))


@dataclass(frozen=True)
class Quotient(RingSpec):
    """base[var]/(modulus) with a monic modulus of degree >= 1."""

    up: UnivariatePoly
    modulus: tuple
    kind = "quotient"

    def __post_init__(self):
        m = _tup_canon(self.up.base, self.modulus)
        if len(m) < 2:
            raise ValueError("modulus must have degree at least 1")
        if not self.up.base.eq(m[-1], self.up.base.one()):
            raise ValueError("modulus must be monic (normalize before constructing)")
        object.__setattr__(self, "modulus", m)
        object.__setattr__(self, "_power",
                           all(self.up.base.is_zero(c) for c in m[:-1]))

    @property
    def degree_bound(self) -> int:
        return len(self.modulus) - 1

    def is_power_modulus(self) -> bool:
        return self._power

    def is_squarefree_modulus(self) -> bool:
        if not self.up.base.is_field():
            return False
        m = self.modulus
        dm = tuple(
            self.up.base.mul(self.up.base.from_int(k), m[k]) for k in range(1, len(m))
        )
        g, _, _ = _tup_ext_gcd(self.up.base, m, _tup_canon(self.up.base, dm))
        return len(g) == 1

    def qalgebra(self):
        return self.up.qalgebra()

    def is_domain(self):
        return self.degree_bound == 1 and self.up.base.is_domain()

    def is_field(self):
        return self.degree_bound == 1 and self.up.base.is_field()

    def generators(self):
        return {name: self.canon(g) for name, g in self.up.generators().items()}

    def zero(self):
        return ()

    def from_int(self, n):
        return self.canon(self.up.from_int(n))

    def canon(self, p):
        base = self.up.base
        # a power modulus reduces by truncation, no division needed
        if self._power:
            out = [base.canon(c) for c in p[: self.degree_bound]]
            while out and base.is_zero(out[-1]):
                out.pop()
            return tuple(out)
        p = _tup_canon(base, p)
        if len(p) <= self.degree_bound:
            return p
        _, r = _tup_divmod_monic(base, p, self.modulus)
        return r

    def add(self, a, b):
        return self.canon(self.up.add(a, b))

    def neg(self, a):
        return self.canon(self.up.neg(a))

    def mul(self, a, b):
        if self._power:
            base = self.up.base
            d = self.degree_bound
            if not a or not b:
                return ()
            out = [base.zero()] * min(len(a) + len(b) - 1, d)
            for i, x in enumerate(a[:d]):
                if base.is_zero(x):
                    continue
                for j, y in enumerate(b[: d - i]):
                    out[i + j] = base.add(out[i + j], base.mul(x, y))
            while out and base.is_zero(out[-1]):
                out.pop()
            return tuple(out)
        return self.canon(self.up.mul(a, b))

    def is_zero(self, a):
        return not self.canon(a)

    def try_inverse(self, a):
        a = self.canon(a)
        if not a:
            return None
        if self.up.base.is_field():
            g, u, _ = _tup_ext_gcd(self.up.base, a, self.modulus)
            if len(g) != 1:
                return None
            return self.canon(u)
        if self.is_power_modulus():
            c_inv = self.up.base.try_inverse(a[0])
            if c_inv is None:
                return None
            s = self.sub(self.one(), _tup_scale(self.up.base, c_inv, a))
            acc, term = self.one(), self.one()
            for _ in range(self.degree_bound + 1):
                term = self.mul(term, s)
                if not term:
                    return self.canon(_tup_scale(self.up.base, c_inv, acc))
                acc = self.add(acc, term)
        raise UndecidableEquality(
            f"unit test not supported over {self.spec_str()}"
        )

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        a = self.canon(a)
        if not a:
            return 1
        if self.up.base.is_field() and self.is_squarefree_modulus():
            return None
        if self.is_power_modulus():
            # nilpotent iff the constant term is nilpotent in the base;
            # the index is then at most e0 + degree_bound by pigeonhole
            e0 = self.up.base.nilpotency_index(a[0], bound)
            if e0 is None:
                return None
            kmax = e0 + self.degree_bound
            cur = a
            for k in range(1, kmax + 1):
                if not cur:
                    return k
                cur = self.mul(cur, a)
            raise BoundExceeded("nilpotency search over quotient ring")
        cur = a
        for k in range(1, bound + 1):
            if not cur:
                return k
            cur = self.mul(cur, a)
        raise BoundExceeded("nilpotency search over quotient ring")

    def elem_str(self, a):
        return _tup_str(self.up.base, self.canon(a), self.up.var)

    def spec_str(self):
        return f"{self.up.spec_str()}/({_tup_str(self.up.base, self.modulus, self.up.var)})"

    def random_elem(self, rng):
        return self.canon(self.up.random_elem(rng))


@dataclass(frozen=True)
class Localization(RingSpec):
    """base[1/t]; payloads are (numerator, k) meaning numerator / t^k.

    Over a domain the exponent is kept minimal, giving canonical forms.
    Over a non-domain equality falls back to an annihilator search bounded
    by ``search_bound``.
    """

    base: RingSpec
    t: Payload
    search_bound: int = field(default=DEFAULT_SEARCH_BOUND, compare=False)
    kind = "localization"

    def __post_init__(self):
        if self.base.is_zero(self.t):
            raise ValueError("cannot localize at zero")
        if isinstance(self.base, Localization):
            raise ValueError("collapse nested localizations before constructing")
        object.__setattr__(self, "_tpow_cache", {0: self.base.one()})
        object.__setattr__(self, "_domain", self.base.is_domain())

    def _tpow(self, k: int) -> Payload:
        cache = self._tpow_cache
        got = cache.get(k)
        if got is None:
            j = k - 1
            while j not in cache:
                j -= 1
            got = cache[j]
            while j < k:
                got = self.base.mul(got, self.t)
                j += 1
                cache[j] = got
        return got

    def qalgebra(self):
        return self.base.qalgebra()

    def is_domain(self):
        return self.base.is_domain()

    def generators(self):
        return {name: (g, 0) for name, g in self.base.generators().items()}

    def zero(self):
        return (self.base.zero(), 0)

    def from_int(self, n):
        return (self.base.from_int(n), 0)

    def t_elem(self) -> Payload:
        return (self.t, 0)

    def t_inverse(self, k: int = 1) -> Payload:
        return self.canon((self.base.one(), k))

    def canon(self, p):
        num, k = p
        num = self.base.canon(num)
        if self.base.is_zero(num):
            return (self.base.zero(), 0)
        if self._domain:
            while k > 0:
                q = self.base.try_divide(num, self.t)
                if q is None:
                    break
                num, k = q, k - 1
        return (num, k)

    def add(self, a, b):
        (p, j), (q, k) = a, b
        if j == k:
            return self.canon((self.base.add(p, q), j))
        # bring the lower-pole term up instead of cross-multiplying both
        if j < k:
            num = self.base.add(self.base.mul(p, self._tpow(k - j)), q)
            return self.canon((num, k))
        num = self.base.add(p, self.base.mul(q, self._tpow(j - k)))
        return self.canon((num, j))

    def neg(self, a):
        return (self.base.neg(a[0]), a[1])

    def mul(self, a, b):
        return self.canon((self.base.mul(a[0], b[0]), a[1] + b[1]))

    def is_zero(self, a):
        num = self.base.canon(a[0])
        if self.base.is_domain():
            return self.base.is_zero(num)
        # a/t^k = 0 iff some t^N kills the numerator; a repeating orbit
        # that never hits zero settles the question in the negative
        cur = num
        seen = set()
        for _ in range(self.search_bound + 1):
            if self.base.is_zero(cur):
                return True
            try:
                if cur in seen:
                    return False
                seen.add(cur)
            except TypeError:
                pass
            cur = self.base.mul(cur, self.t)
        raise UndecidableEquality(
            f"zero test exceeded annihilator bound {self.search_bound}"
        )

    def t_order(self, a) -> int:
        """Least n >= 0 with t^n * a integral; canonical over domains only."""
        if not self.base.is_domain():
            raise NotADomain("t-order is only defined over a domain base")
        return self.canon(a)[1]

    def integral_part(self, a) -> Payload:
        """The base-ring value of an element of t-order zero."""
        num, k = self.canon(a)
        if k != 0:
            raise NotDivisible(f"element has pole order {k}, not integral")
        return num

    def try_inverse(self, a):
        num, k = self.canon(a)
        if self.base.is_domain():
            if self.base.is_zero(num):
                return None
            j, m = 0, num
            while True:
                q = self.base.try_divide(m, self.t)
                if q is None:
                    break
                m, j = q, j + 1
            m_inv = self.base.try_inverse(m)
            if m_inv is None:
                return None
            return self.canon((self.base.mul(m_inv, ppow(self.base, self.t, k)), j))
        try:
            if self.is_zero((num, 0)):
                if self.is_zero((self.base.one(), 0)):
                    return self.zero()  # the zero ring: everything is invertible
                return None
        except UndecidableEquality:
            pass
        # num/t^k is a unit iff num * x = t^j is solvable for some j
        for j in range(self.search_bound + 1):
            x = self.base.try_divide(ppow(self.base, self.t, j), num)
            if x is not None:
                return self.canon((self.base.mul(x, ppow(self.base, self.t, k)), j))
        raise UndecidableEquality("unit test over a localized non-domain")

    def nilpotency_index(self, a, bound=DEFAULT_SEARCH_BOUND):
        if self.base.is_domain():
            return 1 if self.is_zero(a) else None
        cur = a
        for k in range(1, bound + 1):
            if self.is_zero(cur):
                return k
            cur = self.mul(cur, a)
        raise BoundExceeded("nilpotency search over localized ring")

    def elem_str(self, a):
        num, k = a
        ns = self.base.elem_str(num)
        if k == 0:
            return ns
        if (" " in ns) or ("+" in ns) or ("-" in ns[1:]) or ns.startswith("-") or "*" in ns or "/" in ns:
            ns = f"({ns})"
        ts = self.base.elem_str(self.t)
        if (" " in ts) or ("+" in ts) or ("-" in ts[1:]) or "*" in ts or "^" in ts or "/" in ts:
            ts = f"({ts})"
        return f"{ns}/{ts}" if k == 1 else f"{ns}/{ts}^{k}"

    def spec_str(self):
        return f"loc({self.base.spec_str()}, {self.base.elem_str(self.t)})"

    def random_elem(self, rng):
        return self.canon((self.base.random_elem(rng), rng.randint(0, 2)))


# ---------------------------------------------------------------------------
# elements


class RingElem:
    """An element of a ring, kept in canonical form."""

    __slots__ = ("spec", "payload")

    def __init__(self, spec: RingSpec, payload: Payload, *, _canon: bool = True):
        self.spec = spec
        self.payload = spec.canon(payload) if _canon else payload

    def _coerce(self, other) -> "RingElem":
        if isinstance(other, RingElem):
            if other.spec != self.spec:
                raise SpecMismatch(f"{other.spec} vs {self.spec}")
            return other
        if isinstance(other, int):
            return RingElem(self.spec, self.spec.from_int(other), _canon=False)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RingElem(self.spec, self.spec.add(self.payload, o.payload), _canon=False)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RingElem(self.spec, self.spec.sub(self.payload, o.payload), _canon=False)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RingElem(self.spec, self.spec.sub(o.payload, self.payload), _canon=False)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RingElem(self.spec, self.spec.mul(self.payload, o.payload), _canon=False)

    __rmul__ = __mul__

    def __neg__(self):
        return RingElem(self.spec, self.spec.neg(self.payload), _canon=False)

    def __pow__(self, k: int):
        return RingElem(self.spec, ppow(self.spec, self.payload, k), _canon=False)

    def __eq__(self, other):
        if isinstance(other, int):
            other = RingElem(self.spec, self.spec.from_int(other), _canon=False)
        if not isinstance(other, RingElem):
            return NotImplemented
        if other.spec != self.spec:
            return False
        return self.spec.eq(self.payload, other.payload)

    __hash__ = None  # equality over localized non-domains is not hash-stable

    def __bool__(self):
        return not self.spec.is_zero(self.payload)

    def __str__(self):
        return self.spec.elem_str(self.payload)

    def __repr__(self):
        return f"<{self} : {self.spec.spec_str()}>"

    def inverse(self) -> Optional["RingElem"]:
        inv = self.spec.try_inverse(self.payload)
        return None if inv is None else RingElem(self.spec, inv, _canon=False)


def ring_arith(a: RingElem, b: RingElem, op: str) -> RingElem:
    """Convenience dispatcher; the operators on RingElem are the primary API."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


def is_unit(a: RingElem) -> bool:
    return a.spec.try_inverse(a.payload) is not None


def is_nilpotent(a: RingElem, bound: int = DEFAULT_SEARCH_BOUND) -> Optional[int]:
    """Least D with a^D = 0, or None."""
    return a.spec.nilpotency_index(a.payload, bound)


def t_order(a: RingElem) -> int:
    if not isinstance(a.spec, Localization):
        raise SpecMismatch("t-order requires a localized ring")
    return a.spec.t_order(a.payload)


def annihilator_exponent(a: RingElem, t: RingElem, bound: int = DEFAULT_SEARCH_BOUND) -> Optional[int]:
    """Least n >= 0 with t^n * a = 0, or None if not found within bound."""
    spec = a.spec
    cur = a.payload
    for n in range(bound + 1):
        if spec.is_zero(cur):
            return n
        cur = spec.mul(cur, t.payload)
    return None


# ---------------------------------------------------------------------------
# conversions (ring homomorphisms) and canonical lifts (sections)


def convert_payload(src: RingSpec, p: Payload, dst: RingSpec) -> Payload:
    if src == dst:
        return dst.canon(p)
    if isinstance(src, Integers):
        return dst.from_int(p)
    if isinstance(src, ModularIntegers) and isinstance(dst, ModularIntegers):
        if src.modulus % dst.modulus == 0:
            return p % dst.modulus
        raise UnsupportedHom(f"{src} -> {dst}")
    if isinstance(src, UnivariatePoly):
        if isinstance(dst, UnivariatePoly) and dst.var == src.var:
            return dst.canon(tuple(convert_payload(src.base, c, dst.base) for c in p))
        if isinstance(dst, Quotient) and dst.up.var == src.var:
            return dst.canon(tuple(convert_payload(src.base, c, dst.up.base) for c in p))
    if isinstance(src, Quotient):
        if isinstance(dst, Quotient) and dst.up == src.up:
            # valid when the target modulus divides the source modulus
            if _tup_try_divide(src.up.base, src.modulus, dst.modulus) is None:
                raise UnsupportedHom(f"{src} -> {dst}: modulus does not divide")
            return dst.canon(p)
        if isinstance(dst, Quotient) and dst.up.var == src.up.var:
            lifted = tuple(convert_payload(src.up.base, c, dst.up.base) for c in p)
            target_mod = tuple(convert_payload(src.up.base, c, dst.up.base) for c in src.modulus)
            if _tup_try_divide(dst.up.base, target_mod, dst.modulus) is None:
                raise UnsupportedHom(f"{src} -> {dst}: modulus does not divide")
            return dst.canon(lifted)
    if isinstance(dst, Localization):
        return dst.canon((convert_payload(src, p, dst.base), 0))
    if isinstance(src, Localization) and isinstance(dst, Localization):
        num = convert_payload(src.base, p[0], dst.base)
        t_img = convert_payload(src.base, src.t, dst.base)
        if not dst.base.eq(t_img, dst.t):
            raise UnsupportedHom(f"{src} -> {dst}: localized at different elements")
        return dst.canon((num, p[1]))
    if isinstance(dst, UnivariatePoly):
        c = convert_payload(src, p, dst.base)
        return dst.canon((c,))
    if isinstance(dst, Quotient):
        c = convert_payload(src, p, dst.up.base)
        return dst.canon((c,))
    raise UnsupportedHom(f"{src.spec_str()} -> {dst.spec_str()}")


def convert(a: RingElem, dst: RingSpec) -> RingElem:
    return RingElem(dst, convert_payload(a.spec, a.payload, dst), _canon=False)


def lift_payload(src: RingSpec, p: Payload, dst: RingSpec) -> Payload:
    """Canonical section of the projection dst -> src (not a ring hom)."""
    if src == dst:
        return dst.canon(p)
    if isinstance(src, ModularIntegers):
        if isinstance(dst, Integers):
            return p % src.modulus
        if isinstance(dst, ModularIntegers) and dst.modulus % src.modulus == 0:
            return p % src.modulus
    if isinstance(src, Quotient):
        rep = src.canon(p)
        if isinstance(dst, UnivariatePoly) and dst == src.up:
            return dst.canon(rep)
        if isinstance(dst, Quotient) and dst.up == src.up:
            if _tup_try_divide(src.up.base, dst.modulus, src.modulus) is None:
                raise UnsupportedHom(f"lift {src} -> {dst}: modulus does not divide")
            return dst.canon(rep)
    raise UnsupportedHom(f"lift {src.spec_str()} -> {dst.spec_str()}")


def lift(a: RingElem, dst: RingSpec) -> RingElem:
    return RingElem(dst, lift_payload(a.spec, a.payload, dst), _canon=False)


def localize(base: RingSpec, t: Payload, search_bound: int = DEFAULT_SEARCH_BOUND) -> Localization:
    """Build base[1/t], collapsing a repeated localization at the same t."""
    if isinstance(base, Localization):
        t = base.canon((t, 0)) if not isinstance(t, tuple) else t
        raise ValueError("localize a plain base ring; nested localization unsupported")
    return Localization(base, base.canon(t), search_bound)


def dimension_hint(spec: RingSpec) -> Optional[int]:
    """Krull dimension when structurally known, else None."""
    if spec.is_field():
        return 0
    if isinstance(spec, Integers):
        return 1
    if isinstance(spec, ModularIntegers):
        return 0
    if isinstance(spec, UnivariatePoly):
        d = dimension_hint(spec.base)
        return None if d is None else d + 1
    if isinstance(spec, Quotient):
        return 0 if spec.up.base.is_field() else None
    if isinstance(spec, Localization):
        return dimension_hint(spec.base)
    return None


# ---------------------------------------------------------------------------
# the ring-spec and ring-element text grammars


class _RingExprAdapter(ExprAdapter):
    def __init__(self, spec: RingSpec):
        self.spec = spec
        self.gens = spec.generators()

    def from_int(self, value):
        return self.spec.from_int(value)

    def from_name(self, name):
        if name in self.gens:
            return self.gens[name]
        raise ParseError(f"unknown symbol {name!r} in ring {self.spec.spec_str()}")

    def add(self, a, b):
        return self.spec.add(a, b)

    def sub(self, a, b):
        return self.spec.sub(a, b)

    def neg(self, a):
        return self.spec.neg(a)

    def mul(self, a, b):
        return self.spec.mul(a, b)

    def div(self, a, b):
        inv = self.spec.try_inverse(b)
        if inv is None:
            raise ParseError(f"division by non-unit {self.spec.elem_str(b)!r}")
        return self.spec.mul(a, inv)

    def pow(self, a, k):
        return ppow(self.spec, a, k)


def parse_elem(spec: RingSpec, text: str) -> RingElem:
    return RingElem(spec, parse_full(text, _RingExprAdapter(spec)))


def _parse_spec_inner(stream: TokenStream) -> RingSpec:
    kind, val = stream.next()
    if kind != "NAME":
        raise ParseError(f"expected ring name, got {val!r}")
    if val == "Q":
        spec: RingSpec = Rationals()
    elif val == "Z":
        k2, v2 = stream.peek()
        if k2 == "OP" and v2 == "/":
            save = stream.pos
            stream.next()
            k3, v3 = stream.next()
            if k3 == "INT":
                spec = ModularIntegers(int(v3))
            else:
                stream.pos = save
                spec = Integers()
        else:
            spec = Integers()
    elif val == "loc":
        stream.expect_op("(")
        base = _parse_spec_inner(stream)
        stream.expect_op(",")
        t = parse_expression(stream, _RingExprAdapter(base))
        stream.expect_op(")")
        return Localization(base, base.canon(t))
    else:
        raise ParseError(f"unknown ring {val!r}")
    # suffixes: [var] optionally followed by /(modulus)
    while True:
        kind, val = stream.peek()
        if kind == "OP" and val == "[":
            stream.next()
            k2, v2 = stream.next()
            if k2 != "NAME":
                raise ParseError(f"expected variable name, got {v2!r}")
            stream.expect_op("]")
            spec = UnivariatePoly(spec, v2)
            kind, val = stream.peek()
            if kind == "OP" and val == "/":
                stream.next()
                stream.expect_op("(")
                mod = parse_expression(stream, _RingExprAdapter(spec))
                stream.expect_op(")")
                mod = spec.canon(mod)
                if len(mod) < 2:
                    raise ParseError("modulus must have degree at least 1")
                lead_inv = spec.base.try_inverse(mod[-1])
                if lead_inv is None:
                    raise ParseError("modulus leading coefficient must be a unit")
                mod = _tup_scale(spec.base, lead_inv, mod)
                spec = Quotient(spec, mod)
        else:
            break
    return spec


def parse_ring_spec(text: str) -> RingSpec:
    stream = TokenStream(tokenize(text))
    spec = _parse_spec_inner(stream)
    if not stream.at_end():
        raise ParseError(f"trailing input in ring spec at {stream.peek()[1]!r}")
    return spec

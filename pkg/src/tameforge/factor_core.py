"""Certificate-producing factorization steps.

Every operation here realizes one constructive reduction.  It receives exact
data, emits a word of tame generators together with the map that word must
compose to, and re-checks the equality by exact composition before returning.
A result that comes back without raising is therefore self-certifying.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .automap import (
    Certificate,
    ElemGen,
    LinGen,
    PolyMap,
    TameGen,
    TameWord,
    check_word_equals,
    compose,
    compose_all,
    fresh_names,
    gen_to_map,
    inverse_word,
    stabilize,
)
from .errors import (
    BoundExceeded,
    DimensionMismatch,
    FrameMismatch,
    HypothesisFailed,
    JacobianNotOne,
    NInsufficient,
    NotADomain,
    NotDivisible,
    NotElementary,
    NotLocalOrField,
    NotOriginPreserving,
    NotQAlgebra,
    NotSquareZero,
    OrderBoundViolated,
    SingularMatrix,
    SpecMismatch,
    VerificationFailed,
)
from .multipoly import MultiPoly, convert_poly, from_fraction
from .rings import (
    Localization,
    ModularIntegers,
    Payload,
    Quotient,
    RingElem,
    RingSpec,
    UnivariatePoly,
    annihilator_exponent,
    factorize,
    ppow,
)


def m_bound(d: int, r: int, s: int) -> int:
    """Pole-order budget sufficient to conjugate a degree-d piece through
    frames of pole order r and s."""
    return r + s + d * (r + s)


# ---------------------------------------------------------------------------
# small shared helpers


def _square_zero_check(spec: RingSpec, payloads, what: str = "coefficients") -> None:
    items = [c for c in payloads if not spec.is_zero(c)]
    for i, a in enumerate(items):
        for b in items[i:]:
            if not spec.is_zero(spec.mul(a, b)):
                raise NotSquareZero(f"{what} do not span a square-zero ideal")


def _poly_coeffs(polys) -> list:
    out = []
    for p in polys:
        out.extend(p.terms.values())
    return out


def _max_pole(p: MultiPoly) -> int:
    spec = p.spec
    if not isinstance(spec, Localization):
        return 0
    return max((spec.t_order(c) for c in p.terms.values()), default=0)


def _div_var_power(p: MultiPoly, name: str, k: int) -> MultiPoly:
    """Exact division by name**k; every term must carry the factor."""
    if name not in p.vars:
        if p.is_zero():
            return p
        raise FrameMismatch(f"{name!r} not in frame {p.vars}")
    i = p.vars.index(name)
    out = {}
    for e, c in p.terms.items():
        if e[i] < k:
            raise NotDivisible(f"term is not divisible by {name}^{k}")
        e2 = list(e)
        e2[i] -= k
        out[tuple(e2)] = c
    return MultiPoly(p.spec, p.vars, out, _canon=False)


def _uses(p: MultiPoly, name: str) -> bool:
    return name in p.vars and p.uses(name)


def _degree_in_set(p: MultiPoly, names) -> int:
    idx = [p.vars.index(v) for v in names]
    best = 0
    for e in p.terms:
        best = max(best, sum(e[i] for i in idx))
    return best


@dataclass
class FactorResult:
    """A word, the map it must evaluate to, and where it came from."""

    word: TameWord
    target: PolyMap
    provenance: str = ""

    def certificate(self) -> Certificate:
        added = self.word.vars[len(self.target.vars):]
        return Certificate(self.target, added, self.word, self.provenance)


# ---------------------------------------------------------------------------
# square-zero composition


def sumcomp_merge(G: Sequence[MultiPoly], H: Sequence[MultiPoly]) -> PolyMap:
    """Compose X+G with X+H when all coefficients span a square-zero ideal;
    the result equals X+G+H and is checked to."""
    G, H = list(G), list(H)
    if not G or len(G) != len(H):
        raise DimensionMismatch("summand vectors must have equal positive length")
    spec, vars = G[0].spec, G[0].vars
    for p in G + H:
        if p.spec != spec or p.vars != vars:
            raise FrameMismatch("summands must share one frame")
    if len(vars) != len(G):
        raise DimensionMismatch("need one summand per variable")
    _square_zero_check(spec, _poly_coeffs(G + H))
    xs = [MultiPoly.var(spec, vars, v) for v in vars]
    phi = PolyMap(spec, vars, [xs[i] + G[i] for i in range(len(vars))])
    psi = PolyMap(spec, vars, [xs[i] + H[i] for i in range(len(vars))])
    merged = compose(phi, psi)
    expect = PolyMap(spec, vars, [xs[i] + G[i] + H[i] for i in range(len(vars))])
    if merged != expect:
        raise VerificationFailed("square-zero composition did not reduce to the sum")
    return merged


# ---------------------------------------------------------------------------
# the one-monomial commutator word


def monomial_factor(a: RingElem, m: int, x: str = "X", z: str = "Z") -> FactorResult:
    """Five-generator word for (X + a*X^m, (1 - m*a*X^(m-1))*Z), a^2 = 0."""
    if m < 1:
        raise ValueError("exponent must be a positive integer")
    spec = a.spec
    if not spec.is_zero(spec.mul(a.payload, a.payload)):
        raise NotSquareZero("coefficient must square to zero")
    vars = (x, z)
    X = MultiPoly.var(spec, vars, x)
    Z = MultiPoly.var(spec, vars, z)
    if spec.is_zero(a.payload):
        word = TameWord(spec, vars, [])
        target = PolyMap.identity(spec, vars)
        check_word_equals(word, target, "monomial_factor")
        return FactorResult(word, target, f"monomial m={m}")
    c = MultiPoly.const(spec, vars, a.payload)
    alpha = ElemGen(x, -(c * Z))
    beta = ElemGen(z, -(X ** m))
    gamma = ElemGen(z, (X + c * X ** m) ** m - X ** m)
    word = TameWord(spec, vars, [alpha, beta, alpha.inverse(), beta.inverse(), gamma])
    mc = MultiPoly.from_int(spec, vars, m) * c
    one = MultiPoly.from_int(spec, vars, 1)
    target = PolyMap(spec, vars, [X + c * X ** m, (one - mc * X ** (m - 1)) * Z])
    check_word_equals(word, target, "monomial_factor")
    return FactorResult(word, target, f"monomial m={m}")


# ---------------------------------------------------------------------------
# nilpotent slice, stabilized form


def nilslice_stab_factor(H: Sequence[MultiPoly], z: Optional[str] = None) -> FactorResult:
    """Factor (X+H, det(J)^-1 * Z) through one-monomial words, one added
    dimension; coefficients of H must span a square-zero ideal."""
    H = list(H)
    if not H:
        raise DimensionMismatch("need at least one coordinate")
    spec, xvars = H[0].spec, H[0].vars
    n = len(xvars)
    if len(H) != n:
        raise DimensionMismatch("need one summand per variable")
    for p in H:
        if p.spec != spec or p.vars != xvars:
            raise FrameMismatch("coordinates must share one frame")
    _square_zero_check(spec, _poly_coeffs(H))
    z = z or fresh_names(xvars, "Z", 1)[0]
    big = xvars + (z,)
    Zp = MultiPoly.var(spec, big, z)
    one = MultiPoly.from_int(spec, big, 1)
    trace = MultiPoly.zero(spec, xvars)
    for i, v in enumerate(xvars):
        trace = trace + H[i].partial(v)
    dinv = one - trace.embed(big)
    coords = [MultiPoly.var(spec, big, v) + H[i].embed(big) for i, v in enumerate(xvars)]
    coords.append(dinv * Zp)
    target = PolyMap(spec, big, coords)

    gens: list[TameGen] = []
    for i, v in enumerate(xvars):
        for mexp in sorted(H[i].coeffs_in(v)):
            c = H[i].coeffs_in(v)[mexp]
            if c.is_zero():
                continue
            ce = c.embed(big)
            if mexp == 0:
                gens.append(ElemGen(v, ce))
                continue
            Xi = MultiPoly.var(spec, big, v)
            alpha = ElemGen(v, -(ce * Zp))
            beta = ElemGen(z, -(Xi ** mexp))
            gamma = ElemGen(z, (Xi + ce * Xi ** mexp) ** mexp - Xi ** mexp)
            gens.extend([alpha, beta, alpha.inverse(), beta.inverse(), gamma])
    word = TameWord(spec, big, gens)
    check_word_equals(word, target, "nilslice_stab_factor")
    return FactorResult(word, target, "nilslice-stab")


# ---------------------------------------------------------------------------
# nilpotent slice over a Q-algebra, no stabilization


_VANDER_CACHE: dict = {}


def _vandermonde_mix(D: int, B: int) -> list[Fraction]:
    """Rational lam_j with X^(D-B) Y^B = sum_j lam_j (X + j*Y)^D, j = 0..D."""
    key = (D, B)
    got = _VANDER_CACHE.get(key)
    if got is not None:
        return got
    size = D + 1
    M = [[Fraction(j ** i) for j in range(size)] for i in range(size)]
    rhs = [Fraction(0)] * size
    rhs[B] = Fraction(1, math.comb(D, B))
    for col in range(size):
        piv = next(r for r in range(col, size) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        rhs[col], rhs[piv] = rhs[piv], rhs[col]
        inv = 1 / M[col][col]
        M[col] = [x * inv for x in M[col]]
        rhs[col] = rhs[col] * inv
        for r in range(size):
            if r != col and M[r][col] != 0:
                fac = M[r][col]
                M[r] = [x - fac * y for x, y in zip(M[r], M[col])]
                rhs[r] = rhs[r] - fac * rhs[col]
    _VANDER_CACHE[key] = rhs
    return rhs


def _pair_potential_word(p: MultiPoly, xa: str, xb: str) -> list[TameGen]:
    """Word for (xa + dp/dxb, xb - dp/dxa); p has square-zero coefficients.

    Each term is split over Vandermonde nodes into powers of xa + j*xb, and
    each power is a three-generator conjugate of a single shear.
    """
    spec, vars = p.spec, p.vars
    ia, ib = vars.index(xa), vars.index(xb)
    Xa = MultiPoly.var(spec, vars, xa)
    Xb = MultiPoly.var(spec, vars, xb)
    gens: list[TameGen] = []
    for e, c in sorted(p.terms.items()):
        A, B = e[ia], e[ib]
        D = A + B
        if D == 0:
            continue
        spect = list(e)
        spect[ia] = 0
        spect[ib] = 0
        base = MultiPoly.monomial(spec, vars, tuple(spect), c)
        for j, lam in enumerate(_vandermonde_mix(D, B)):
            if lam == 0:
                continue
            br = base.scale(from_fraction(spec, lam))
            mid = ElemGen(xb, -(br * Xa ** (D - 1)).scale(spec.from_int(D)))
            if j == 0:
                gens.append(mid)
            else:
                shear = ElemGen(xa, Xb.scale(spec.from_int(j)))
                gens.extend([shear.inverse(), mid, shear])
    return gens


def nilslice_q_factor(H: Sequence[MultiPoly]) -> FactorResult:
    """Factor X+H without stabilization over a Q-algebra; needs square-zero
    coefficients and Jacobian determinant exactly one."""
    H = list(H)
    if not H:
        raise DimensionMismatch("need at least one coordinate")
    spec, xvars = H[0].spec, H[0].vars
    n = len(xvars)
    if len(H) != n:
        raise DimensionMismatch("need one summand per variable")
    for p in H:
        if p.spec != spec or p.vars != xvars:
            raise FrameMismatch("coordinates must share one frame")
    if not spec.qalgebra():
        raise NotQAlgebra(f"{spec.spec_str()} is not a Q-algebra")
    _square_zero_check(spec, _poly_coeffs(H))
    xs = [MultiPoly.var(spec, xvars, v) for v in xvars]
    target = PolyMap(spec, xvars, [xs[i] + H[i] for i in range(n)])
    from .automap import jacobian_det

    jd = jacobian_det(target)
    if jd != MultiPoly.from_int(spec, xvars, 1):
        raise JacobianNotOne("Jacobian determinant must be exactly one")

    if n == 1:
        gens = [] if H[0].is_zero() else [ElemGen(xvars[0], H[0])]
        word = TameWord(spec, xvars, gens)
        check_word_equals(word, target, "nilslice_q_factor")
        return FactorResult(word, target, "nilslice-q")

    if n == 2:
        xa, xb = xvars
        p1 = H[0].antiderivative(xb)
        r = H[1] + p1.partial(xa)
        if r.uses(xb):
            raise VerificationFailed("potential residue failed to be independent")
        p = p1 - r.antiderivative(xa)
        gens = _pair_potential_word(p, xa, xb)
        word = TameWord(spec, xvars, gens)
        check_word_equals(word, target, "nilslice_q_factor")
        return FactorResult(word, target, "nilslice-q")

    # reduce coordinates 1..n-1 against the last one, leaving a single shear
    xn = xvars[-1]
    cgens: list[TameGen] = []
    for i in range(n - 1):
        Pi = H[i].antiderivative(xn)
        cgens = _pair_potential_word(-Pi, xvars[i], xn) + cgens
    cword = TameWord(spec, xvars, cgens)
    comp = compose(cword.evaluate(), target)
    S = comp.coord(xn) - xs[-1]
    if S.uses(xn):
        raise VerificationFailed("residual shear failed to drop the last variable")
    for i in range(n - 1):
        if comp.coord(xvars[i]) != xs[i]:
            raise VerificationFailed("coordinate reduction left a remainder")
    tail = [] if S.is_zero() else [ElemGen(xn, S)]
    word = inverse_word(cword) + TameWord(spec, xvars, tail)
    check_word_equals(word, target, "nilslice_q_factor")
    return FactorResult(word, target, "nilslice-q")


# ---------------------------------------------------------------------------
# the doubling endomorphism and its conjugating words


def psi_t(phi: PolyMap, z_names: Optional[Sequence[str]] = None,
          power: int = 1) -> PolyMap:
    """Send X+F over R_t to the map fixing X and sending Z to
    Z + t^-power * F(X + t^power * Z)."""
    spec = phi.spec
    if not isinstance(spec, Localization):
        raise SpecMismatch("psi_t needs a localized coefficient ring")
    if not spec.base.is_domain():
        raise NotADomain("the localized element must be a non-zero-divisor")
    if power < 1:
        raise ValueError("power must be a positive integer")
    xv = phi.vars
    n = len(xv)
    zv = tuple(z_names) if z_names else fresh_names(xv, "Z", n)
    if len(zv) != n or set(zv) & set(xv):
        raise FrameMismatch("need one fresh doubling variable per coordinate")
    big = xv + zv
    u = ppow(spec, spec.t_elem(), power)
    uinv = spec.t_inverse(power)
    images = {xv[i]: MultiPoly.var(spec, big, xv[i])
              + MultiPoly.var(spec, big, zv[i]).scale(u) for i in range(n)}
    coords = [MultiPoly.var(spec, big, v) for v in xv]
    for i in range(n):
        F = phi.coords[i] - MultiPoly.var(spec, xv, xv[i])
        coords.append(MultiPoly.var(spec, big, zv[i]) + F.substitute(images).scale(uinv))
    return PolyMap(spec, big, coords)


@dataclass
class PsiConjugation:
    """Words relating the doubled map to the stabilized one."""

    sigma: TameWord
    eta: TameWord
    omega: TameWord
    psi: PolyMap
    phi_stab: PolyMap
    z_names: tuple


def psi_conjugation_words(phi: PolyMap, z_names: Optional[Sequence[str]] = None,
                          power: int = 1) -> PsiConjugation:
    """Exhibit psi_t(phi) as a conjugate of the stabilized phi in two ways;
    needs F divisible by t^power."""
    spec = phi.spec
    psi = psi_t(phi, z_names, power)
    xv = phi.vars
    n = len(xv)
    zv = psi.vars[n:]
    big = psi.vars
    u = ppow(spec, spec.t_elem(), power)
    uinv = spec.t_inverse(power)
    Fs = []
    for i in range(n):
        F = phi.coords[i] - MultiPoly.var(spec, xv, xv[i])
        scaled = F.scale(uinv)
        if _max_pole(scaled) > 0:
            raise NotDivisible("displacement must be divisible by the localized element")
        Fs.append(scaled)
    sigma = TameWord(spec, big, [
        ElemGen(xv[i], -MultiPoly.var(spec, big, zv[i]).scale(u)) for i in range(n)])
    eta = TameWord(spec, big, [
        ElemGen(zv[i], MultiPoly.var(spec, big, xv[i]).scale(uinv)) for i in range(n)])
    omega = TameWord(spec, big, [
        ElemGen(zv[i], Fs[i].embed(big)) for i in range(n)])
    phi_stab = stabilize(phi, zv)
    left = compose_all([sigma.evaluate(), eta.evaluate(), phi_stab,
                        eta.inverse().evaluate(), sigma.inverse().evaluate()])
    if left != psi:
        raise VerificationFailed("first conjugation identity failed")
    right = compose_all([sigma.evaluate(), phi_stab, omega.evaluate(),
                         sigma.inverse().evaluate()])
    if right != psi:
        raise VerificationFailed("second conjugation identity failed")
    return PsiConjugation(sigma, eta, omega, psi, phi_stab, zv)


# ---------------------------------------------------------------------------
# residue data: pole translations and polynomial-linear parts


@dataclass(frozen=True)
class PoleTranslation:
    """The map z -> z + p(x). t^-N, with the numerator vector kept N-free."""

    spec: RingSpec
    scalar_vars: tuple
    z_vars: tuple
    p: tuple
    n_exp: int

    def __post_init__(self):
        if len(self.p) != len(self.z_vars):
            raise DimensionMismatch("need one numerator per translated variable")
        for q in self.p:
            if q.spec != self.spec or q.vars != self.scalar_vars:
                raise FrameMismatch("numerators must live over the scalar frame")

    def to_map(self, frame: Optional[tuple] = None) -> PolyMap:
        frame = tuple(frame) if frame else self.scalar_vars + self.z_vars
        uinv = self.spec.t_inverse(self.n_exp)
        coords = []
        for v in frame:
            cur = MultiPoly.var(self.spec, frame, v)
            if v in self.z_vars:
                cur = cur + self.p[self.z_vars.index(v)].embed(frame).scale(uinv)
            coords.append(cur)
        return PolyMap(self.spec, frame, coords)

    def max_pole(self) -> int:
        return max((_max_pole(q) for q in self.p), default=0)


def _pmat_mul(a, b):
    n = len(a)
    zero = MultiPoly.zero(a[0][0].spec, a[0][0].vars)
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = zero
            for k in range(n):
                acc = acc + a[i][k] * b[k][j]
            row.append(acc)
        out.append(tuple(row))
    return tuple(out)


def _pmat_is_identity(m) -> bool:
    spec, vars = m[0][0].spec, m[0][0].vars
    one = MultiPoly.from_int(spec, vars, 1)
    zero = MultiPoly.zero(spec, vars)
    for i, row in enumerate(m):
        for j, entry in enumerate(row):
            if entry != (one if i == j else zero):
                return False
    return True


@dataclass(frozen=True)
class PolyLinear:
    """The map z -> A(x) z with an explicit inverse witness."""

    spec: RingSpec
    scalar_vars: tuple
    z_vars: tuple
    entries: tuple
    inv_entries: tuple

    def __post_init__(self):
        n = len(self.z_vars)
        if len(self.entries) != n or len(self.inv_entries) != n:
            raise DimensionMismatch("matrix size must match the translated frame")
        for row in self.entries + self.inv_entries:
            if len(row) != n:
                raise DimensionMismatch("matrix rows must be square")
            for p in row:
                if p.spec != self.spec or p.vars != self.scalar_vars:
                    raise FrameMismatch("entries must live over the scalar frame")
        if not _pmat_is_identity(_pmat_mul(self.entries, self.inv_entries)):
            raise VerificationFailed("inverse witness fails on the right")
        if not _pmat_is_identity(_pmat_mul(self.inv_entries, self.entries)):
            raise VerificationFailed("inverse witness fails on the left")

    def inverse(self) -> "PolyLinear":
        return PolyLinear(self.spec, self.scalar_vars, self.z_vars,
                          self.inv_entries, self.entries)

    def to_map(self, frame: Optional[tuple] = None) -> PolyMap:
        frame = tuple(frame) if frame else self.scalar_vars + self.z_vars
        coords = []
        for v in frame:
            if v in self.z_vars:
                i = self.z_vars.index(v)
                acc = MultiPoly.zero(self.spec, frame)
                for k, zk in enumerate(self.z_vars):
                    acc = acc + self.entries[i][k].embed(frame) * MultiPoly.var(
                        self.spec, frame, zk)
                coords.append(acc)
            else:
                coords.append(MultiPoly.var(self.spec, frame, v))
        return PolyMap(self.spec, frame, coords)

    def max_pole(self) -> int:
        poles = [_max_pole(p) for row in self.entries + self.inv_entries for p in row]
        return max(poles, default=0)


@dataclass(frozen=True)
class SweepResidue:
    """What remains after sweeping: a pole translation, a polynomial-linear
    part, and the log of reduction steps that produced them."""

    tau: PoleTranslation
    gamma: PolyLinear
    trace: tuple = ()


# ---------------------------------------------------------------------------
# sweeping a word of integral elementaries


@dataclass
class SweepLeft:
    tau: PoleTranslation
    reduced: TameWord


def sweep_left(rho: TameWord, n_exp: int, z_names: Optional[Sequence[str]] = None) -> SweepLeft:
    """Split the doubled image of an integral elementary word into a pole
    translation followed by an integral elementary word."""
    spec = rho.spec
    if not isinstance(spec, Localization):
        raise SpecMismatch("sweep_left needs a localized coefficient ring")
    if not spec.base.is_domain():
        raise NotADomain("the localized element must be a non-zero-divisor")
    if n_exp < 1:
        raise ValueError("the pole exponent must be a positive integer")
    xv = rho.vars
    n = len(xv)
    zv = tuple(z_names) if z_names else fresh_names(xv, "Z", n)
    big = xv + zv
    for gen in rho.gens:
        if not isinstance(gen, ElemGen):
            raise NotElementary("sweep input must be a word of elementary shears")
        if _max_pole(gen.poly) > 0:
            raise HypothesisFailed("sweep input must have integral coefficients")
    u = ppow(spec, spec.t_elem(), n_exp)
    uinv = spec.t_inverse(n_exp)
    q = [MultiPoly.zero(spec, xv) for _ in range(n)]
    out: list[TameGen] = []
    for gen in reversed(rho.gens):
        i = xv.index(gen.var)
        small = {xv[j]: MultiPoly.var(spec, xv, xv[j]) + q[j] for j in range(n)}
        s0 = gen.poly.substitute(small)
        shifted = {xv[j]: MultiPoly.var(spec, big, xv[j]) + q[j].embed(big)
                   + MultiPoly.var(spec, big, zv[j]).scale(u) for j in range(n)}
        s = gen.poly.substitute(shifted)
        rt = (s - s0.embed(big)).scale(uinv)
        if _max_pole(rt) > 0:
            raise VerificationFailed("sweep remainder failed to be integral")
        out.insert(0, ElemGen(zv[i], rt))
        q[i] = q[i] + s0
    tau = PoleTranslation(spec, xv, zv, tuple(q), n_exp)
    reduced = TameWord(spec, big, out)
    got = compose(tau.to_map(big), reduced.evaluate())
    if got != psi_t(rho.evaluate(), zv, n_exp):
        raise VerificationFailed("sweep decomposition failed to recompose")
    return SweepLeft(tau, reduced)


# ---------------------------------------------------------------------------
# the symbolic pole parameter


def _symbolic_pole_spec(spec: Localization, s_name: str) -> Localization:
    """R_t[S, 1/S], with S an indeterminate inverted formally."""
    up = UnivariatePoly(spec, s_name)
    return Localization(up, (spec.zero(), spec.one()))


@dataclass
class ElemSweep:
    """Taylor data splitting a doubled shear around a translated center."""

    w: tuple
    omega: ElemGen
    g: MultiPoly
    center: tuple
    z_names: tuple
    s_name: str
    t_orders: tuple = (0, 0, 0)


def elem_sweep(f: MultiPoly, i_var: str, x: Sequence[MultiPoly],
               u: Sequence[MultiPoly], z_names: Optional[Sequence[str]] = None,
               s_name: str = "S", check: bool = True) -> ElemSweep:
    """Split e(f) swept to pole parameter S around center x+u: returns the
    shifted translation numerator w, the linear part, and the second-order
    remainder g, satisfying eps(S) sigma(S) = nu(S) omega xi(S)."""
    spec = f.spec
    if not isinstance(spec, Localization):
        raise SpecMismatch("elem_sweep needs a localized coefficient ring")
    slots = f.vars
    n = len(slots)
    if i_var not in slots:
        raise FrameMismatch(f"{i_var!r} not in frame {slots}")
    if f.uses(i_var):
        raise NotElementary("the shear addend must omit its own variable")
    x, u = list(x), list(u)
    if len(x) != n or len(u) != n:
        raise DimensionMismatch("need one center component per slot")
    sf = x[0].vars
    for p in x + u:
        if p.spec != spec or p.vars != sf:
            raise FrameMismatch("center components must share one scalar frame")
    i = slots.index(i_var)
    zv = tuple(z_names) if z_names else fresh_names(set(sf) | set(slots), "Z", n)
    if s_name in sf or s_name in zv:
        raise FrameMismatch("the pole parameter name collides with the frame")
    big = sf + zv
    bigs = big + (s_name,)

    point = [x[j] + u[j] for j in range(n)]
    fp = f.substitute({slots[j]: point[j] for j in range(n)})
    dparts = [f.partial(slots[j]).substitute({slots[k]: point[k] for k in range(n)})
              for j in range(n)]
    w = tuple(u[j] + fp if j == i else u[j] for j in range(n))
    omega_addend = MultiPoly.zero(spec, big)
    for j in range(n):
        omega_addend = omega_addend + dparts[j].embed(big) * MultiPoly.var(spec, big, zv[j])
    omega = ElemGen(zv[i], omega_addend)

    S = MultiPoly.var(spec, bigs, s_name)
    shifted = {slots[j]: point[j].embed(bigs)
               + S * MultiPoly.var(spec, bigs, zv[j]) for j in range(n)}
    lin = MultiPoly.zero(spec, bigs)
    for j in range(n):
        lin = lin + dparts[j].embed(bigs) * MultiPoly.var(spec, bigs, zv[j])
    num = f.substitute(shifted) - fp.embed(bigs) - S * lin
    g = _div_var_power(num, s_name, 2)
    orders = (max((_max_pole(p) for p in w), default=0),
              _max_pole(omega_addend), _max_pole(g))
    limit = m_bound(f.degree(), _max_pole(f),
                    max((_max_pole(p) for p in u), default=0))
    if max(orders) > limit:
        raise OrderBoundViolated(
            f"sweep output pole order {max(orders)} exceeds the bound {limit}")
    result = ElemSweep(w, omega, g, tuple(point), zv, s_name, orders)
    if check:
        _check_elem_sweep(f, i, x, u, result)
    return result


def _check_elem_sweep(f: MultiPoly, i: int, x, u, res: ElemSweep) -> None:
    """Verify the sweep identity once with the pole parameter left symbolic,
    so it holds for every substituted power."""
    spec = f.spec
    ls = _symbolic_pole_spec(spec, res.s_name)
    sf = x[0].vars
    zv = res.z_names
    frame = sf + zv
    slots = f.vars
    n = len(slots)
    S = ls.t_elem()
    Sinv = ls.t_inverse(1)

    def conv(p):
        return convert_poly(p, ls)

    def translation(nums, scale):
        coords = []
        for v in frame:
            cur = MultiPoly.var(ls, frame, v)
            if v in zv:
                cur = cur + conv(nums[zv.index(v)]).embed(frame).scale(scale)
            coords.append(cur)
        return PolyMap(ls, frame, coords)

    shifted = {slots[j]: conv(x[j]).embed(frame)
               + MultiPoly.var(ls, frame, zv[j]).scale(S) for j in range(n)}
    eps = PolyMap.identity(ls, frame).with_coord(
        zv[i], MultiPoly.var(ls, frame, zv[i])
        + conv(f).substitute(shifted).scale(Sinv))
    sigma = translation(u, Sinv)
    nu = translation(list(res.w), Sinv)
    omega_map = PolyMap.identity(ls, frame).with_coord(
        zv[i], MultiPoly.var(ls, frame, zv[i]) + conv(res.omega.poly).embed(frame))
    g_sym = conv(res.g).specialize({res.s_name: S})
    xi = PolyMap.identity(ls, frame).with_coord(
        zv[i], MultiPoly.var(ls, frame, zv[i]) + g_sym.scale(S))
    if compose(eps, sigma) != compose_all([nu, omega_map, xi]):
        raise VerificationFailed("symbolic sweep identity failed")


# ---------------------------------------------------------------------------
# commutator splittings


@dataclass
class CommutatorSplit:
    """A conjugated shear rewritten as a commutator, with the word and the
    map it must evaluate to (None when built without the local check)."""

    outer: TameWord
    inner: TameWord
    word: TameWord
    target: Optional[PolyMap]


def first_commutator(alpha: PolyLinear, i_var: str, b: MultiPoly, f: MultiPoly,
                     y_name: Optional[str] = None,
                     frame: Optional[tuple] = None,
                     check: bool = True) -> CommutatorSplit:
    """Rewrite (alpha e_i(b f) alpha^-1)^[1] as a commutator of a shear frame
    kappa along the i-th matrix column and a single new-variable shear.

    With check=False the conjugated target is neither built nor compared
    (the split's target is None); callers chaining many of these defer to
    their own end-to-end recomposition test."""
    spec = alpha.spec
    acted = alpha.z_vars
    if i_var not in acted:
        raise FrameMismatch(f"{i_var!r} is not an acted variable")
    i = acted.index(i_var)
    n = len(acted)
    small = alpha.scalar_vars + acted
    y = y_name or fresh_names(set(small) | set(b.vars) | set(f.vars), "Y", 1)[0]
    W = tuple(frame) if frame else small + (y,)
    if y not in W:
        raise FrameMismatch("the frame must contain the commutator variable")
    for v in acted:
        if _uses(b, v):
            raise HypothesisFailed("the scalar factor must not use acted variables")
    if _uses(b, y) or _uses(f, y):
        raise FrameMismatch("inputs must not use the commutator variable")
    if _uses(f, i_var):
        raise NotElementary("the shear addend must omit its own variable")

    be = b.embed(W)
    fe = f.embed(W)
    if (be * fe).is_zero():
        empty = TameWord(spec, W, [])
        target = PolyMap.identity(spec, W)
        check_word_equals(empty, target, "first_commutator")
        return CommutatorSplit(empty, empty, empty, target)
    Y = MultiPoly.var(spec, W, y)
    kappa_gens = [ElemGen(acted[j], alpha.entries[j][i].embed(W) * be * Y)
                  for j in range(n)]
    kappa = TameWord(spec, W, kappa_gens)
    inv_images = {}
    for k in range(n):
        acc = MultiPoly.zero(spec, W)
        for l in range(n):
            acc = acc + alpha.inv_entries[k][l].embed(W) * MultiPoly.var(spec, W, acted[l])
        inv_images[acted[k]] = acc
    nu_gen = ElemGen(y, fe.substitute(inv_images))
    nu = TameWord(spec, W, [nu_gen])
    word = kappa + nu + kappa.inverse() + nu.inverse()

    if not check:
        return CommutatorSplit(kappa, nu, word, None)
    eps_map = PolyMap.identity(spec, W).with_coord(
        i_var, MultiPoly.var(spec, W, i_var) + be * fe)
    target = compose_all([alpha.to_map(W), eps_map, alpha.inverse().to_map(W)])
    check_word_equals(word, target, "first_commutator")
    return CommutatorSplit(kappa, nu, word, target)


def integral_conjugate(alpha: PolyLinear, i_var: str, g: MultiPoly, m: int,
                       y_name: Optional[str] = None,
                       frame: Optional[tuple] = None,
                       check: bool = True) -> CommutatorSplit:
    """First commutator for e_i(g) conjugated through alpha, arranged so that
    every emitted generator is integral; needs pole orders of alpha bounded
    by m and g divisible by t^(m + deg*m)."""
    spec = alpha.spec
    if not isinstance(spec, Localization):
        raise SpecMismatch("integral_conjugate needs a localized coefficient ring")
    if alpha.max_pole() > m:
        raise OrderBoundViolated(f"matrix pole order exceeds the stated bound {m}")
    d = _degree_in_set(g, alpha.z_vars)
    need = m + d * m
    deep = spec.t_inverse(need)
    for c in g.terms.values():
        if spec.t_order(spec.mul(c, deep)) > 0:
            raise OrderBoundViolated(
                f"shear addend is not divisible by the localized element to order {need}")
    b = MultiPoly.const(spec, g.vars, ppow(spec, spec.t_elem(), m))
    f = g.scale(spec.t_inverse(m))
    res = first_commutator(alpha, i_var, b, f, y_name, frame, check=check)
    for gen in res.word.gens:
        if isinstance(gen, ElemGen) and _max_pole(gen.poly) > 0:
            raise VerificationFailed("commutator word failed to be integral")
    return res


def second_commutator(f: MultiPoly, b: MultiPoly, g: MultiPoly,
                      x1: str, x2: str, y: str,
                      check: bool = True) -> CommutatorSplit:
    """Rewrite (e_x1(f) e_x2(b g) e_x1(f)^-1)^[1] as a commutator of a
    two-generator triangular word and a single new-variable shear."""
    spec, W = f.spec, f.vars
    for p in (b, g):
        if p.spec != spec or p.vars != W:
            raise FrameMismatch("inputs must share one frame")
    for name in (x1, x2, y):
        if name not in W:
            raise FrameMismatch(f"{name!r} not in frame {W}")
    if f.uses(x1) or f.uses(y):
        raise NotElementary("the conjugating addend must omit its variable")
    if g.uses(x2) or g.uses(y):
        raise NotElementary("the inner addend must omit its variable")
    if b.uses(x1) or b.uses(x2) or b.uses(y):
        raise HypothesisFailed("the scalar factor must be free of the working variables")

    X1 = MultiPoly.var(spec, W, x1)
    X2 = MultiPoly.var(spec, W, x2)
    Y = MultiPoly.var(spec, W, y)
    delta = f - f.substitute({x2: X2 - b * Y})
    gamma = TameWord(spec, W, [ElemGen(x1, delta), ElemGen(x2, b * Y)])
    omega_gen = ElemGen(y, g.substitute({x1: X1 - f}))
    omega = TameWord(spec, W, [omega_gen])
    word = gamma + omega + gamma.inverse() + omega.inverse()

    if not check:
        return CommutatorSplit(gamma, omega, word, None)
    psi_map = PolyMap.identity(spec, W).with_coord(x1, X1 + f)
    psi_inv = PolyMap.identity(spec, W).with_coord(x1, X1 - f)
    eps_map = PolyMap.identity(spec, W).with_coord(x2, X2 + b * g)
    target = compose_all([psi_map, eps_map, psi_inv])
    check_word_equals(word, target, "second_commutator")
    return CommutatorSplit(gamma, omega, word, target)


# ---------------------------------------------------------------------------
# one shortening step


@dataclass
class ShortenStep:
    tau: PoleTranslation
    gamma: PolyLinear
    zeta: TameWord
    target: Optional[PolyMap]
    required_n: int


def shorten_step(alpha: LinGen, eps: ElemGen, tau: PoleTranslation,
                 gamma: PolyLinear, n_exp: int, y_name: Optional[str] = None,
                 s_name: str = "S", check: bool = True) -> ShortenStep:
    """Absorb the doubled images of one linear and one elementary generator
    into the residue, leaving an integral commutator word.  The returned
    translation numerator and matrix do not depend on the pole exponent;
    raises when the exponent is below the computed sufficiency threshold.

    With check=False the per-step recomposition proof is skipped and the
    step's target is None; a caller iterating many steps must close with
    its own full recomposition test."""
    spec = tau.spec
    xv = tau.scalar_vars
    zv = tau.z_vars
    n = len(xv)
    if gamma.scalar_vars != xv or gamma.z_vars != zv:
        raise FrameMismatch("residue components must share their frames")
    if eps.var not in xv or eps.poly.vars != xv:
        raise FrameMismatch("the elementary generator must live over the scalar frame")
    if alpha.spec != spec or len(alpha.matrix) != n:
        raise DimensionMismatch("the linear generator must match the scalar frame")
    if tau.n_exp != n_exp:
        raise HypothesisFailed("the residue must carry the same pole exponent")
    i = xv.index(eps.var)
    y = y_name or fresh_names(xv + zv, "Y", 1)[0]
    big = xv + zv
    W = big + (y,)

    xs = [MultiPoly.var(spec, xv, v) for v in xv]
    sw = elem_sweep(eps.poly, eps.var, xs, list(tau.p), z_names=zv, s_name=s_name)

    # translation numerator: A.w + (A - I).x, free of the pole exponent
    p_new = []
    for j in range(n):
        acc = MultiPoly.zero(spec, xv)
        for k in range(n):
            acc = acc + sw.w[k].scale(alpha.matrix[j][k])
            acc = acc + xs[k].scale(alpha.matrix[j][k])
        p_new.append(acc - xs[j])
    tau_new = PoleTranslation(spec, xv, zv, tuple(p_new), n_exp)

    # matrix: A . (I + e_i x df(x+p)) . Gamma, with the middle factor unipotent
    one = MultiPoly.from_int(spec, xv, 1)
    zero = MultiPoly.zero(spec, xv)
    dford = [sw.omega.poly.partial(z).drop_vars(zv) for z in zv]
    m_omega = []
    m_omega_inv = []
    for r in range(n):
        row = [one if r == c else zero for c in range(n)]
        rowi = list(row)
        if r == i:
            row = [row[c] + dford[c] for c in range(n)]
            rowi = [rowi[c] - dford[c] for c in range(n)]
        m_omega.append(tuple(row))
        m_omega_inv.append(tuple(rowi))
    a_polys = tuple(tuple(MultiPoly.const(spec, xv, alpha.matrix[r][c])
                          for c in range(n)) for r in range(n))
    a_inv_polys = tuple(tuple(MultiPoly.const(spec, xv, alpha.inv[r][c])
                              for c in range(n)) for r in range(n))
    gm = _pmat_mul(a_polys, _pmat_mul(tuple(m_omega), gamma.entries))
    gm_inv = _pmat_mul(gamma.inv_entries, _pmat_mul(tuple(m_omega_inv), a_inv_polys))
    gamma_new = PolyLinear(spec, xv, zv, gm, gm_inv)

    # the sufficiency threshold comes from the symbolic remainder alone
    m = gamma.max_pole()
    d = _degree_in_set(sw.g, zv)
    s_idx = sw.g.vars.index(s_name)
    z_idx = [sw.g.vars.index(z) for z in zv]
    required = 0
    for e, c in sw.g.terms.items():
        k = e[s_idx]
        o = spec.t_order(c)
        need = o + m + d * m
        if need > 0:
            required = max(required, -(-need // (k + 1)))
    if n_exp < required:
        raise NInsufficient(required)

    u = ppow(spec, spec.t_elem(), n_exp)
    xi_addend = sw.g.specialize({s_name: u}).scale(u)
    zeta_res = integral_conjugate(gamma.inverse(), zv[i], xi_addend, m,
                                  y_name=y, frame=W, check=check)

    if not check:
        return ShortenStep(tau_new, gamma_new, zeta_res.word, None, required)
    alpha_map = gen_to_map(alpha, spec, xv)
    eps_map = gen_to_map(eps, spec, xv)
    lhs = stabilize(compose_all([
        psi_t(alpha_map, zv, n_exp), psi_t(eps_map, zv, n_exp),
        tau.to_map(big), gamma.to_map(big)]), (y,))
    rhs = compose(stabilize(compose(tau_new.to_map(big), gamma_new.to_map(big)), (y,)),
                  zeta_res.word.evaluate())
    if lhs != rhs:
        raise VerificationFailed("shortening step failed to recompose")
    return ShortenStep(tau_new, gamma_new, zeta_res.word, lhs, required)


# ---------------------------------------------------------------------------
# conjugating a vanishing shear through a tame generator


@dataclass
class LinElemConj:
    """A commutator word with per-generator vanishing tags."""

    word: TameWord
    tags: tuple
    target: PolyMap


def _check_tag(gen: TameGen, name: str, zero: Payload) -> None:
    if not isinstance(gen, ElemGen) or not gen.poly.specialize({name: zero}).is_zero():
        raise VerificationFailed(f"generator fails its {name}-vanishing tag")


def lin_elem_conj(psi: TameGen, eps_var: str, eps_poly: MultiPoly,
                  z_name: str = "Z", t_name: str = "T",
                  y_name: str = "Y") -> LinElemConj:
    """Rewrite (psi e(T Z ...) psi^-1)^[1] as a word whose generators each
    vanish at Z=0 or at T=0; the tags are machine-checked."""
    spec = eps_poly.spec
    xv = tuple(v for v in eps_poly.vars if v != z_name)
    if z_name not in eps_poly.vars:
        raise FrameMismatch("the slice variable must appear in the addend frame")
    if eps_var not in xv:
        raise FrameMismatch(f"{eps_var!r} is not a coordinate variable")
    if eps_poly.uses(eps_var):
        raise NotElementary("the shear addend must omit its own variable")
    if not eps_poly.specialize({z_name: spec.zero()}).is_zero():
        raise HypothesisFailed("the shear addend must vanish at the slice origin")
    for name in (y_name, t_name):
        if name in eps_poly.vars:
            raise FrameMismatch(f"{name!r} collides with the frame")
    W = xv + (y_name, z_name, t_name)
    zero = spec.zero()

    Z = MultiPoly.var(spec, W, z_name)
    T = MultiPoly.var(spec, W, t_name)
    scaled = eps_poly.embed(W).substitute({z_name: Z * T})
    eps_map = PolyMap.identity(spec, W).with_coord(
        eps_var, MultiPoly.var(spec, W, eps_var) + scaled)
    added = (y_name, z_name, t_name)
    psi_map = stabilize(gen_to_map(psi, spec, xv), added)
    psi_inv = stabilize(gen_to_map(psi.inverse(), spec, xv), added)
    target = compose_all([psi_map, eps_map, psi_inv])

    if isinstance(psi, LinGen):
        entries = tuple(tuple(MultiPoly.const(spec, (), psi.matrix[r][c])
                              for c in range(len(xv))) for r in range(len(xv)))
        inv_entries = tuple(tuple(MultiPoly.const(spec, (), psi.inv[r][c])
                                  for c in range(len(xv))) for r in range(len(xv)))
        lin = PolyLinear(spec, (), xv, entries, inv_entries)
        f_lemma = _div_var_power(scaled, t_name, 1)
        res = first_commutator(lin, eps_var, T, f_lemma, y_name, frame=W)
        n = len(xv)
        tags = tuple([frozenset({t_name})] * n + [frozenset({z_name})]
                     + [frozenset({t_name})] * n + [frozenset({z_name})])
        word = res.word
    elif isinstance(psi, ElemGen):
        h = psi.poly
        if not h.specialize({v: zero for v in h.vars}).is_zero():
            raise NotOriginPreserving("the conjugating shear must fix the origin")
        if psi.var == eps_var:
            gen = ElemGen(eps_var, scaled)
            word = TameWord(spec, W, [gen])
            tags = (frozenset({z_name, t_name}),)
        else:
            f_lemma = _div_var_power(scaled, t_name, 1)
            res = second_commutator(h.embed(W), T, f_lemma,
                                    psi.var, eps_var, y_name)
            word = res.word
            tags = (frozenset({t_name}), frozenset({t_name}), frozenset({z_name}),
                    frozenset({t_name}), frozenset({t_name}), frozenset({z_name}))
    else:
        raise NotOriginPreserving("translations cannot be conjugated here")

    for gen, tag in zip(word.gens, tags):
        for name in tag:
            _check_tag(gen, name, zero)
    if word.evaluate() != target:
        raise VerificationFailed("tagged conjugation failed to recompose")
    return LinElemConj(word, tags, target)


# ---------------------------------------------------------------------------
# linear maps over local rings


def _is_local_effective(spec: RingSpec) -> bool:
    if spec.is_field():
        return True
    if isinstance(spec, ModularIntegers):
        return len(factorize(spec.modulus)) == 1
    if isinstance(spec, Quotient):
        return spec.is_power_modulus() and spec.up.base.is_field()
    return False


def gauss_factor(alpha: LinGen, vars: Sequence[str]) -> FactorResult:
    """Factor an invertible linear map over a local ring into elementary
    shears; a non-trivial determinant survives as one diagonal generator."""
    spec = alpha.spec
    if not _is_local_effective(spec):
        raise NotLocalOrField(f"{spec.spec_str()} is not an effective local ring")
    vars = tuple(vars)
    n = len(vars)
    if len(alpha.matrix) != n:
        raise DimensionMismatch("matrix size must match the frame")
    target = gen_to_map(alpha, spec, vars)

    A = [list(row) for row in alpha.matrix]
    ops: list[tuple[int, int, Payload]] = []

    def row_add(r: int, src: int, c: Payload) -> None:
        ops.append((r, src, c))
        A[r] = [spec.add(A[r][k], spec.mul(c, A[src][k])) for k in range(n)]

    for col in range(n):
        if spec.try_inverse(A[col][col]) is None:
            pivot_row = None
            for r in range(col + 1, n):
                if spec.try_inverse(A[r][col]) is not None:
                    pivot_row = r
                    break
            if pivot_row is None:
                raise SingularMatrix("no unit pivot in column over the local ring")
            row_add(col, pivot_row, spec.one())
        pinv = spec.try_inverse(A[col][col])
        for r in range(n):
            if r != col and not spec.is_zero(A[r][col]):
                row_add(r, col, spec.neg(spec.mul(A[r][col], pinv)))

    gens: list[TameGen] = []
    for (r, src, c) in ops:
        gens.append(ElemGen(vars[r], MultiPoly.var(spec, vars, vars[src]).scale(spec.neg(c))))

    diag = [A[k][k] for k in range(n)]
    one = spec.one()
    prefix = one
    for k in range(n - 1):
        prefix = spec.mul(prefix, diag[k])
        if spec.eq(prefix, one):
            continue
        u = prefix
        uinv = spec.try_inverse(u)
        if uinv is None:
            raise SingularMatrix("diagonal entry is not a unit")
        lo, hi = vars[k], vars[k + 1]
        Xlo = MultiPoly.var(spec, vars, lo)
        Xhi = MultiPoly.var(spec, vars, hi)
        gens.append(ElemGen(hi, Xlo.scale(spec.sub(uinv, one))))
        gens.append(ElemGen(lo, Xhi))
        gens.append(ElemGen(hi, Xlo.scale(spec.sub(u, one))))
        gens.append(ElemGen(lo, Xhi.scale(spec.neg(uinv))))
    det = spec.mul(prefix, diag[n - 1])
    if not spec.eq(det, one):
        rows = tuple(tuple(det if r == c == n - 1 else (one if r == c else spec.zero())
                           for c in range(n)) for r in range(n))
        gens.append(LinGen(spec, rows))
    word = TameWord(spec, vars, gens)
    check_word_equals(word, target, "gauss_factor")
    return FactorResult(word, target, "gauss")


# ---------------------------------------------------------------------------
# torsion exponents over effective coefficient rings


def kill_torsion_exponent(psi: PolyMap, phi: PolyMap, z_vars: Sequence[str],
                          t: Payload, bound: int = 64) -> int:
    """Least N with psi(t^N z) = phi(t^N z); the maps must already agree
    after inverting t."""
    if psi.spec != phi.spec or psi.vars != phi.vars:
        raise SpecMismatch("maps must share ring and frame")
    spec = psi.spec
    if psi == phi:
        return 0
    if not (isinstance(spec, ModularIntegers)
            or (isinstance(spec, Quotient) and spec.is_power_modulus())):
        raise HypothesisFailed("torsion exponents need an effective torsion ring")
    z_idx = [psi.vars.index(v) for v in z_vars]
    t_elem = RingElem(spec, t)
    best = 0
    for a, b in zip(psi.coords, phi.coords):
        diff = a - b
        for e, c in diff.terms.items():
            d = sum(e[i] for i in z_idx)
            if d == 0:
                raise HypothesisFailed("maps differ away from the slice")
            mexp = annihilator_exponent(RingElem(spec, c), t_elem, bound)
            if mexp is None:
                raise BoundExceeded(
                    f"no annihilating power of t up to the bound {bound}")
            best = max(best, -(-mexp // d))
    return best

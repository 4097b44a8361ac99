import pathlib
import random
from fractions import Fraction

import pytest

from tameforge.automap import (
    ElemGen,
    LinGen,
    PolyMap,
    TameWord,
    TransGen,
    base_change,
    compose,
    compose_all,
    gen_to_map,
    identity_matrix,
    matrix_inverse,
    matrix_mul,
    stabilize,
    verify_certificate,
)
from tameforge.documents import load_doc, map_from_doc
from tameforge.errors import (
    BoundExceeded,
    HypothesisFailed,
    JacobianNotOne,
    NInsufficient,
    NotDivisible,
    NotElementary,
    NotLocalOrField,
    NotOriginPreserving,
    NotQAlgebra,
    NotSquareZero,
    OrderBoundViolated,
    SingularMatrix,
)
from tameforge.factor_core import (
    PoleTranslation,
    PolyLinear,
    elem_sweep,
    first_commutator,
    gauss_factor,
    integral_conjugate,
    kill_torsion_exponent,
    lin_elem_conj,
    m_bound,
    monomial_factor,
    nilslice_q_factor,
    nilslice_stab_factor,
    psi_conjugation_words,
    psi_t,
    second_commutator,
    shorten_step,
    sumcomp_merge,
    sweep_left,
)
from tameforge.multipoly import MultiPoly, parse_poly
from tameforge.randwords import random_poly, random_tame_map
from tameforge.rings import (
    Rationals,
    RingElem,
    parse_elem,
    parse_ring_spec,
    ppow,
)

FIXTURES = pathlib.Path(__file__).resolve().parents[1] / "src" / "tameforge" / "fixtures"

Q = Rationals()
QA2 = parse_ring_spec("Q[a]/(a^2)")
QT2 = parse_ring_spec("Q[T]/(T^2)")
Z4 = parse_ring_spec("Z/4")
Z8 = parse_ring_spec("Z/8")
Z9 = parse_ring_spec("Z/9")
RT = parse_ring_spec("loc(Q[t], t)")
RA = parse_ring_spec("loc(Q[a], a)")

A_PAY = parse_elem(QA2, "a").payload
T_PAY = parse_elem(QT2, "T").payload


def const_matrix(spec, payload_rows):
    return tuple(
        tuple(MultiPoly.const(spec, (), c) for c in row) for row in payload_rows
    )


def poly_identity(spec, scalar_vars, z_vars):
    one = MultiPoly.from_int(spec, scalar_vars, 1)
    zero = MultiPoly.zero(spec, scalar_vars)
    n = len(z_vars)
    rows = tuple(tuple(one if i == j else zero for j in range(n)) for i in range(n))
    return PolyLinear(spec, scalar_vars, z_vars, rows, rows)


def max_order(spec, polys):
    orders = [spec.t_order(c) for p in polys for c in p.terms.values()]
    return max(orders, default=0)


def gen_polys(word):
    return [g.poly for g in word.gens if isinstance(g, ElemGen)]


# -- square-zero composition ------------------------------------------------


def test_sumcomp_merges_to_sum():
    vars = ("X", "Y")
    expected = PolyMap(
        QA2,
        vars,
        (parse_poly(QA2, vars, "X + a*X^2"), parse_poly(QA2, vars, "Y + a*Y^2")),
    )
    G = [parse_poly(QA2, vars, "a*X^2"), MultiPoly.zero(QA2, vars)]
    H = [MultiPoly.zero(QA2, vars), parse_poly(QA2, vars, "a*Y^2")]
    assert sumcomp_merge(G, H) == expected


def test_sumcomp_zero_summand_passthrough():
    vars = ("X", "Y")
    G = [MultiPoly.zero(QA2, vars), MultiPoly.zero(QA2, vars)]
    H = [parse_poly(QA2, vars, "a*X*Y"), parse_poly(QA2, vars, "a*X^2")]
    merged = sumcomp_merge(G, H)
    xs = [MultiPoly.var(QA2, vars, v) for v in vars]
    assert merged == PolyMap(QA2, vars, (xs[0] + H[0], xs[1] + H[1]))


def test_sumcomp_negation_inverts():
    vars = ("X", "Y")
    G = [parse_poly(QA2, vars, "a*X^2 + a*Y"), parse_poly(QA2, vars, "a*X*Y")]
    merged = sumcomp_merge(G, [-g for g in G])
    assert merged.is_identity()


def test_sumcomp_rejects_surviving_products():
    vars = ("X", "Y")
    G = [parse_poly(Q, vars, "X^2"), MultiPoly.zero(Q, vars)]
    H = [MultiPoly.zero(Q, vars), MultiPoly.zero(Q, vars)]
    with pytest.raises(NotSquareZero):
        sumcomp_merge(G, H)


# -- the five-generator monomial word ----------------------------------------


def test_monomial_word_matches_displayed_map():
    res = monomial_factor(RingElem(QT2, T_PAY), 2)
    vars = ("X", "Z")
    expected = PolyMap(
        QT2,
        vars,
        (
            parse_poly(QT2, vars, "X + T*X^2"),
            parse_poly(QT2, vars, "Z - 2*T*X*Z"),
        ),
    )
    assert res.target == expected
    assert res.word.evaluate() == expected
    assert len(res.word.gens) == 5
    assert verify_certificate(res.certificate()).passed


def test_monomial_zero_coefficient_short_circuits():
    res = monomial_factor(RingElem(QA2, QA2.zero()), 3)
    assert res.target.is_identity()
    assert len(res.word.gens) == 0


def test_monomial_word_over_z4():
    res = monomial_factor(RingElem(Z4, 2), 3)
    assert len(res.word.gens) == 5
    assert res.word.evaluate() == res.target
    vars = ("X", "Z")
    expected = PolyMap(
        Z4,
        vars,
        (
            parse_poly(Z4, vars, "X + 2*X^3"),
            parse_poly(Z4, vars, "Z + 2*X^2*Z"),
        ),
    )
    assert res.target == expected
    assert verify_certificate(res.certificate()).passed


def test_monomial_rejects_non_nilpotent():
    with pytest.raises(NotSquareZero):
        monomial_factor(RingElem(Q, Fraction(1)), 2)
    with pytest.raises(ValueError):
        monomial_factor(RingElem(QA2, A_PAY), 0)


# -- stabilized slice factorization ------------------------------------------


def test_nilslice_stab_single_monomial_reduces():
    H = [parse_poly(QA2, ("X",), "a*X^2")]
    res = nilslice_stab_factor(H)
    direct = monomial_factor(RingElem(QA2, A_PAY), 2, "X", "Z1")
    assert [(g.var, str(g.poly)) for g in res.word.gens] == [
        (g.var, str(g.poly)) for g in direct.word.gens
    ]
    assert res.target == direct.target


def test_nilslice_stab_zero_slice_empty():
    H = [MultiPoly.zero(Q, ("X1", "X2")), MultiPoly.zero(Q, ("X1", "X2"))]
    res = nilslice_stab_factor(H)
    assert len(res.word.gens) == 0
    assert res.target.is_identity()


def test_nilslice_stab_pair_over_z4():
    from tameforge.automap import jacobian_det

    vars = ("X1", "X2")
    H = [parse_poly(Z4, vars, "2*X2^2"), parse_poly(Z4, vars, "2*X1*X2")]
    res = nilslice_stab_factor(H)
    phi = res.word.evaluate()
    assert phi.coord("X1") == MultiPoly.var(Z4, phi.vars, "X1") + H[0].embed(phi.vars)
    assert phi.coord("X2") == MultiPoly.var(Z4, phi.vars, "X2") + H[1].embed(phi.vars)
    assert jacobian_det(phi) == MultiPoly.from_int(Z4, phi.vars, 1)
    assert verify_certificate(res.certificate()).passed
    assert len(res.word.gens) == 6


def test_nilslice_stab_rejects_square_survivor():
    with pytest.raises(NotSquareZero):
        nilslice_stab_factor([parse_poly(Q, ("X",), "X^2")])


# -- slice factorization without stabilization --------------------------------


def test_nilslice_q_quadratic_potential():
    vars = ("X", "Y")
    H = [parse_poly(QA2, vars, "a*X^2"), parse_poly(QA2, vars, "-2*a*X*Y")]
    res = nilslice_q_factor(H)
    assert res.word.vars == vars
    xs = [MultiPoly.var(QA2, vars, v) for v in vars]
    assert res.target == PolyMap(QA2, vars, (xs[0] + H[0], xs[1] + H[1]))
    assert res.word.evaluate() == res.target
    assert verify_certificate(res.certificate()).passed


def test_nilslice_q_zero_slice_empty():
    for n in (1, 2, 3):
        vars = tuple(f"X{i + 1}" for i in range(n))
        H = [MultiPoly.zero(Q, vars) for _ in range(n)]
        assert len(nilslice_q_factor(H).word.gens) == 0


def test_nilslice_q_nagata_companion():
    nagata = map_from_doc(load_doc(str(FIXTURES / "nagata.map")))
    nbar = base_change(nagata, QA2)
    fix = gen_to_map(
        ElemGen("Y", parse_poly(QA2, ("X", "Y"), "2*X^3")), QA2, ("X", "Y")
    )
    rho = compose(fix, nbar)
    xs = [MultiPoly.var(QA2, ("X", "Y"), v) for v in ("X", "Y")]
    H = [rho.coord("X") - xs[0], rho.coord("Y") - xs[1]]
    assert H[0] == parse_poly(QA2, ("X", "Y"), "a*X^2")
    assert H[1] == parse_poly(QA2, ("X", "Y"), "-2*a*X*Y + 5*a*X^4")
    res = nilslice_q_factor(H)
    assert res.word.vars == ("X", "Y")
    assert res.word.evaluate() == rho
    assert len(res.word.gens) == 11
    assert verify_certificate(res.certificate()).passed


def test_nilslice_q_three_coordinates():
    vars = ("X1", "X2", "X3")
    H = [
        parse_poly(QA2, vars, "a*X3^2"),
        parse_poly(QA2, vars, "a*X1*X3"),
        parse_poly(QA2, vars, "-a*X1*X2"),
    ]
    xs = [MultiPoly.var(QA2, vars, v) for v in vars]
    target = PolyMap(QA2, vars, tuple(xs[i] + H[i] for i in range(3)))
    from tameforge.automap import jacobian_det

    assert jacobian_det(target) == MultiPoly.from_int(QA2, vars, 1)
    res = nilslice_q_factor(H)
    assert res.word.evaluate() == target
    assert verify_certificate(res.certificate()).passed


def test_nilslice_q_rejects():
    with pytest.raises(NotQAlgebra):
        nilslice_q_factor(
            [parse_poly(Z4, ("X1", "X2"), "2*X2^2"), MultiPoly.zero(Z4, ("X1", "X2"))]
        )
    with pytest.raises(JacobianNotOne):
        nilslice_q_factor(
            [parse_poly(QA2, ("X1", "X2"), "a*X1"), MultiPoly.zero(QA2, ("X1", "X2"))]
        )


# -- the doubling homomorphism ------------------------------------------------


def test_psi_doubles_an_elementary_shear():
    xv = ("X1", "X2")
    f = parse_poly(RT, xv, "X2^2")
    phi = gen_to_map(ElemGen("X1", f), RT, xv)
    psi = psi_t(phi, ("Z1", "Z2"))
    big = xv + ("Z1", "Z2")
    t = RT.t_elem()
    shifted = MultiPoly.var(RT, big, "X2") + MultiPoly.var(RT, big, "Z2").scale(t)
    expected_z1 = MultiPoly.var(RT, big, "Z1") + (shifted * shifted).scale(
        RT.t_inverse(1)
    )
    assert psi.coord("X1") == MultiPoly.var(RT, big, "X1")
    assert psi.coord("X2") == MultiPoly.var(RT, big, "X2")
    assert psi.coord("Z1") == expected_z1
    assert psi.coord("Z2") == MultiPoly.var(RT, big, "Z2")


def test_psi_fixes_identity():
    phi = PolyMap.identity(RT, ("X1", "X2"))
    assert psi_t(phi, ("Z1", "Z2")).is_identity()


def test_psi_is_a_homomorphism():
    rng = random.Random(23)
    xv = ("X1", "X2")
    zv = ("Z1", "Z2")
    for _ in range(10):
        phi = random_tame_map(RT, xv, rng, length=3)
        psi = random_tame_map(RT, xv, rng, length=3)
        lhs = psi_t(compose(phi, psi), zv)
        rhs = compose(psi_t(phi, zv), psi_t(psi, zv))
        assert lhs == rhs


def test_psi_conjugation_identity_map():
    res = psi_conjugation_words(PolyMap.identity(RT, ("X1", "X2")), ("Z1", "Z2"))
    assert res.psi.is_identity()
    assert res.phi_stab.is_identity()
    assert res.omega.evaluate().is_identity()


def test_psi_conjugation_shear_identities_restated():
    xv = ("X1", "X2")
    phi = gen_to_map(ElemGen("X1", parse_poly(RT, xv, "t*X2^2")), RT, xv)
    res = psi_conjugation_words(phi, ("Z1", "Z2"))
    doubled = psi_t(phi, ("Z1", "Z2"))
    first = compose_all(
        [
            res.sigma.evaluate(),
            res.eta.evaluate(),
            res.phi_stab,
            res.eta.inverse().evaluate(),
            res.sigma.inverse().evaluate(),
        ]
    )
    second = compose_all(
        [
            res.sigma.evaluate(),
            res.phi_stab,
            res.omega.evaluate(),
            res.sigma.inverse().evaluate(),
        ]
    )
    assert first == doubled
    assert second == doubled


def test_psi_conjugation_nagata_companion_integral():
    nagata = map_from_doc(load_doc(str(FIXTURES / "nagata.map")))
    nloc = base_change(nagata, RA)
    fix = gen_to_map(
        ElemGen("Y", parse_poly(RA, ("X", "Y"), "2*X^3")), RA, ("X", "Y")
    )
    rho = compose(fix, nloc)
    res = psi_conjugation_words(rho, ("Z1", "Z2"))
    assert max_order(RA, gen_polys(res.omega)) <= 0


def test_psi_conjugation_rejects_non_divisible():
    xv = ("X1", "X2")
    phi = gen_to_map(ElemGen("X1", parse_poly(RT, xv, "X2^2")), RT, xv)
    with pytest.raises(NotDivisible):
        psi_conjugation_words(phi, ("Z1", "Z2"))


# -- sweeping a doubled word into a pole translation ---------------------------


def test_sweep_single_shear_taylor_split():
    xv = ("X1", "X2")
    rho = TameWord(RT, xv, [ElemGen("X1", parse_poly(RT, xv, "X2^2"))])
    res = sweep_left(rho, 1, ("Z1", "Z2"))
    assert res.tau.p == (parse_poly(RT, xv, "X2^2"), MultiPoly.zero(RT, xv))
    assert len(res.reduced.gens) == 1
    gen = res.reduced.gens[0]
    big = xv + ("Z1", "Z2")
    assert gen.var == "Z1"
    assert gen.poly == parse_poly(RT, big, "2*X2*Z2 + t*Z2^2")


def test_sweep_empty_word():
    rho = TameWord(RT, ("X1", "X2"), [])
    res = sweep_left(rho, 2, ("Z1", "Z2"))
    assert all(p.is_zero() for p in res.tau.p)
    assert len(res.reduced.gens) == 0


def test_sweep_four_shears_recompose():
    xv = ("X1", "X2")
    zv = ("Z1", "Z2")
    gens = [
        ElemGen("X1", parse_poly(RT, xv, "t*X2^2 + X2")),
        ElemGen("X2", parse_poly(RT, xv, "X1^3 - 2")),
        ElemGen("X1", parse_poly(RT, xv, "X2 + t^2")),
        ElemGen("X2", parse_poly(RT, xv, "t*X1")),
    ]
    rho = TameWord(RT, xv, gens)
    res = sweep_left(rho, 2, zv)
    big = xv + zv
    lhs = psi_t(rho.evaluate(), zv, 2)
    rhs = compose(res.tau.to_map(big), res.reduced.evaluate())
    assert lhs == rhs
    assert max_order(RT, gen_polys(res.reduced)) <= 0
    assert max_order(RT, list(res.tau.p)) <= 0


def test_sweep_rejects_bad_generators():
    xv = ("X1", "X2")
    lin = LinGen(RT, ((RT.one(), RT.zero()), (RT.zero(), RT.one())))
    with pytest.raises(NotElementary):
        sweep_left(TameWord(RT, xv, [lin]), 1)
    poley = MultiPoly.var(RT, xv, "X2").scale(RT.t_inverse(1))
    with pytest.raises(HypothesisFailed):
        sweep_left(TameWord(RT, xv, [ElemGen("X1", poley)]), 1)


# -- the symbolic Taylor sweep -------------------------------------------------


def test_elem_sweep_zero_addend():
    slots = ("X1", "X2")
    sf = ("A",)
    f = MultiPoly.zero(RT, slots)
    x = [MultiPoly.var(RT, sf, "A"), MultiPoly.zero(RT, sf)]
    u = [MultiPoly.zero(RT, sf), MultiPoly.from_int(RT, sf, 1)]
    res = elem_sweep(f, "X1", x, u)
    assert list(res.w) == u
    assert res.omega.poly.is_zero()
    assert res.g.is_zero()
    assert res.t_orders == (0, 0, 0)


def test_elem_sweep_square_around_origin():
    slots = ("X1", "X2")
    sf = ()
    f = MultiPoly.var(RT, slots, "X2") * MultiPoly.var(RT, slots, "X2")
    zero = MultiPoly.zero(RT, sf)
    res = elem_sweep(f, "X1", [zero, zero], [zero, zero], z_names=("Z1", "Z2"))
    assert all(p.is_zero() for p in res.w)
    assert res.omega.poly.is_zero()
    bigs = ("Z1", "Z2", "S")
    assert res.g == parse_poly(RT, bigs, "Z2^2")


def test_elem_sweep_identity_specializes_to_powers():
    slots = ("X1", "X2")
    sf = ("A",)
    zv = ("Z1", "Z2")
    f = parse_poly(RT, slots, "X2^3 + 2*X2").scale(RT.t_inverse(1))
    x = [MultiPoly.var(RT, sf, "A"), MultiPoly.zero(RT, sf)]
    u = [
        MultiPoly.const(RT, sf, RT.t_inverse(2)),
        MultiPoly.var(RT, sf, "A").scale(RT.t_inverse(1)),
    ]
    res = elem_sweep(f, "X1", x, u, z_names=zv)
    assert max(res.t_orders) <= m_bound(3, 1, 2)

    frame = sf + zv
    i = 0
    for n_exp in (1, 2):
        tn = ppow(RT, RT.t_elem(), n_exp)
        tninv = RT.t_inverse(n_exp)

        def translation(nums):
            coords = []
            for v in frame:
                cur = MultiPoly.var(RT, frame, v)
                if v in zv:
                    cur = cur + nums[zv.index(v)].embed(frame).scale(tninv)
                coords.append(cur)
            return PolyMap(RT, frame, coords)

        shifted = {
            slots[j]: x[j].embed(frame)
            + MultiPoly.var(RT, frame, zv[j]).scale(tn)
            for j in range(2)
        }
        eps = PolyMap.identity(RT, frame).with_coord(
            zv[i],
            MultiPoly.var(RT, frame, zv[i]) + f.substitute(shifted).scale(tninv),
        )
        sigma = translation(u)
        nu = translation(list(res.w))
        omega_map = PolyMap.identity(RT, frame).with_coord(
            zv[i], MultiPoly.var(RT, frame, zv[i]) + res.omega.poly.embed(frame)
        )
        xi = PolyMap.identity(RT, frame).with_coord(
            zv[i],
            MultiPoly.var(RT, frame, zv[i])
            + res.g.specialize({"S": tn}).scale(tn),
        )
        assert compose(eps, sigma) == compose_all([nu, omega_map, xi])


# -- commutator splittings ------------------------------------------------------


def test_first_commutator_identity_conjugator():
    xv = ("X1", "X2")
    alpha = poly_identity(Q, (), xv)
    b = MultiPoly.from_int(Q, xv, 1)
    f = parse_poly(Q, xv, "X2^2")
    res = first_commutator(alpha, "X1", b, f, "Y")
    W = xv + ("Y",)
    eps = gen_to_map(ElemGen("X1", f), Q, xv)
    assert res.target == stabilize(eps, ("Y",))
    assert res.word.evaluate() == res.target


def test_first_commutator_gl3():
    xv = ("X1", "X2", "X3")
    mat = (
        (Fraction(1), Fraction(2), Fraction(0)),
        (Fraction(0), Fraction(1), Fraction(3)),
        (Fraction(1), Fraction(0), Fraction(1)),
    )
    inv = matrix_inverse(Q, mat)
    alpha = PolyLinear(Q, (), xv, const_matrix(Q, mat), const_matrix(Q, inv))
    b = MultiPoly.from_int(Q, xv, 1)
    f = parse_poly(Q, xv, "X2*X3")
    res = first_commutator(alpha, "X1", b, f, "Y")
    assert len(res.word.gens) == 8
    W = xv + ("Y",)
    eps = PolyMap.identity(Q, W).with_coord(
        "X1", MultiPoly.var(Q, W, "X1") + (b * f).embed(W)
    )
    target = compose_all([alpha.to_map(W), eps, alpha.inverse().to_map(W)])
    assert res.word.evaluate() == target


def test_first_commutator_diagonal_poles_compensated():
    xv = ("X1", "X2", "X3")
    t = RT.t_elem()
    tinv = RT.t_inverse(1)
    diag = ((tinv, RT.zero(), RT.zero()),
            (RT.zero(), t, RT.zero()),
            (RT.zero(), RT.zero(), RT.one()))
    diag_inv = ((t, RT.zero(), RT.zero()),
                (RT.zero(), tinv, RT.zero()),
                (RT.zero(), RT.zero(), RT.one()))
    alpha = PolyLinear(RT, (), xv, const_matrix(RT, diag), const_matrix(RT, diag_inv))
    b = MultiPoly.const(RT, xv, ppow(RT, t, 2))
    f = parse_poly(RT, xv, "X2*X3")
    res = first_commutator(alpha, "X1", b, f, "Y")
    kappa_polys = gen_polys(res.outer)
    assert max_order(RT, kappa_polys) <= 0
    assert res.word.evaluate() == res.target


def test_integral_conjugate_zero_pole_reduces():
    xv = ("X1", "X2")
    alpha = poly_identity(RT, (), xv)
    g = parse_poly(RT, xv, "X2^2")
    res = integral_conjugate(alpha, "X1", g, 0, "Y")
    direct = first_commutator(alpha, "X1", MultiPoly.from_int(RT, xv, 1), g, "Y")
    assert [(gn.var, str(gn.poly)) for gn in res.word.gens] == [
        (gn.var, str(gn.poly)) for gn in direct.word.gens
    ]


def test_integral_conjugate_diagonal():
    xv = ("X1", "X2")
    t = RT.t_elem()
    tinv = RT.t_inverse(1)
    diag = ((tinv, RT.zero()), (RT.zero(), t))
    diag_inv = ((t, RT.zero()), (RT.zero(), tinv))
    alpha = PolyLinear(RT, (), xv, const_matrix(RT, diag), const_matrix(RT, diag_inv))
    g = parse_poly(RT, xv, "t^3*X2")
    res = integral_conjugate(alpha, "X1", g, 1, "Y")
    assert max_order(RT, gen_polys(res.word)) <= 0
    assert res.word.evaluate() == res.target


def test_integral_conjugate_rejects_shallow_divisibility():
    xv = ("X1", "X2")
    t = RT.t_elem()
    tinv = RT.t_inverse(1)
    diag = ((tinv, RT.zero()), (RT.zero(), t))
    diag_inv = ((t, RT.zero()), (RT.zero(), tinv))
    alpha = PolyLinear(RT, (), xv, const_matrix(RT, diag), const_matrix(RT, diag_inv))
    with pytest.raises(OrderBoundViolated):
        integral_conjugate(alpha, "X1", parse_poly(RT, xv, "t*X2"), 1, "Y")


def test_second_commutator_zero_outer():
    W = ("X1", "X2", "Y")
    f = MultiPoly.zero(Q, W)
    b = MultiPoly.from_int(Q, W, 1)
    g = parse_poly(Q, W, "X1^3")
    res = second_commutator(f, b, g, "X1", "X2", "Y")
    assert res.outer.gens[0].poly.is_zero()
    assert res.outer.gens[1].poly == parse_poly(Q, W, "Y")
    eps = PolyMap.identity(Q, W).with_coord(
        "X2", MultiPoly.var(Q, W, "X2") + b * g
    )
    assert res.target == eps
    assert res.word.evaluate() == eps


def test_second_commutator_cubic():
    W = ("X1", "X2", "Y")
    f = parse_poly(Q, W, "X2^2")
    b = MultiPoly.from_int(Q, W, 1)
    g = parse_poly(Q, W, "X1^3")
    res = second_commutator(f, b, g, "X1", "X2", "Y")
    assert len(res.word.gens) == 6
    assert res.outer.gens[0].poly == parse_poly(Q, W, "2*X2*Y - Y^2")
    assert res.outer.gens[1].poly == parse_poly(Q, W, "Y")
    psi = PolyMap.identity(Q, W).with_coord("X1", MultiPoly.var(Q, W, "X1") + f)
    psi_inv = PolyMap.identity(Q, W).with_coord("X1", MultiPoly.var(Q, W, "X1") - f)
    eps = PolyMap.identity(Q, W).with_coord("X2", MultiPoly.var(Q, W, "X2") + b * g)
    assert res.word.evaluate() == compose_all([psi, eps, psi_inv])


def test_second_commutator_random_mod9():
    rng = random.Random(41)
    W = ("X1", "X2", "Y")
    for _ in range(5):
        f = random_poly(Z9, ("X1", "X2"), rng, max_deg=4, omit="X1").embed(W)
        g = random_poly(Z9, ("X1", "X2"), rng, max_deg=4, omit="X2").embed(W)
        b = MultiPoly.from_int(Z9, W, 2)
        res = second_commutator(f, b, g, "X1", "X2", "Y")
        psi = PolyMap.identity(Z9, W).with_coord(
            "X1", MultiPoly.var(Z9, W, "X1") + f
        )
        psi_inv = PolyMap.identity(Z9, W).with_coord(
            "X1", MultiPoly.var(Z9, W, "X1") - f
        )
        eps = PolyMap.identity(Z9, W).with_coord(
            "X2", MultiPoly.var(Z9, W, "X2") + b * g
        )
        assert res.word.evaluate() == compose_all([psi, eps, psi_inv])


# -- one shortening step ---------------------------------------------------------


def _shorten_inputs(n_exp):
    xv = ("X1", "X2")
    zv = ("Z1", "Z2")
    t = RT.t_elem()
    tinv = RT.t_inverse(1)
    alpha = LinGen(RT, ((RT.one(), RT.one()), (RT.zero(), tinv)))
    eps = ElemGen("X1", parse_poly(RT, xv, "t*X2^2"))
    p = (parse_poly(RT, xv, "X2^2"), parse_poly(RT, xv, "X1"))
    tau = PoleTranslation(RT, xv, zv, p, n_exp)
    gd = ((MultiPoly.const(RT, xv, tinv), MultiPoly.zero(RT, xv)),
          (MultiPoly.zero(RT, xv), MultiPoly.const(RT, xv, t)))
    gd_inv = ((MultiPoly.const(RT, xv, t), MultiPoly.zero(RT, xv)),
              (MultiPoly.zero(RT, xv), MultiPoly.const(RT, xv, tinv)))
    gamma = PolyLinear(RT, xv, zv, gd, gd_inv)
    return alpha, eps, tau, gamma


def test_shorten_trivial_passthrough():
    xv = ("X1", "X2")
    zv = ("Z1", "Z2")
    alpha = LinGen(RT, ((RT.one(), RT.zero()), (RT.zero(), RT.one())))
    eps = ElemGen("X1", MultiPoly.zero(RT, xv))
    p = (parse_poly(RT, xv, "X2^2"), parse_poly(RT, xv, "X1"))
    tau = PoleTranslation(RT, xv, zv, p, 2)
    gamma = poly_identity(RT, xv, zv)
    res = shorten_step(alpha, eps, tau, gamma, 2)
    assert res.tau.p == tau.p
    assert res.gamma.entries == gamma.entries
    assert len(res.zeta.gens) == 0


def test_shorten_threshold_and_pole_independence():
    alpha, eps, tau8, gamma = _shorten_inputs(8)
    probe = shorten_step(alpha, eps, tau8, gamma, 8)
    required = probe.required_n
    assert required >= 1

    runs = {}
    for n_exp in (required, required + 1):
        a, e, tau, g = _shorten_inputs(n_exp)
        runs[n_exp] = shorten_step(a, e, tau, g, n_exp)
    lo, hi = runs[required], runs[required + 1]
    assert [str(p) for p in lo.tau.p] == [str(p) for p in hi.tau.p]
    assert [[str(c) for c in row] for row in lo.gamma.entries] == [
        [str(c) for c in row] for row in hi.gamma.entries
    ]
    assert str(lo.zeta) != str(hi.zeta)
    assert max_order(RT, gen_polys(lo.zeta)) <= 0

    a, e, tau, g = _shorten_inputs(required - 1)
    with pytest.raises(NInsufficient) as exc:
        shorten_step(a, e, tau, g, required - 1)
    assert exc.value.required == required


# -- tagged conjugation of a vanishing shear --------------------------------------


def _check_tags(res):
    zero = res.word.gens[0].poly.spec.zero() if res.word.gens else None
    for gen, tag in zip(res.word.gens, res.tags):
        for name in tag:
            assert gen.poly.specialize({name: zero}).is_zero()


def test_lin_elem_conj_same_position_single_gen():
    xv = ("X1", "X2")
    F = xv + ("Z",)
    psi = ElemGen("X1", parse_poly(Q, xv, "X2^2"))
    eps = parse_poly(Q, F, "Z*X2^2")
    res = lin_elem_conj(psi, "X1", eps)
    assert len(res.word.gens) == 1
    assert res.tags == (frozenset({"Z", "T"}),)
    _check_tags(res)


def test_lin_elem_conj_linear():
    xv = ("X1", "X2")
    F = xv + ("Z",)
    psi = LinGen(Q, ((Fraction(2), Fraction(1)), (Fraction(1), Fraction(1))))
    eps = parse_poly(Q, F, "Z*X2")
    res = lin_elem_conj(psi, "X1", eps)
    assert len(res.word.gens) == 6
    assert res.tags == (
        frozenset({"T"}),
        frozenset({"T"}),
        frozenset({"Z"}),
        frozenset({"T"}),
        frozenset({"T"}),
        frozenset({"Z"}),
    )
    _check_tags(res)
    W = xv + ("Y", "Z", "T")
    scaled = eps.embed(W).substitute(
        {"Z": MultiPoly.var(Q, W, "Z") * MultiPoly.var(Q, W, "T")}
    )
    eps_map = PolyMap.identity(Q, W).with_coord(
        "X1", MultiPoly.var(Q, W, "X1") + scaled
    )
    psi_map = stabilize(gen_to_map(psi, Q, xv), ("Y", "Z", "T"))
    psi_inv = stabilize(gen_to_map(psi.inverse(), Q, xv), ("Y", "Z", "T"))
    assert res.word.evaluate() == compose_all([psi_map, eps_map, psi_inv])


def test_lin_elem_conj_cross_position():
    xv = ("X1", "X2")
    F = xv + ("Z",)
    psi = ElemGen("X1", parse_poly(Q, xv, "X2^2"))
    eps = parse_poly(Q, F, "Z*X1")
    res = lin_elem_conj(psi, "X2", eps)
    assert len(res.word.gens) == 6
    _check_tags(res)


def test_lin_elem_conj_rejects_translations():
    xv = ("X1", "X2")
    F = xv + ("Z",)
    eps = parse_poly(Q, F, "Z*X2")
    with pytest.raises(NotOriginPreserving):
        lin_elem_conj(TransGen(Q, (Fraction(1), Fraction(0))), "X1", eps)


# -- linear maps over local rings ---------------------------------------------------


def test_gauss_identity_empty():
    alpha = LinGen(Z8, tuple(identity_matrix(Z8, 3)))
    res = gauss_factor(alpha, ("X1", "X2", "X3"))
    assert len(res.word.gens) == 0


def test_gauss_whitehead_pair():
    u = parse_elem(QT2, "1 + T").payload
    uinv = QT2.try_inverse(u)
    assert uinv is not None
    alpha = LinGen(QT2, ((u, QT2.zero()), (QT2.zero(), uinv)))
    res = gauss_factor(alpha, ("X", "Y"))
    gens = res.word.gens
    assert len(gens) == 4
    assert all(isinstance(g, ElemGen) for g in gens)
    prod = identity_matrix(QT2, 2)
    vars = ("X", "Y")
    for g in gens:
        row = vars.index(g.var)
        mat = [list(r) for r in identity_matrix(QT2, 2)]
        for exps, c in g.poly.terms.items():
            col = exps.index(1)
            mat[row][col] = c
        prod = matrix_mul(QT2, prod, mat)
    assert all(
        QT2.eq(prod[i][j], alpha.matrix[i][j]) for i in range(2) for j in range(2)
    )


def test_gauss_sl3_elementaries_only():
    mat = (
        (Fraction(1), Fraction(2), Fraction(0)),
        (Fraction(0), Fraction(1), Fraction(3)),
        (Fraction(1), Fraction(2), Fraction(1)),
    )
    alpha = LinGen(Q, mat)
    res = gauss_factor(alpha, ("X1", "X2", "X3"))
    assert all(isinstance(g, ElemGen) for g in res.word.gens)
    assert res.word.evaluate() == gen_to_map(alpha, Q, ("X1", "X2", "X3"))
    assert verify_certificate(res.certificate()).passed


def test_gauss_unit_determinant_tail():
    alpha = LinGen(Z8, ((1, 2), (3, 3)))
    res = gauss_factor(alpha, ("X", "Y"))
    tails = [g for g in res.word.gens if isinstance(g, LinGen)]
    assert len(tails) == 1
    assert tails[0].matrix == ((1, 0), (0, 5))
    assert verify_certificate(res.certificate()).passed


def test_gauss_rejects():
    Z6 = parse_ring_spec("Z/6")
    with pytest.raises(NotLocalOrField):
        gauss_factor(LinGen(Z6, ((1, 0), (0, 1))), ("X", "Y"))
    with pytest.raises(SingularMatrix):
        LinGen(Z8, ((2, 0), (0, 1)))


# -- torsion exponents ----------------------------------------------------------------


def test_torsion_exponent_equal_maps():
    fr = ("X", "Z")
    ident = PolyMap.identity(Z8, fr)
    assert kill_torsion_exponent(ident, ident, ("Z",), 2) == 0
    identq = PolyMap.identity(Q, fr)
    assert kill_torsion_exponent(identq, identq, ("Z",), Fraction(2)) == 0


def test_torsion_exponent_annihilator_search():
    fr = ("X", "Z")
    X = MultiPoly.var(Z8, fr, "X")
    Z = MultiPoly.var(Z8, fr, "Z")
    ident = PolyMap.identity(Z8, fr)

    def least_annihilator(c):
        m = 0
        while (pow(2, m, 64) * c) % 8 != 0:
            m += 1
        return m

    cases = [
        ((Z * Z).scale(4), 2, 4),
        (Z.scale(4), 1, 4),
        (Z.scale(2), 1, 2),
        ((Z * Z * X).scale(2), 2, 2),
    ]
    for diff, zdeg, coeff, in cases:
        phi = PolyMap(Z8, fr, (X + diff, Z))
        expected = -(-least_annihilator(coeff) // zdeg)
        assert kill_torsion_exponent(phi, ident, ("Z",), 2) == expected


def test_torsion_exponent_rejects():
    fr = ("X", "Z")
    X = MultiPoly.var(Z8, fr, "X")
    Z = MultiPoly.var(Z8, fr, "Z")
    ident = PolyMap.identity(Z8, fr)
    off_slice = PolyMap(Z8, fr, (X + (X * X).scale(4), Z))
    with pytest.raises(HypothesisFailed):
        kill_torsion_exponent(off_slice, ident, ("Z",), 2)
    on_slice = PolyMap(Z8, fr, (X + (Z * Z).scale(4), Z))
    with pytest.raises(BoundExceeded):
        kill_torsion_exponent(on_slice, ident, ("Z",), 2, bound=0)


# -- every emitted word is certified ----------------------------------------------------


def test_certificates_verify_across_operations():
    results = [
        monomial_factor(RingElem(QT2, T_PAY), 3),
        nilslice_stab_factor(
            [parse_poly(Z4, ("X1", "X2"), "2*X2^2"),
             parse_poly(Z4, ("X1", "X2"), "2*X1*X2")]
        ),
        nilslice_q_factor(
            [parse_poly(QA2, ("X", "Y"), "a*X^2"),
             parse_poly(QA2, ("X", "Y"), "-2*a*X*Y")]
        ),
        gauss_factor(LinGen(Z8, ((1, 2), (3, 7))), ("X", "Y")),
    ]
    for res in results:
        assert verify_certificate(res.certificate()).passed

import random
from fractions import Fraction

import pytest

from tameforge.errors import FrameMismatch, NotQAlgebra, ParseError, SpecMismatch
from tameforge.multipoly import MultiPoly, convert_poly, from_fraction, lift_poly, parse_poly
from tameforge.rings import Integers, Rationals, RingElem, parse_elem, parse_ring_spec


def random_poly(spec, vars, rng, max_deg=3, n_terms=4):
    p = MultiPoly.zero(spec, vars)
    for _ in range(rng.randint(0, n_terms)):
        e = tuple(rng.randint(0, max_deg) for _ in vars)
        p = p + MultiPoly.monomial(spec, vars, e, spec.random_elem(rng))
    return p


RING_TEXTS = ["Q", "Z", "Z/8", "Q[a]/(a^2)", "loc(Q[t], t)", "Z/4[T]/(T^2)"]


@pytest.mark.parametrize("ring_text", RING_TEXTS)
def test_str_reparses(ring_text):
    spec = parse_ring_spec(ring_text)
    rng = random.Random(17)
    vars = ("X", "Y")
    for _ in range(80):
        p = random_poly(spec, vars, rng)
        q = parse_poly(spec, vars, str(p))
        assert p == q, str(p)


@pytest.mark.parametrize("ring_text", RING_TEXTS)
def test_arithmetic_axioms(ring_text):
    spec = parse_ring_spec(ring_text)
    rng = random.Random(29)
    vars = ("X", "Y")
    for _ in range(40):
        a = random_poly(spec, vars, rng)
        b = random_poly(spec, vars, rng)
        c = random_poly(spec, vars, rng)
        assert (a + b) + c == a + (b + c)
        assert a + b == b + a
        assert (a * b) * c == a * (b * c)
        assert a * b == b * a
        assert a * (b + c) == a * b + a * c
        assert a - a == MultiPoly.zero(spec, vars)
        assert a * 1 == a
        assert a * 0 == MultiPoly.zero(spec, vars)


def test_parse_examples():
    Q = Rationals()
    p = parse_poly(Q, ("X", "Y"), "X^2*Y - 3*Y + 1/2")
    assert str(p) == "X^2*Y - 3*Y + 1/2"
    assert p.degree() == 3
    assert p.degree_in("Y") == 1
    spec = parse_ring_spec("Q[a]/(a^2)")
    q = parse_poly(spec, ("X", "Y"), "(1 + a)*X + a*Y^2")
    assert str(q) == "a*Y^2 + (a + 1)*X"
    L = parse_ring_spec("loc(Q[t], t)")
    r = parse_poly(L, ("Z",), "Z/t^2 + t*Z^3")
    assert str(r) == "t*Z^3 + 1/t^2*Z"
    assert parse_poly(L, ("Z",), str(r)) == r


def test_parse_errors():
    Q = Rationals()
    with pytest.raises(ParseError):
        parse_poly(Q, ("X",), "X/Y")
    with pytest.raises(ParseError):
        parse_poly(Q, ("X",), "1/X")
    with pytest.raises(ParseError):
        parse_poly(Q, ("X",), "W + 1")
    Z = Integers()
    with pytest.raises(ParseError):
        parse_poly(Z, ("X",), "X/2")


def test_substitution_matches_evaluation():
    # evaluation at random points is the independent check on substitution
    Q = Rationals()
    vars = ("X", "Y")
    rng = random.Random(31)
    for _ in range(60):
        p = random_poly(Q, vars, rng)
        f = random_poly(Q, vars, rng, max_deg=2, n_terms=3)
        g = random_poly(Q, vars, rng, max_deg=2, n_terms=3)
        composed = p.substitute({"X": f, "Y": g})
        pt = {"X": Q.random_elem(rng), "Y": Q.random_elem(rng)}
        lhs = composed.eval_payload(pt)
        rhs = p.eval_payload({"X": f.eval_payload(pt), "Y": g.eval_payload(pt)})
        assert Q.eq(lhs, rhs)


def test_substitution_associativity():
    Q = Rationals()
    vars = ("X", "Y")
    rng = random.Random(37)
    for _ in range(25):
        p = random_poly(Q, vars, rng, max_deg=2)
        f = {v: random_poly(Q, vars, rng, max_deg=2, n_terms=2) for v in vars}
        g = {v: random_poly(Q, vars, rng, max_deg=2, n_terms=2) for v in vars}
        left = p.substitute(f).substitute(g)
        right = p.substitute({v: f[v].substitute(g) for v in vars})
        assert left == right


def test_substitution_identity_default():
    Q = Rationals()
    p = parse_poly(Q, ("X", "Y"), "X*Y + Y^2")
    shifted = p.substitute({"X": parse_poly(Q, ("X", "Y"), "X + 1")})
    assert shifted == parse_poly(Q, ("X", "Y"), "(X + 1)*Y + Y^2")


def test_partial_product_rule():
    Q = Rationals()
    vars = ("X", "Y")
    rng = random.Random(43)
    for _ in range(40):
        a = random_poly(Q, vars, rng)
        b = random_poly(Q, vars, rng)
        for v in vars:
            assert (a * b).partial(v) == a.partial(v) * b + a * b.partial(v)
        assert a.partial("X").partial("Y") == a.partial("Y").partial("X")


def test_antiderivative_inverts_partial():
    Q = Rationals()
    vars = ("X", "Y")
    rng = random.Random(47)
    for _ in range(40):
        a = random_poly(Q, vars, rng)
        assert a.antiderivative("X").partial("X") == a
    Z = Integers()
    with pytest.raises(NotQAlgebra):
        parse_poly(Z, ("X",), "X").antiderivative("X")


def test_antiderivative_in_char_zero_quotient():
    spec = parse_ring_spec("Q[a]/(a^2)")
    p = parse_poly(spec, ("X", "Y"), "a*X^2 + 3*X*Y")
    ad = p.antiderivative("X")
    assert ad.partial("X") == p
    assert ad.constant_payload() == spec.zero()


def test_homogeneous_components():
    Q = Rationals()
    rng = random.Random(53)
    for _ in range(30):
        p = random_poly(Q, ("X", "Y"), rng)
        comps = p.homogeneous_components()
        total = MultiPoly.zero(Q, ("X", "Y"))
        for d, c in comps.items():
            assert all(sum(e) == d for e in c.terms)
            total = total + c
        assert total == p
    p = parse_poly(Q, ("X", "Y"), "X^2 + X*Y + Y + 3")
    assert str(p.leading_form()) == "X^2 + X*Y"


def test_coeffs_in_reconstructs():
    Q = Rationals()
    rng = random.Random(59)
    vars = ("X", "Y", "Z")
    for _ in range(30):
        p = random_poly(Q, vars, rng)
        co = p.coeffs_in("Y")
        rebuilt = MultiPoly.zero(Q, vars)
        y = MultiPoly.var(Q, vars, "Y")
        for k, c in co.items():
            rebuilt = rebuilt + c.embed(vars) * y ** k
        assert rebuilt == p


def test_specialize_and_eval():
    Q = Rationals()
    p = parse_poly(Q, ("X", "Y"), "X^2*Y + 2*X")
    q = p.specialize({"Y": Fraction(3)})
    assert q.vars == ("X",)
    assert q == parse_poly(Q, ("X",), "3*X^2 + 2*X")
    assert p.eval_payload({"X": Fraction(2), "Y": Fraction(1)}) == Fraction(8)
    with pytest.raises(FrameMismatch):
        p.eval_payload({"X": Fraction(1)})


def test_embed_rename_drop():
    Q = Rationals()
    p = parse_poly(Q, ("X", "Y"), "X*Y + X")
    big = p.embed(("W", "X", "Y"))
    assert big.vars == ("W", "X", "Y")
    assert big == parse_poly(Q, ("W", "X", "Y"), "X*Y + X")
    back = big.drop_vars(["W"])
    assert back == p
    with pytest.raises(FrameMismatch):
        big.drop_vars(["X"])
    r = p.rename({"X": "U"})
    assert r == parse_poly(Q, ("U", "Y"), "U*Y + U")
    with pytest.raises(FrameMismatch):
        p.rename({"X": "Y"})
    with pytest.raises(FrameMismatch):
        p.embed(("X",))


def test_coeff_ring_changes():
    Qa = parse_ring_spec("Q[a]")
    Qa2 = parse_ring_spec("Q[a]/(a^2)")
    p = parse_poly(Qa, ("X",), "a^2*X^2 + a*X + 1")
    q = convert_poly(p, Qa2)
    assert q == parse_poly(Qa2, ("X",), "a*X + 1")
    back = lift_poly(q, Qa)
    assert back == parse_poly(Qa, ("X",), "a*X + 1")


def test_from_fraction():
    spec = parse_ring_spec("Q[a]/(a^2)")
    half = from_fraction(spec, Fraction(1, 2))
    assert spec.eq(spec.mul(half, spec.from_int(2)), spec.one())
    with pytest.raises(NotQAlgebra):
        from_fraction(Integers(), Fraction(1, 2))


def test_frame_mismatch_rejected():
    Q = Rationals()
    a = parse_poly(Q, ("X",), "X")
    b = parse_poly(Q, ("Y",), "Y")
    with pytest.raises(FrameMismatch):
        a + b
    with pytest.raises(SpecMismatch):
        a + parse_poly(Integers(), ("X",), "X")


def test_ring_elem_coercion():
    spec = parse_ring_spec("Q[a]/(a^2)")
    a_elem = parse_elem(spec, "a")
    p = parse_poly(spec, ("X",), "X")
    assert a_elem * p == parse_poly(spec, ("X",), "a*X")
    assert p + a_elem == parse_poly(spec, ("X",), "X + a")


def test_zero_coefficient_terms_pruned():
    spec = parse_ring_spec("Q[a]/(a^2)")
    a = parse_poly(spec, ("X",), "a*X")
    sq = a * a  # a^2 = 0 kills every term
    assert sq.is_zero()
    assert sq.terms == {}

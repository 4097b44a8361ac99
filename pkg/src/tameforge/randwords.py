"""Seeded random polynomials, generators, words, and tame maps for tests."""
from __future__ import annotations

import random
from typing import Optional, Sequence

from .automap import ElemGen, LinGen, PolyMap, TameWord, TransGen, identity_matrix
from .multipoly import MultiPoly
from .rings import RingSpec


def random_poly(
    spec: RingSpec,
    vars: Sequence[str],
    rng: random.Random,
    max_deg: int = 2,
    n_terms: int = 3,
    omit: Optional[str] = None,
) -> MultiPoly:
    vars = tuple(vars)
    p = MultiPoly.zero(spec, vars)
    for _ in range(rng.randint(1, n_terms)):
        e = []
        budget = max_deg
        for v in vars:
            if omit is not None and v == omit:
                e.append(0)
                continue
            k = rng.randint(0, budget)
            e.append(k)
            budget -= k
        p = p + MultiPoly.monomial(spec, vars, tuple(e), spec.random_elem(rng))
    return p


def random_elem_gen(spec, vars, rng, max_deg=2, n_terms=2) -> ElemGen:
    var = rng.choice(list(vars))
    f = random_poly(spec, vars, rng, max_deg=max_deg, n_terms=n_terms, omit=var)
    return ElemGen(var, f)


def random_lin_gen(spec, vars, rng, moves=3) -> LinGen:
    """A product of elementary row operations; always invertible."""
    n = len(vars)
    mat = [list(row) for row in identity_matrix(spec, n)]
    for _ in range(moves):
        i = rng.randrange(n)
        j = rng.randrange(n)
        if i == j:
            continue
        c = spec.from_int(rng.randint(-2, 2))
        for k in range(n):
            mat[i][k] = spec.add(mat[i][k], spec.mul(c, mat[j][k]))
    if n and rng.random() < 0.5:
        i = rng.randrange(n)
        for k in range(n):
            mat[i][k] = spec.neg(mat[i][k])
    return LinGen(spec, tuple(tuple(row) for row in mat))


def random_trans_gen(spec, vars, rng) -> TransGen:
    return TransGen(spec, tuple(spec.from_int(rng.randint(-2, 2)) for _ in vars))


def random_word(
    spec,
    vars,
    rng: random.Random,
    length: int = 4,
    kinds: Sequence[str] = ("elem", "lin", "trans"),
    max_deg: int = 2,
) -> TameWord:
    gens = []
    for _ in range(length):
        kind = rng.choice(list(kinds))
        if kind == "elem":
            gens.append(random_elem_gen(spec, vars, rng, max_deg=max_deg))
        elif kind == "lin":
            gens.append(random_lin_gen(spec, vars, rng))
        else:
            gens.append(random_trans_gen(spec, vars, rng))
    return TameWord(spec, tuple(vars), gens)


def random_tame_map(spec, vars, rng, length=4, **kw) -> PolyMap:
    return random_word(spec, vars, rng, length=length, **kw).evaluate()

from __future__ import annotations

import random
from fractions import Fraction

import pytest
import sympy as sp

from ellgen.geom import integrate, p1xp1_model, projective_space
from ellgen.theta import ThetaSingularityError
from ellgen.toroidal import (
    FanError,
    LatticePair,
    PiecewiseFunction,
    PoleError,
    PreconditionError,
    SimplicialFan,
    SncComplex,
    UndeclaredStratumError,
    check_pole_cancellation,
    covering_degrees,
    firstorth_from_theta,
    firstorth_symbolic,
    fractional_coordinates,
    index_three_fan,
    monomial_of_point,
    nu_pullback,
    nu_pushforward,
    orthant_fan,
    point_of_monomial,
    quotient_group_elements,
    random_subdivision,
    rho_lite,
    trial_rng,
    verify_degree_count,
    verify_firstorth,
    verify_mainthetalemma,
    verify_projection_formula,
    verify_toricsum,
    wall_residues,
)

FIG_LATTICE = [[2, 1], [1, 2]]


# -- lattices ---------------------------------------------------------------


def test_quotient_sizes():
    assert quotient_group_elements(LatticePair.identity(3)) == [(0, 0, 0)]
    assert len(quotient_group_elements(LatticePair([[3, 0], [0, 1]]))) == 3
    assert LatticePair(FIG_LATTICE).index == 3


def test_singular_lattice_rejected():
    with pytest.raises(FanError):
        LatticePair([[1, 2], [2, 4]])


def test_fractional_patterns_on_index_three_fan():
    fan = index_three_fan()
    G = quotient_group_elements(fan.lattice)
    for k in fan.max_keys():
        coords = sorted(tuple(fractional_coordinates(fan, k, g)) for g in G)
        values = {c for pt in coords for c in pt}
        assert values <= {0, Fraction(1, 3), Fraction(2, 3)}
        assert len(set(coords)) == 3


# -- fan validation ---------------------------------------------------------


def test_generator_outside_sublattice():
    with pytest.raises(FanError):
        SimplicialFan([[(1, 0), (0, 1)]], lattice=LatticePair(FIG_LATTICE))


def test_gap_in_support_detected():
    with pytest.raises(FanError):
        SimplicialFan([[(1, 0), (1, 1)]])


def test_overlapping_cones_detected():
    with pytest.raises(FanError):
        SimplicialFan([[(1, 0), (0, 1)], [(1, 0), (1, 1)], [(1, 1), (0, 1)]])


# -- identities -------------------------------------------------------------


def test_firstorth_trivial_and_figure():
    assert verify_firstorth(orthant_fan(2))
    assert verify_firstorth(index_three_fan(), trials=20, seed=7)
    assert firstorth_symbolic(index_three_fan()) == 0


def test_figure_identity_by_hand():
    x1, x2 = sp.symbols("x1 x2")
    lhs = 1 / (x2 * (x1 - 2 * x2) / 3) + 1 / ((2 * x2 - x1) / 3 * (2 * x1 - x2) / 3) + 1 / (x1 * (x2 - 2 * x1) / 3)
    assert sp.simplify(lhs - 3 / (x1 * x2)) == 0


def test_firstorth_negative_control():
    assert not verify_firstorth(index_three_fan(), LatticePair.identity(2))


def test_toricsum_line_and_plane():
    line = SimplicialFan([[(1,)], [(-1,)]], free=(0,))
    assert verify_toricsum(line)
    quads = [[(1, 0), (0, 1)], [(0, 1), (-1, 0)], [(-1, 0), (0, -1)], [(0, -1), (1, 0)]]
    assert verify_toricsum(SimplicialFan(quads, free=(0, 1)))


def test_toricsum_rejects_orthant():
    with pytest.raises(PreconditionError):
        verify_toricsum(orthant_fan(2))
    with pytest.raises(PreconditionError):
        verify_firstorth(SimplicialFan([[(1,)], [(-1,)]], free=(0,)))


def test_theta_lemma_trivial_fan():
    r = verify_mainthetalemma(orthant_fan(2), None, [Fraction(1, 3), Fraction(1, 5)], complex(0.3, 0.1), 1.2j)
    assert r < 1e-12


def test_theta_lemma_figure_generic_a():
    r = verify_mainthetalemma(index_three_fan(), None, [Fraction(1, 3), Fraction(2, 7)],
                              complex(0.37, 0.11), complex(0.2, 1.1), trials=5)
    assert r < 1e-8


def test_theta_lemma_small_a_and_degenerate_a():
    fan = index_three_fan()
    r = verify_mainthetalemma(fan, None, [Fraction(1, 3), Fraction(2, 7)], 1e-3, complex(0.2, 1.1))
    assert r < 1e-8
    with pytest.raises(ThetaSingularityError):
        verify_mainthetalemma(fan, None, [0, 0], complex(0.3, 0.1), 1.1j)


def test_theta_lemma_detects_wrong_lattice():
    r = verify_mainthetalemma(index_three_fan(), LatticePair.identity(2), [Fraction(1, 3), Fraction(2, 7)],
                              complex(0.37, 0.11), complex(0.2, 1.1))
    assert r > 1e-3


def test_laurent_limit_recovers_firstorth():
    rng = random.Random(5)
    w = [complex(rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1)) for _ in range(2)]
    lead, exact = firstorth_from_theta(index_three_fan(), None, [Fraction(1, 3), Fraction(2, 7)],
                                       complex(0.37, 0.11), complex(0.2, 1.1), w)
    assert abs(lead - exact) <= 1e-6 * abs(exact)


# -- piecewise functions and the pushforward ---------------------------------


def test_monomial_round_trip():
    fan = index_three_fan()
    for v in [(2, 1), (3, 0), (5, 4), (1, 2)]:
        assert point_of_monomial(monomial_of_point(fan, v)) == v


def test_monomial_requires_sublattice_point():
    with pytest.raises(FanError):
        monomial_of_point(index_three_fan(), (1, 0))


def test_pullback_basics():
    fan = index_three_fan()
    x1, x2 = fan.symbols
    assert nu_pullback(5, fan) == PiecewiseFunction.constant(fan, 5)
    f, g = x1**2 + 3 * x2, x1 - x2
    assert nu_pullback(f * g, fan) == nu_pullback(f, fan) * nu_pullback(g, fan)
    # x1 reads off the first coordinate of points of the subdivision
    k = fan.max_keys()[0]
    v = fan.cones[k][0]
    assert nu_pullback(x1, fan).pieces[k].subs(dict(zip(fan.symbols, v))) == v[0]


def test_incompatible_pieces_rejected():
    fan = index_three_fan()
    x1, x2 = fan.symbols
    keys = fan.max_keys()
    with pytest.raises(FanError):
        PiecewiseFunction(fan, {k: (x1 if i == 0 else x2) for i, k in enumerate(keys)})


def test_covering_degrees_index_three():
    d = covering_degrees(index_three_fan())
    assert d[frozenset()] == 3
    assert d[frozenset({0, 1})] == 1


def test_projection_of_one_is_index():
    fan = index_three_fan()
    x1, x2 = fan.symbols
    for g in (sp.Integer(1), x1**2 + x2, x1 * x2 - 7):
        assert sp.expand(nu_pushforward(nu_pullback(g, fan)).top - 3 * g) == 0


def test_interior_monomial_pushes_to_zero():
    fan = index_three_fan()
    f = monomial_of_point(fan, (2, 1))
    assert sp.simplify(nu_pushforward(f).top) == 0
    assert check_pole_cancellation(f)


def test_identity_subdivision():
    fan = orthant_fan(2)
    assert nu_pushforward(PiecewiseFunction.constant(fan, 1), 1).top == 1


def test_wall_residues_cancel_pairwise():
    fan = index_three_fan()
    x1, x2 = fan.symbols
    f = nu_pullback(x1 + 2 * x2, fan) * monomial_of_point(fan, (3, 3))
    residues = wall_residues(f)
    assert residues
    for _, a, b in residues:
        assert sp.cancel(a + b) == 0


def test_incompatible_pieces_leave_a_pole():
    fan = index_three_fan()
    x1, _ = fan.symbols
    pieces = {k: (x1 if i == 0 else sp.Integer(0)) for i, k in enumerate(fan.max_keys())}
    f = PiecewiseFunction(fan, pieces, check=False)
    assert not check_pole_cancellation(f)
    with pytest.raises(PoleError) as err:
        nu_pushforward(f)
    assert err.value.wall == [(2, 1)]
    assert "(2, 1)" in str(err.value)


@pytest.mark.parametrize("rank", [1, 2, 3])
@pytest.mark.parametrize("trial", range(3))
def test_random_subdivisions(rank, trial):
    rng = trial_rng(11, 100 * rank + trial)
    fan = random_subdivision(rank, rng)
    X = fan.symbols
    g = sum(rng.randint(-3, 3) * X[rng.randrange(rank)] ** rng.randint(0, 2) for _ in range(3))
    k = rng.randrange(len(fan.cones))
    pt = tuple(sum(gen[i] for gen in fan.cones[k]) for i in range(rank))
    f = monomial_of_point(fan, pt) + nu_pullback(X[0], fan)
    assert verify_firstorth(fan, trials=5, seed=trial)
    assert verify_projection_formula(f, g)
    assert check_pole_cancellation(f)
    assert verify_degree_count(fan)


# -- rho on snc strata -------------------------------------------------------


def _two_lines():
    return SncComplex(projective_space(2), ["h", "h"], {(0,): "h", (1,): "h", (0, 1): "h^2"})


def test_rho_minimal_ray_point():
    cx = _two_lines()
    x1, _ = cx.symbols
    assert rho_lite(PiecewiseFunction.global_polynomial(cx, x1)) == cx.model.cls("h")


def test_rho_is_multiplicative_on_two_lines():
    cx = _two_lines()
    x1, x2 = cx.symbols
    model = cx.model
    for a, b in [(x1, x2), (x1, x1), (x1 + x2, x2**2)]:
        fa = PiecewiseFunction.global_polynomial(cx, a)
        fb = PiecewiseFunction.global_polynomial(cx, b)
        assert rho_lite(fa * fb) == rho_lite(fa).mul(rho_lite(fb), model.dim)


def test_rho_disjoint_strata():
    q = p1xp1_model()
    cx = SncComplex(q, ["h1", "h1"], {(0,): "h1", (1,): "h1"})
    x1, x2 = cx.symbols
    prod = PiecewiseFunction.global_polynomial(cx, x1 * x2)
    assert rho_lite(prod) == q.cls("0")
    r1 = rho_lite(PiecewiseFunction.global_polynomial(cx, x1))
    r2 = rho_lite(PiecewiseFunction.global_polynomial(cx, x2))
    assert integrate(q, r1.mul(r2, 2)) == 0


def test_rho_needs_declared_strata():
    cx = SncComplex(projective_space(2), ["h", "h"], {(0,): "h"})
    _, x2 = cx.symbols
    with pytest.raises(UndeclaredStratumError):
        rho_lite(PiecewiseFunction.global_polynomial(cx, x2))

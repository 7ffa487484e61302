from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from ellgen.genus import (
    elliptic_genus,
    genus_window,
    numeric_elliptic_genus,
    orbifold_elliptic_genus,
    pair_elliptic_genus,
)
from ellgen.geom import k3_model, p1xp1_model, projective_space
from ellgen.series import Series, Truncation
from ellgen.symprod import (
    CoeffTable,
    InsufficientPrecisionError,
    commuting_pairs,
    dmvv_lhs_exp,
    dmvv_pairs_check,
    dmvv_rhs_product,
    dmvv_table,
    f_ijs,
    hilbert_scheme_series,
    lemma_characters,
    lemma_ijsum_residual,
    lemma_product_residual,
    lemma_producttwo_residual,
    symmetric_power_datum,
)


def p_part(s: Series, n: int) -> dict:
    return {(k[0], k[1]): c for k, c in s.terms.items() if k[2] == n}


def same_terms(a: Series, b: Series) -> bool:
    """Compare two plain q, y series written with possibly different D."""
    fa = {(Fraction(k[0], a.trunc.D), Fraction(k[1], a.trunc.D), k[2]): c for k, c in a.terms.items()}
    fb = {(Fraction(k[0], b.trunc.D), Fraction(k[1], b.trunc.D), k[2]): c for k, c in b.terms.items()}
    return fa == fb


def test_commuting_pair_counts():
    # |G| times the number of conjugacy classes
    assert len(commuting_pairs(2)) == 4
    assert len(commuting_pairs(3)) == 18


def test_lemma_characters_count():
    for i in range(1, 4):
        for j in range(1, 4):
            for s in range(j):
                assert len(lemma_characters(i, j, s)) == i * j


def test_f_trivial_indices_reproduce_genus():
    g = elliptic_genus(k3_model(), genus_window(3, 4))
    table = CoeffTable.from_result(g)
    assert f_ijs(table, 1, 1, 0) == g.series


def test_f_sum_over_s_is_comb_select():
    g = elliptic_genus(k3_model(), genus_window(4, 8))
    table = CoeffTable.from_result(g)
    j = 2
    w = genus_window(2, 3, 2 * j)
    total = sum((f_ijs(table, 1, j, s, w) for s in range(j)), Series.zero(w))
    total = total.map_coefficients(lambda k, c: c.to_rational() if hasattr(c, "to_rational") else c)
    want = g.series.comb_select(j).restrict(genus_window(2, 3, 2))
    assert not want.is_zero()
    assert same_terms(total, want)


def test_f_numeric_against_transformed_genus():
    k3 = k3_model()
    table = CoeffTable.from_result(pair_elliptic_genus(k3, genus_window(8, 14, 2, 1)))
    z, tau = complex(0.1, 0.05), 2j
    i, j, s = 2, 3, 1
    f = f_ijs(table, i, j, s, genus_window(2, 4, 12 * j, 0), check=False)
    want = numeric_elliptic_genus(k3, i * z, (i * tau - s) / j)
    assert abs(f.evaluate(z, tau) - want) <= 1e-6 * abs(want)


def test_f_rejects_bad_indices():
    table = CoeffTable.from_dict({(0, 0): 1}, 2, 2)
    with pytest.raises(ValueError):
        f_ijs(table, 1, 2, 2)


def test_empty_table_gives_one():
    table = CoeffTable.from_dict({}, 8, 8)
    assert dmvv_rhs_product(table, 3, genus_window(2, 2, 1)) == 1


def test_single_entry_is_geometric_series():
    table = CoeffTable.from_dict({(0, 0): 1}, 8, 8)
    got = dmvv_rhs_product(table, 3, genus_window(2, 2, 1))
    # prod_i (1 - p^i)^-1 = partition numbers
    assert [got.coefficient(0, 0, n) for n in range(4)] == [1, 1, 2, 3]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_exp_side_equals_product_side_for_small_tables(seed):
    rng = random.Random(seed)
    entries = {(m, l): rng.randint(-2, 2) for m in range(0, 4) for l in range(-1, 2)}
    table = CoeffTable.from_dict(entries, 6, 6, slope=1)
    w = genus_window(2, 2, 1)
    lhs = dmvv_lhs_exp(table, 2, w)
    rhs = dmvv_rhs_product(table, 2, w)
    assert lhs == rhs


def test_low_p_coefficients():
    k3 = k3_model()
    table = dmvv_table(k3, 2, 2, 3)
    lhs = dmvv_lhs_exp(table, 2, genus_window(2, 3))
    assert p_part(lhs, 0) == {(0, 0): 1}
    g = elliptic_genus(k3, genus_window(2, 3, lhs.trunc.D)).series
    assert p_part(lhs, 1) == p_part(g, 0)


def test_k3_exp_and_product_agree_through_p3():
    table = dmvv_table(k3_model(), 3, 3, 3)
    w = genus_window(3, 3)
    assert dmvv_lhs_exp(table, 3, w) == dmvv_rhs_product(table, 3, w)


@pytest.mark.parametrize("model", [k3_model(), projective_space(2), p1xp1_model()], ids=lambda m: m.name)
def test_s2_orbifold_matches_product(model):
    table = dmvv_table(model, 2, 2, 3)
    prod = dmvv_rhs_product(table, 2, genus_window(2, 3))
    g = orbifold_elliptic_genus(symmetric_power_datum(model, 2), genus_window(2, 3, prod.trunc.D)).series
    D = math.lcm(prod.trunc.D, g.trunc.D)
    a = {(Fraction(q, prod.trunc.D), Fraction(y, prod.trunc.D)): c for (q, y) , c in p_part(prod, 2).items()}
    b = {(Fraction(q, g.trunc.D), Fraction(y, g.trunc.D)): c for (q, y), c in p_part(g, 0).items()}
    assert a and a == b


def test_s3_orbifold_matches_product_p2():
    model = projective_space(2)
    table = dmvv_table(model, 3, 2, 3)
    prod = dmvv_rhs_product(table, 3, genus_window(2, 3))
    g = orbifold_elliptic_genus(symmetric_power_datum(model, 3), genus_window(2, 3)).series
    a = {(Fraction(q, prod.trunc.D), Fraction(y, prod.trunc.D)): c for (q, y), c in p_part(prod, 3).items()}
    b = {(Fraction(q, g.trunc.D), Fraction(y, g.trunc.D)): c for (q, y), c in p_part(g, 0).items()}
    assert a and a == b


def test_first_symmetric_power_is_the_model():
    k3 = k3_model()
    w = genus_window(2, 3)
    assert orbifold_elliptic_genus(symmetric_power_datum(k3, 1), w).series == elliptic_genus(k3, w).series


def test_symmetric_power_cap():
    with pytest.raises(ValueError):
        symmetric_power_datum(k3_model(), 4)


def test_hilbert_low_terms():
    k3 = k3_model()
    table = dmvv_table(k3, 2, 2, 3)
    h = hilbert_scheme_series(table, 2, genus_window(2, 3))
    assert p_part(h, 0) == {(0, 0): 1}
    g = elliptic_genus(k3, genus_window(2, 3, h.trunc.D)).series
    assert p_part(h, 1) == p_part(g, 0)


def test_pairs_trivial_divisor_reduces_to_smooth():
    p2 = projective_space(2)
    table = dmvv_table(p2, 2, 2, 3)
    assert dmvv_pairs_check(table, 2, genus_window(2, 3, table.trunc.D)).is_zero()


def test_pairs_half_line(load):
    table = dmvv_table(load("p2_half_line"), 2, 2, 4)
    assert dmvv_pairs_check(table, 2, genus_window(2, 4, table.trunc.D)).is_zero()


def test_pairs_third_point(load):
    table = dmvv_table(load("p1_third_point"), 3, 2, 4)
    assert dmvv_pairs_check(table, 3, genus_window(2, 4, table.trunc.D)).is_zero()


def test_table_refuses_unknown_coefficients():
    table = CoeffTable.from_dict({(0, 0): 1}, 2, 2)
    with pytest.raises(InsufficientPrecisionError):
        table.c(0, 5)


def _region_u(rng, j, tau):
    lo = (j - 1) / j
    return complex(rng.uniform(0.05, 0.45), (lo + (1 - lo) * rng.uniform(0.2, 0.8)) * tau.imag)


@pytest.mark.parametrize("i", [1, 2, 3, 4])
@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_lemma_residuals(i, j):
    rng = random.Random(i * 10 + j)
    for s in range(j):
        tau = complex(rng.uniform(-0.4, 0.4), rng.uniform(0.8, 1.5))
        z = complex(rng.uniform(0.05, 0.3), rng.uniform(-0.05, 0.05))
        x = complex(rng.uniform(0.05, 0.4), rng.uniform(-0.05, 0.05))
        assert lemma_product_residual(i, j, s, x, z, tau) < 1e-8
        assert lemma_producttwo_residual(i, j, s, x, z, tau) < 1e-8
        assert lemma_ijsum_residual(i, j, s, _region_u(rng, j, tau), z, tau) < 1e-8


def test_short_table_is_refused():
    table = CoeffTable.from_dict({(0, 0): 1}, 4, 4)
    with pytest.raises(InsufficientPrecisionError):
        dmvv_rhs_product(table, 3, genus_window(2, 2, 1))

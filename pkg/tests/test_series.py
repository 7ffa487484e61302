from __future__ import annotations

from fractions import Fraction

import pytest
from gmpy2 import mpq
from hypothesis import given, settings
from hypothesis import strategies as st

from ellgen.series import (
    CycRational,
    InversionError,
    ParameterError,
    Series,
    Truncation,
    WindowError,
    root_of_unity,
)

TR = Truncation(Q=4, W=4, P=0, D=1)


def ser(tr: Truncation, data: dict) -> Series:
    return Series.from_dict(tr, data)


@st.composite
def series_in(draw, tr: Truncation = TR, ymax: int | None = None, n: int = 6):
    ymax = int(tr.W) if ymax is None else ymax
    keys = st.tuples(st.integers(0, int(tr.Q)), st.integers(-ymax, ymax))
    data = draw(st.dictionaries(keys, st.integers(-5, 5), max_size=n))
    return ser(tr, data)


def test_additive_identity():
    s = ser(TR, {(1, 2): 3, (0, -1): -2})
    assert s + Series.zero(TR) == s


def test_sum_of_binomials():
    assert ser(TR, {(0, 0): 1, (1, 0): 1}) + ser(TR, {(0, 0): 1, (1, 0): -1}) == 2


@settings(max_examples=30, deadline=None)
@given(series_in(Truncation(Q=8, W=4, D=1)), series_in(Truncation(Q=8, W=4, D=1)))
def test_add_commutes_with_truncation(s, t):
    small = Truncation(Q=4, W=4, D=1)
    assert (s + t).restrict(small) == s.restrict(small) + t.restrict(small)


@settings(max_examples=30, deadline=None)
@given(series_in(ymax=1), series_in(ymax=1), series_in(ymax=1))
def test_ring_axioms(a, b, c):
    # |y| <= 1 per factor keeps every partial product inside the window
    assert a * b == b * a
    assert (a * b) * c == a * (b * c)
    assert a * (b + c) == a * b + a * c


def test_multiplicative_identity():
    s = ser(TR, {(1, 1): 5, (2, -3): Fraction(1, 2)})
    assert s * Series.one(TR) == s


def test_geometric_series():
    tr = Truncation(Q=6, W=8, D=1, slope=1)
    a = ser(tr, {(0, 0): 1, (1, 1): -1})
    b = ser(tr, {(k, k): 1 for k in range(7)})
    assert a * b == 1


@settings(max_examples=20, deadline=None)
@given(series_in(Truncation(Q=10, W=4, D=1)), series_in(Truncation(Q=10, W=4, D=1)))
def test_mul_commutes_with_truncation(s, t):
    small = Truncation(Q=5, W=4, D=1)
    assert (s * t).restrict(small, check=False) == s.restrict(small) * t.restrict(small)


def test_invert_trivial():
    assert Series.one(TR).invert() == 1


def test_invert_one_minus_q():
    tr = Truncation(Q=6, W=2, D=1)
    inv = ser(tr, {(0, 0): 1, (1, 0): -1}).invert()
    assert inv == ser(tr, {(m, 0): 1 for m in range(7)})


def test_invert_theta_leading_factor_matches_numeric():
    tr = Truncation(Q=0, W=12, D=2)
    s = ser(tr, {(0, Fraction(1, 2)): 1, (0, Fraction(-1, 2)): -1})
    inv = s.invert()
    # -y^(1/2) / (1 - y), expanded around y = 0
    for k in range(0, 10):
        assert inv.coefficient(0, Fraction(1, 2) + k) == -1
    assert inv.coefficient(0, Fraction(-1, 2)) == 0
    y = complex(0.3, 0.1)
    import cmath
    z = cmath.log(y) / (2j * cmath.pi)
    exact = 1 / (y**0.5 - y**-0.5)
    assert abs(inv.evaluate(z, 1j) - exact) < 1e-5


def test_invert_zero_fails():
    with pytest.raises(InversionError):
        Series.zero(TR).invert()


def test_exp_zero_and_log_series():
    tr = Truncation(Q=5, W=0, P=5, D=1)
    assert Series.zero(tr).exp() == 1
    one_minus = ser(tr, {(0, 0, 0): 1, (1, 0, 1): -1})
    want = ser(tr, {(k, 0, k): Fraction(-1, k) for k in range(1, 6)})
    assert one_minus.log() == want


def test_exp_log_matches_brute_force_product():
    tr = Truncation(Q=3, W=3, P=3, D=1, slope=1)
    table = {(1, 0, 1): 2, (0, 1, 1): -1, (1, -1, 2): 3}
    log_sum = Series.zero(tr)
    prod = Series.one(tr)
    for (m, l, j), c in table.items():
        u = ser(tr, {(m, l, j): 1})
        log_sum = log_sum + (ser(tr, {(0, 0, 0): 1}) - u).log().scale(-c)
        factor = ser(tr, {(0, 0, 0): 1}) - u
        prod = prod * (factor.invert() ** c if c > 0 else factor ** (-c))
    assert log_sum.exp() == prod


def test_exp_requires_zero_constant():
    with pytest.raises(InversionError):
        Series.one(TR).exp()


def test_substitute_scale():
    s = ser(TR, {(1, 2): 3, (0, -1): 1})
    assert s.substitute_scale(1, 1) == s
    tr = Truncation(Q=2, W=4, D=1)
    assert ser(tr, {(0, 1): 1, (0, -1): 1}).substitute_scale(1, 2) == ser(tr, {(0, 2): 1, (0, -2): 1})


@settings(max_examples=20, deadline=None)
@given(series_in(Truncation(Q=4, W=3, D=2)))
def test_substitute_round_trip(s):
    half = s.substitute_scale(Fraction(1, 2), 1)
    assert half.substitute_scale(2, 1, trunc=s.trunc) == s


def test_comb_select():
    tr = Truncation(Q=4, W=1, D=1)
    s = ser(tr, {(1, 0): 1, (2, 0): 1, (3, 0): 1})
    assert s.comb_select(1) == s
    assert s.comb_select(2) == ser(tr, {(1, 0): 2})


@pytest.mark.parametrize("j", [2, 3, 4])
def test_comb_select_is_a_root_of_unity_average(j):
    tr = Truncation(Q=6, W=2, D=1)
    s = ser(tr, {(m, y): (m + 2 * y) % 5 - 2 for m in range(7) for y in (-1, 0, 2)})
    fine = tr.with_(D=j)
    # q^(m/j) picks up zeta_j^(-k m); summing over k keeps m divisible by j
    avg = Series.zero(fine)
    for k in range(j):
        sub = s.substitute_scale(Fraction(1, j), 1, trunc=fine)
        avg = avg + sub.map_coefficients(lambda key, c, k=k: c * root_of_unity(j, -k * key[0]))
    cap = fine.with_(Q=6 // j)
    want = s.comb_select(j).restrict(cap)
    got = avg.map_coefficients(lambda key, c: c.to_rational() if isinstance(c, CycRational) else c)
    assert got.restrict(cap) == want


def test_coefficient_access():
    assert Series.one(TR).coefficient() == 1
    assert ser(TR, {(1, 1): 1}).coefficient(1, 1) == 1
    with pytest.raises(WindowError):
        Series.one(TR).coefficient(9, 0)


def test_exponent_off_grid():
    with pytest.raises(ParameterError):
        ser(TR, {(Fraction(1, 2), 0): 1})


def test_cyclotomic_arithmetic():
    z3 = root_of_unity(3)
    assert z3**3 == 1
    assert 1 + z3 + z3 * z3 == 0
    assert root_of_unity(4, 2) == -1
    assert (z3 * z3.inverse()) == 1
    assert abs(complex(z3) - complex(-0.5, 3**0.5 / 2)) < 1e-12


def test_text_round_trip():
    tr = Truncation(Q=3, W=3, D=2)
    s = ser(tr, {(Fraction(1, 2), -1): mpq(3, 7), (2, Fraction(3, 2)): -1})
    assert Series.from_text(tr, s.to_text()) == s

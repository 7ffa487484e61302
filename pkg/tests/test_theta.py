from __future__ import annotations

import cmath
import random
from fractions import Fraction

import pytest

from ellgen.series import Series, Truncation
from ellgen.theta import (
    ThetaSingularityError,
    numeric_theta,
    numeric_theta_factor,
    numeric_theta_product,
    theta_bar,
    theta_factor,
    theta_prime_zero,
    theta_taylor,
    verify_quasi_periodicity,
)

TR = Truncation(Q=3, W=6, D=2)


def test_q0_coefficient_is_sine_factor():
    th = theta_bar(TR).series
    assert th.coefficient(0, Fraction(1, 2)) == 1
    assert th.coefficient(0, Fraction(-1, 2)) == -1
    assert th.coefficient(0, Fraction(3, 2)) == 0


def test_q1_coefficient_matches_expansion():
    th = theta_bar(TR).series
    # -(y^1/2 - y^-1/2)(1 + y + 1/y)
    want = {Fraction(3, 2): -1, Fraction(1, 2): 0, Fraction(-1, 2): 0, Fraction(-3, 2): 1}
    for y, c in want.items():
        assert th.coefficient(1, y) == c


def test_oddness():
    th = theta_bar(TR).series
    flipped = Series(TR, {(q, -y, p, n): c for (q, y, p, n), c in th.terms.items()})
    assert flipped == -th


def test_theta_prime_zero_coefficients():
    t = theta_prime_zero(TR)
    assert t.coefficient(0, 0) == 1
    assert t.coefficient(1, 0) == -3
    assert t.coefficient(2, 0) == 0
    assert t.coefficient(3, 0) == 5


def test_ratio_divides_out_sine_factor():
    tr = Truncation(Q=2, W=6, D=2, slope=1)
    th = theta_bar(tr).series
    sine = Series.from_dict(tr, {(0, Fraction(1, 2)): 1, (0, Fraction(-1, 2)): -1})
    rest = th * sine.invert()
    assert rest.coefficient(0, 0) == 1
    assert rest.coefficient(0, 1) == 0


def test_numeric_theta_basics():
    tau = complex(0.1, 1.2)
    assert abs(numeric_theta(0, tau)) < 1e-15
    z = complex(0.21, 0.07)
    assert abs(numeric_theta(-z, tau) + numeric_theta(z, tau)) < 1e-14


def test_product_and_sum_agree():
    rng = random.Random(1)
    for _ in range(10):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2))
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2))
        assert abs(numeric_theta_product(z, tau) - numeric_theta(z, tau)) < 1e-12


def test_quasi_periodicity():
    assert verify_quasi_periodicity(complex(0.3, 0.1), 2j) < 1e-10
    assert verify_quasi_periodicity(complex(0.3, 0.1), 2j, 0, 0) == 0
    rng = random.Random(2)
    for _ in range(20):
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.3))
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 1.5))
        assert verify_quasi_periodicity(z, tau, rng.randint(-2, 2), rng.randint(-2, 2)) < 1e-9


def test_rejects_lower_half_plane():
    with pytest.raises(ValueError):
        verify_quasi_periodicity(0.1, -1j)


def test_formal_theta_matches_numeric():
    th = theta_bar(Truncation(Q=20, W=24, D=2))
    rng = random.Random(3)
    for _ in range(10):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(1, 2))
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2))
        assert abs(th.evaluate(z, tau) - numeric_theta(z, tau)) < 1e-9


def test_untwisted_factor_without_nilpotent_is_a_pole():
    with pytest.raises(ThetaSingularityError):
        theta_factor(0, 0, 1, None, TR)


def test_characters_must_be_reduced():
    with pytest.raises(ValueError):
        theta_factor(1, 0, 1, None, TR)


@pytest.mark.parametrize("alpha,beta,a", [
    (Fraction(1, 2), 0, 1),
    (0, Fraction(1, 2), 1),
    (Fraction(1, 3), Fraction(2, 3), 1),
    (Fraction(1, 6), Fraction(1, 2), Fraction(1, 2)),
    (Fraction(5, 6), Fraction(1, 3), 2),
])
def test_twisted_factor_matches_numeric(alpha, beta, a):
    tr = Truncation(Q=10, W=30, D=12)
    f = theta_factor(alpha, beta, a, None, tr)
    rng = random.Random(4)
    for _ in range(5):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(2, 3))
        z = complex(rng.uniform(-0.3, 0.3), rng.uniform(-0.05, 0.05))
        want = numeric_theta_factor(alpha, beta, a, z, tau)
        assert abs(f.evaluate(z, tau) - want) <= 1e-8 * max(1, abs(want))


def test_half_period_factor_closed_form():
    # theta(-tau/2 - z)/theta(-tau/2) * e^{2 pi i z/2}
    tr = Truncation(Q=10, W=30, D=12)
    f = theta_factor(0, Fraction(1, 2), 1, None, tr)
    z, tau = complex(0.12, 0.03), complex(0.1, 2.3)
    want = numeric_theta(-tau / 2 - z, tau) / numeric_theta(-tau / 2, tau) * cmath.exp(1j * cmath.pi * z)
    assert abs(f.evaluate(z, tau) - want) < 1e-8 * max(1, abs(want))


def test_taylor_coefficients():
    tau = complex(0, 1.3)
    c = theta_taylor(0, tau, 3)
    assert abs(c[0]) < 1e-15
    assert abs(c[1] - numeric_theta(0, tau, 1)) < 1e-12

"""Jacobi theta function: formal reduced q-series and a numeric evaluator.

Convention::

    theta(z, tau) = q^(1/8) 2 sin(pi z) prod_{l>=1} (1-q^l)(1-q^l y)(1-q^l/y)
                  = -i q^(1/8) thetabar(z, tau)

with ``q = e^{2 pi i tau}``, ``y = e^{2 pi i z}`` and
``thetabar = (y^(1/2) - y^(-1/2)) prod (1-q^l)(1-q^l y)(1-q^l/y)``.
Only ``thetabar`` is stored; every formula built from it is a balanced ratio,
so the dropped ``-i q^(1/8)`` cancels.  Likewise ``theta'(0)`` is stored as
``prod (1-q^l)^3`` with the factor ``2 pi`` (and ``q^(1/8)``) dropped.

The twisted factor used by the genus formulas is

    Phi_a(alpha, beta; x) = theta(u - a z) / theta(u) * e^{2 pi i a beta z},
    u = x/(2 pi i) + alpha - beta tau,

which expands, with ``w = e^{2 pi i alpha} e^x``, as

    y^{a(beta - 1/2)} (1 - q^beta y^a / w) / (1 - q^beta / w)
      * prod_{l>=1} (1 - q^{l-beta} w y^-a)(1 - q^{l+beta} y^a / w)
                    / ((1 - q^{l-beta} w)(1 - q^{l+beta} / w)).

At ``alpha = beta = 0`` the denominator vanishes at ``x = 0``; there the
factor only makes sense paired with ``x`` and :func:`theta_factor` returns
``x Phi`` instead.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

from .series import CycRational, InversionError, Series, Truncation, root_of_unity

__all__ = [
    "ThetaSingularityError",
    "ReducedTheta",
    "ThetaFactor",
    "NumericTheta",
    "theta_bar",
    "theta_bar_at",
    "theta_prime_zero",
    "theta_factor",
    "exp_nil",
    "x_over_one_minus_exp",
    "numeric_theta",
    "numeric_theta_factor",
    "numeric_theta_product",
    "theta_taylor",
    "verify_quasi_periodicity",
]

TWO_PI_I = 2j * math.pi


class ThetaSingularityError(InversionError):
    """A theta denominator vanishes identically (a pole of the formula)."""


# ---------------------------------------------------------------------------
# formal side


@dataclass(frozen=True)
class ReducedTheta:
    series: Series

    def evaluate(self, z: complex, tau: complex) -> complex:
        """The full theta value, restoring the ``-i q^(1/8)`` prefactor."""
        return -1j * cmath.exp(TWO_PI_I * tau / 8) * self.series.evaluate(z, tau)


def _mono(tr: Truncation, c=1, q=0, y=0, nil=None) -> Series:
    return Series.monomial(tr, c, q=q, y=y, nil=nil)


def theta_bar(trunc: Truncation) -> ReducedTheta:
    """``(y^(1/2) - y^(-1/2)) prod_{l>=1} (1-q^l)(1-q^l y)(1-q^l/y)``."""
    tr = trunc
    out = _mono(tr, 1, y=Fraction(1, 2)) - _mono(tr, 1, y=Fraction(-1, 2))
    for l in range(1, int(tr.Q) + 1):
        out = out * (1 - _mono(tr, 1, q=l)) * (1 - _mono(tr, 1, q=l, y=1)) * (1 - _mono(tr, 1, q=l, y=-1))
    return ReducedTheta(out)


def theta_bar_at(a, trunc: Truncation) -> Series:
    """``thetabar(a z)`` for a rational multiple ``a`` of z."""
    tr, a = trunc, Fraction(a)
    out = _mono(tr, 1, y=a / 2) - _mono(tr, 1, y=-a / 2)
    for l in range(1, int(tr.Q) + 1):
        out = out * (1 - _mono(tr, 1, q=l)) * (1 - _mono(tr, 1, q=l, y=a)) * (1 - _mono(tr, 1, q=l, y=-a))
    return out


def theta_prime_zero(trunc: Truncation) -> Series:
    """``prod (1-q^l)^3``: theta'(0) without its ``2 pi q^(1/8)``."""
    out = Series.one(trunc)
    for l in range(1, int(trunc.Q) + 1):
        out = out * (1 - _mono(trunc, 1, q=l)) ** 3
    return out


def exp_nil(trunc: Truncation, gen: str, scale=1) -> Series:
    """``exp(scale * x)`` for a nilpotent generator x."""
    x = _mono(trunc, scale, nil={gen: 1})
    return x.exp()


def x_over_one_minus_exp(trunc: Truncation, gen: str) -> Series:
    """``x / (1 - e^{-x})`` as a power series in the nilpotent x."""
    # (1 - e^{-x})/x = sum_k (-1)^k x^k / (k+1)!
    terms = Series.zero(trunc)
    for k in range(trunc.nmax + 1):
        terms = terms + _mono(trunc, Fraction((-1) ** k, math.factorial(k + 1)), nil={gen: k})
    return terms.invert()


@dataclass(frozen=True)
class ThetaFactor:
    alpha: Fraction
    beta: Fraction
    z_mult: Fraction
    x_gen: str | None
    value: Series
    paired: bool = False

    def evaluate(self, z: complex, tau: complex) -> complex:
        return self.value.evaluate(z, tau)


def _zeta(alpha: Fraction):
    return root_of_unity(alpha.denominator, alpha.numerator) if alpha else 1


def theta_factor(alpha, beta, z_mult, x_gen: str | None, trunc: Truncation) -> ThetaFactor:
    """The twisted factor ``Phi_a(alpha, beta; x)`` as a series.

    With ``alpha = beta = 0`` and a nilpotent ``x_gen`` the result is the
    paired factor ``x Phi``; without ``x_gen`` that case is a pole and raises
    :class:`ThetaSingularityError`.
    """
    alpha, beta, a = Fraction(alpha), Fraction(beta), Fraction(z_mult)
    if not (0 <= alpha < 1 and 0 <= beta < 1):
        raise ValueError(f"characters must lie in [0,1): alpha={alpha}, beta={beta}")
    tr = trunc
    zeta = _zeta(alpha)
    zeta_inv = _zeta((-alpha) % 1)
    if x_gen is None:
        w, w_inv = Series.constant(tr, zeta), Series.constant(tr, zeta_inv)
    else:
        ex = exp_nil(tr, x_gen)
        w, w_inv = ex.scale(zeta), exp_nil(tr, x_gen, -1).scale(zeta_inv)
    ya = _mono(tr, 1, y=a)
    y_a = _mono(tr, 1, y=-a)
    paired = alpha == 0 and beta == 0
    if paired:
        if x_gen is None:
            raise ThetaSingularityError(
                "theta(u - a z)/theta(u) at u = 0 is a pole; pair it with x")
        if a == 0:
            return ThetaFactor(alpha, beta, a, x_gen, _mono(tr, 1, nil={x_gen: 1}), True)
        # y^{-a/2} (1 - y^a e^{-x}) * x/(1 - e^{-x})
        head = (1 - ya * w_inv) * x_over_one_minus_exp(tr, x_gen)
    else:
        qb = _mono(tr, 1, q=beta)
        num = 1 - qb * ya * w_inv
        den = 1 - qb * w_inv
        if not den.terms or den.terms.get((0, 0, 0, (0,) * len(tr.gens)), 0) == 0 and beta == 0:
            raise ThetaSingularityError("vanishing theta denominator")
        head = num * den.invert()
    out = head.shift(y=a * (beta - Fraction(1, 2)))
    l = 1
    while l - beta <= tr.Q:
        ql_m = _mono(tr, 1, q=l - beta)
        ql_p = _mono(tr, 1, q=l + beta)
        num = (1 - ql_m * w * y_a) * (1 - ql_p * ya * w_inv)
        den = (1 - ql_m * w) * (1 - ql_p * w_inv)
        out = out * num * den.invert()
        l += 1
    return ThetaFactor(alpha, beta, a, x_gen, out, paired)


# ---------------------------------------------------------------------------
# numeric side


class NumericTheta:
    """Evaluator for theta and its z-derivatives via the half-integer sum

        theta(z, tau) = -i sum_n (-1)^n exp(pi i tau (n+1/2)^2 + 2 pi i (n+1/2) z).
    """

    def __init__(self, extra_terms: int = 0, tol: float = 1e-18):
        self.extra_terms = extra_terms
        self.tol = tol

    def bound(self, z: complex, tau: complex) -> int:
        t = tau.imag
        # |term| = exp(-pi t (n+1/2)^2 - 2 pi (n+1/2) Im z): centre and width
        centre = abs(z.imag) / t
        width = math.sqrt(max(0.0, -math.log(self.tol)) / (math.pi * t))
        return int(centre + width) + 3 + self.extra_terms

    def __call__(self, z: complex, tau: complex, derivative: int = 0) -> complex:
        z, tau = complex(z), complex(tau)
        if tau.imag <= 0:
            raise ValueError("theta needs Im(tau) > 0")
        B = self.bound(z, tau)
        total = 0j
        for n in range(-B - 1, B + 1):
            h = n + 0.5
            term = cmath.exp(1j * math.pi * tau * h * h + TWO_PI_I * h * z)
            if derivative:
                term *= (TWO_PI_I * h) ** derivative
            total += -term if n % 2 else term
        return -1j * total


_DEFAULT = NumericTheta()


def numeric_theta(z: complex, tau: complex, derivative: int = 0) -> complex:
    return _DEFAULT(z, tau, derivative)


def numeric_theta_product(z: complex, tau: complex, terms: int = 200) -> complex:
    """The product formula, as an independent cross-check of the sum."""
    q = cmath.exp(TWO_PI_I * tau)
    y = cmath.exp(TWO_PI_I * z)
    out = cmath.exp(TWO_PI_I * tau / 8) * 2 * cmath.sin(math.pi * z)
    ql = 1
    for _ in range(terms):
        ql *= q
        out *= (1 - ql) * (1 - ql * y) * (1 - ql / y)
        if abs(ql) < 1e-300:
            break
    return out


def numeric_theta_factor(alpha, beta, z_mult, z: complex, tau: complex, x: complex = 0) -> complex:
    """``theta(u - a z)/theta(u) e^{2 pi i a beta z}`` with ``u = x/2 pi i + alpha - beta tau``."""
    a = float(z_mult)
    u = x / TWO_PI_I + float(alpha) - float(beta) * tau
    return (numeric_theta(u - a * z, tau) / numeric_theta(u, tau)
            * cmath.exp(TWO_PI_I * a * float(beta) * z))


def theta_taylor(z0: complex, tau: complex, order: int) -> list[complex]:
    """Taylor coefficients ``theta^{(k)}(z0)/k!`` for k = 0..order."""
    return [numeric_theta(z0, tau, k) / math.factorial(k) for k in range(order + 1)]


def verify_quasi_periodicity(z: complex, tau: complex, m: int = 1, n: int = 1) -> float:
    """Relative residual of ``theta(z+m) = (-1)^m theta(z)`` and
    ``theta(z + n tau) = (-1)^n e^{-2 pi i n z - pi i n^2 tau} theta(z)``."""
    if complex(tau).imag <= 0:
        raise ValueError("theta needs Im(tau) > 0")
    base = numeric_theta(z, tau)
    scale = max(abs(base), 1e-300)
    r1 = abs(numeric_theta(z + m, tau) - (-1) ** m * base)
    factor = (-1) ** n * cmath.exp(-TWO_PI_I * n * z - 1j * math.pi * n * n * tau)
    r2 = abs(numeric_theta(z + n * tau, tau) - factor * base) / max(abs(factor), 1e-300)
    return max(r1, r2) / scale

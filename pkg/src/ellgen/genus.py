"""Smooth, pair, singular and orbifold elliptic genera.

Every genus is assembled block by block.  A block (a manifold with tangent
summands and divisors) contributes

    prefactor * int exp( sum_k u_k p_k + sum_k g_k e^k ),

where each per-root factor ``F(x)`` is split as ``F(0) * U(x)`` with
``U(0) = 1``, ``log U = sum u_k x^k`` and ``p_k`` are the Chern-root power
sums.  The per-root factor of a summand with character ``(alpha, beta)`` is
``Phi_1(alpha, beta; x)``; for the untwisted summand it is the paired factor
``x theta(x/2 pi i - z)/theta(x/2 pi i)``.  A divisor with coefficient delta
and character eps contributes

    Phi_{delta+1}(eps; e)/Phi_1(eps; e) * thetabar(-z)/thetabar(-(delta+1) z),

which for eps = 0 reduces to ``U_{delta+1}(e)/U_1(e)``.

Normalizations: :func:`elliptic_genus`, :func:`pair_elliptic_genus` and
:func:`orbifold_elliptic_genus` keep the raw factor ``F`` on untwisted roots,
so a point contributes 1 and a smooth n-fold carries ``y^{-n/2}``.
:func:`singular_elliptic_genus` uses ``U = F/F(0)`` instead; the two differ by
``F(0)^n = (2 pi i theta(-z)/theta'(0))^n``.

Series work happens in a tilted internal window that keeps infinite
y-expansions exact; results are restricted to the requested plain window,
which raises if any requested coefficient is not exact.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

from .geom import (
    ClassPoly,
    GeometryError,
    LocusBlock,
    ManifoldModel,
    OrbifoldDatum,
    class_to_series,
    integrate_series,
    sum_over_roots,
    trivial_datum,
)
from .series import Series, Truncation
from .theta import (
    TWO_PI_I,
    numeric_theta,
    theta_bar_at,
    theta_factor,
    theta_prime_zero,
)

__all__ = [
    "GenusResult",
    "genus_window",
    "auto_denominator",
    "natural_slope",
    "elliptic_genus",
    "pair_elliptic_genus",
    "singular_elliptic_genus",
    "orbifold_elliptic_genus",
    "normalization_factor",
    "chi_y_specialize",
    "euler_from_chi_y",
    "verify_mckay",
    "numeric_elliptic_genus",
    "verify_jacobi",
]


@dataclass(frozen=True)
class GenusResult:
    series: Series
    name: str
    dim: int
    normalization: str = "orbifold"

    @property
    def trunc(self) -> Truncation:
        return self.series.trunc

    def chi_y(self) -> dict[Fraction, object]:
        return chi_y_specialize(self)


def genus_window(qmax=5, ywin=6, D: int = 2, slope: int = 0) -> Truncation:
    """An output window; plain unless a slope is given."""
    return Truncation(Q=qmax, W=ywin, P=0, D=D, slope=slope)


def natural_slope(datum: OrbifoldDatum) -> int:
    """A slope for which every factor's series is bounded below in ``y + slope*q``."""
    return _slope(datum)


def _lcm(*xs: int) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), xs, 1)


def _factors(datum: OrbifoldDatum):
    """All (a, beta) pairs of theta factors a datum will build."""
    out = []
    for c in datum.contributions:
        for b in c.blocks:
            for s in b.summands:
                out.append((Fraction(1), s.lam[1], s.lam[0]))
            for d in b.divisors:
                out.append((d.delta + 1, d.eps[1], d.eps[0]))
                out.append((Fraction(1), d.eps[1], d.eps[0]))
    return out


def auto_denominator(datum: OrbifoldDatum) -> int:
    dens = [2]
    for a, beta, alpha in _factors(datum):
        for v in (a, a / 2, beta, a * beta, a * (beta - Fraction(1, 2))):
            dens.append(Fraction(v).denominator)
    return _lcm(*dens)


def _slope(datum: OrbifoldDatum) -> int:
    s = Fraction(1)
    for a, beta, _ in _factors(datum):
        s = max(s, a, a / (1 - beta))
    return math.ceil(s)


# ---------------------------------------------------------------------------
# factor providers


class _FormalFactors:
    """Per-root factors as q, y series in a tilted internal window."""

    def __init__(self, base: Truncation):
        self.base = base
        self._cache: dict = {}

    def x_window(self, n: int) -> Truncation:
        return self.base.with_(gens=(("x", 1),), nmax=n)

    def factor(self, lam, a, n: int) -> Series:
        key = ("phi", lam, a, n)
        if key not in self._cache:
            self._cache[key] = theta_factor(lam[0], lam[1], a, "x", self.x_window(n)).value
        return self._cache[key]

    def theta_ratio(self, a) -> Series:
        """``thetabar(-z)/thetabar(-a z)``."""
        key = ("ratio", a)
        if key not in self._cache:
            self._cache[key] = theta_bar_at(-1, self.base) * theta_bar_at(-a, self.base).invert()
        return self._cache[key]


class _NumericFactors:
    """The same factors as complex numbers at a fixed point ``(z, tau)``."""

    def __init__(self, z: complex, tau: complex):
        self.z, self.tau = complex(z), complex(tau)
        self.base = Truncation(Q=0, W=0, P=0, D=1)

    def x_window(self, n: int) -> Truncation:
        return self.base.with_(gens=(("x", 1),), nmax=n)

    def factor(self, lam, a, n: int) -> Series:
        tr = self.x_window(n)
        alpha, beta = float(lam[0]), float(lam[1])
        a = float(a)
        u0 = alpha - beta * self.tau
        paired = lam == (0, 0)
        num = [numeric_theta(u0 - a * self.z, self.tau, k) / math.factorial(k) / TWO_PI_I**k
               for k in range(n + 1)]
        if paired:
            den = [numeric_theta(0, self.tau, k + 1) / math.factorial(k + 1) / TWO_PI_I ** (k + 1)
                   for k in range(n + 1)]
        else:
            den = [numeric_theta(u0, self.tau, k) / math.factorial(k) / TWO_PI_I**k for k in range(n + 1)]
        pre = cmath.exp(TWO_PI_I * a * beta * self.z)
        N = Series(tr, {(0, 0, 0, (k,)): c * pre for k, c in enumerate(num)})
        Dn = Series(tr, {(0, 0, 0, (k,)): c for k, c in enumerate(den)})
        return N * Dn.invert()

    def theta_ratio(self, a) -> Series:
        v = numeric_theta(-self.z, self.tau) / numeric_theta(-float(a) * self.z, self.tau)
        return Series.constant(self.base, v)


# ---------------------------------------------------------------------------
# block evaluation


def _split_unit(F: Series) -> tuple[Series, Series]:
    """``F = F0 * U`` with ``F0`` free of x and ``U = 1 + O(x)`` exactly."""
    tr = F.trunc
    zero = (0,) * len(tr.gens)
    base = tr.with_(gens=(), nmax=0)
    f0_terms = {(q, y, p, ()): c for (q, y, p, nil), c in F.terms.items() if nil == zero}
    rest = {k: c for k, c in F.terms.items() if k[3] != zero}
    F0 = Series(base, f0_terms, qhi=F.qhi, thi=F.thi, tlo=F.tlo, _clean=True)
    inv = F0.invert().with_generators(tr)
    U = Series.one(tr) + Series(tr, rest, qhi=F.qhi, thi=F.thi, tlo=F.tlo, _clean=True) * inv
    return F0, U


def _log_unit(U: Series) -> Series:
    return U.log()


def _divisor_log(cls: ClassPoly, g: Series, tr_g: Truncation, n: int) -> Series:
    """``sum_k g_k cls^k`` for ``g = sum_k g_k x^k`` with ``g_0 = 0``."""
    out = Series.zero(tr_g)
    base = tr_g.with_(gens=(), nmax=0)
    for (k,), coeff in sorted(g.nil_parts().items()):
        if k == 0 or k > n:
            continue
        coeff = Series(base, coeff.terms, qhi=coeff.qhi, thi=coeff.thi, tlo=coeff.tlo, _clean=True)
        out = out + class_to_series(cls.pow(k, n), tr_g, coeff)
    return out


def _block_value(block: LocusBlock, fac, hat: bool, strict: bool = False) -> Series:
    m = block.manifold
    n = m.dim
    base = fac.base
    tr_g = base.with_(gens=m.gens, nmax=n)
    pref = Series.one(base)
    L = Series.zero(tr_g)
    for s in block.summands:
        if s.rank == 0:
            continue
        F0, U = _split_unit(fac.factor(s.lam, Fraction(1), n))
        if not (s.untwisted and hat):
            pref = pref * F0**s.rank
        if n:
            L = L + sum_over_roots(_log_unit(U), s.chern, n, tr_g)
    for d in block.divisors:
        a = d.delta + 1
        if a == 1:
            continue
        Fa0, Ua = _split_unit(fac.factor(d.eps, a, n))
        F10, U1 = _split_unit(fac.factor(d.eps, Fraction(1), n))
        if d.eps != (0, 0):
            pref = pref * Fa0 * F10.invert() * fac.theta_ratio(a)
        if n:
            L = L + _divisor_log(d.cls, _log_unit(Ua) - _log_unit(U1), tr_g, n)
    if n == 0:
        return pref * Series.constant(base, m.intersection((), strict))
    return integrate_series(m, L.exp(), strict) * pref


def _internal_window(target: Truncation, datum: OrbifoldDatum, D: int, guard=None) -> Truncation:
    s = max(_slope(datum), target.slope)
    amax = max([a for a, _, _ in _factors(datum)] + [Fraction(1)])
    if guard is None:
        guard = Fraction(datum.dim) * amax + 4
    return Truncation(Q=target.Q, W=target.W + s * target.Q + Fraction(guard), P=0, D=D, slope=s)


def _evaluate(datum: OrbifoldDatum, fac, hat: bool, strict: bool = False) -> Series:
    total = Series.zero(fac.base)
    for c in datum.contributions:
        val = Series.constant(fac.base, c.multiplicity)
        for b in c.blocks:
            val = val * _block_value(b, fac, hat, strict)
        total = total + val
    return total.scale(Fraction(1, datum.group_order))


def _run(datum: OrbifoldDatum, window: Truncation | None, hat: bool, guard, strict: bool = False) -> GenusResult:
    window = window or genus_window()
    D = _lcm(window.D, auto_denominator(datum))
    inner = _internal_window(window, datum, D, guard)
    raw = _evaluate(datum, _FormalFactors(inner), hat, strict)
    out = raw.restrict(Truncation(Q=window.Q, W=window.W, P=0, D=D, slope=window.slope))
    return GenusResult(out, datum.name, datum.dim, "hat" if hat else "orbifold")


def elliptic_genus(model: ManifoldModel, window: Truncation | None = None, *, guard=None, strict: bool = False) -> GenusResult:
    """``int_X prod_i x_i theta(x_i/2 pi i - z)/theta(x_i/2 pi i)``."""
    if model.divisors:
        raise GeometryError(f"{model.name} has divisors; use pair_elliptic_genus")
    return _run(trivial_datum(model), window, False, guard, strict)


def pair_elliptic_genus(model: ManifoldModel, window: Truncation | None = None, *, guard=None, strict: bool = False) -> GenusResult:
    """Genus of the pair ``(X, -sum delta_k E_k)`` normalized like the smooth genus."""
    return _run(trivial_datum(model), window, False, guard, strict)


def singular_elliptic_genus(model: ManifoldModel, window: Truncation | None = None, *, guard=None, strict: bool = False) -> GenusResult:
    """The pair genus with ``F(0)^n`` divided out (unit-constant root factors)."""
    return _run(trivial_datum(model), window, True, guard, strict)


def orbifold_elliptic_genus(datum: OrbifoldDatum, window: Truncation | None = None, *, guard=None, strict: bool = False) -> GenusResult:
    return _run(datum, window, False, guard, strict)


def normalization_factor(n: int, window: Truncation) -> Series:
    """``(thetabar(-z)/prod(1-q^l)^3)^n``, i.e. ``(2 pi i theta(-z)/theta'(0))^n``."""
    f0 = theta_bar_at(-1, window) * theta_prime_zero(window).invert()
    return f0**n


def chi_y_specialize(g: GenusResult) -> dict[Fraction, object]:
    """The q^0 coefficient as ``{y-exponent: coefficient}``."""
    D = g.trunc.D
    return {Fraction(y, D): c for (q, y, p, _), c in sorted(g.series.terms.items()) if q == 0 and p == 0}


def euler_from_chi_y(chi: dict) -> object:
    return sum(chi.values())


def _common(a: Series, b: Series) -> tuple[Series, Series]:
    D = _lcm(a.trunc.D, b.trunc.D)
    ta = a.trunc.with_(D=D)
    return a.restrict(ta), b.restrict(b.trunc.with_(D=D))


def verify_mckay(lhs: OrbifoldDatum, rhs: ManifoldModel, window: Truncation | None = None) -> Series:
    """``Ell_orb(X, G) - F(0)^n * singular genus of (X/G, Delta)``; zero when the
    identity holds through the window."""
    if lhs.dim != rhs.dim:
        raise GeometryError(f"dimension mismatch: {lhs.dim} vs {rhs.dim}")
    window = window or genus_window()
    n = rhs.dim
    left = orbifold_elliptic_genus(lhs, window).series
    # F(0)^n carries y-powers down to -n/2 - nQ, so the right side is needed
    # in a wider window before multiplying
    wide = Truncation(Q=window.Q, W=window.W + n * (window.Q + 1), P=0, D=window.D)
    right = singular_elliptic_genus(rhs, wide).series
    D = _lcm(left.trunc.D, right.trunc.D)
    wide = wide.with_(D=D)
    inner = Truncation(Q=window.Q, W=wide.W + window.Q + n + 4, P=0, D=D, slope=1)
    pref = normalization_factor(n, inner).restrict(wide)
    prod = pref * right.restrict(wide)
    w = Truncation(Q=window.Q, W=window.W, P=0, D=D)
    return left.restrict(w) - prod.restrict(w)


# ---------------------------------------------------------------------------
# numeric evaluation


def numeric_elliptic_genus(model: ManifoldModel, z: complex, tau: complex) -> complex:
    """The smooth (or pair) genus evaluated at a point via numeric theta Taylor data."""
    if complex(tau).imag <= 0:
        raise ValueError("need Im(tau) > 0")
    fac = _NumericFactors(z, tau)
    val = _evaluate(trivial_datum(model), fac, False)
    return complex(val.terms.get((0, 0, 0, ()), 0))


def verify_jacobi(model: ManifoldModel, z: complex, tau: complex) -> dict[str, float]:
    """Residuals of the three weak Jacobi transformation laws (index dim/2)."""
    if not model.c1_zero:
        raise GeometryError(f"{model.name} is not declared Calabi-Yau (c1 = 0)")
    z, tau = complex(z), complex(tau)
    if tau.imag <= 0:
        raise ValueError("need Im(tau) > 0")
    m = model.dim / 2
    phi = numeric_elliptic_genus(model, z, tau)
    scale = max(abs(phi), 1e-300)
    r_z = abs(numeric_elliptic_genus(model, z + 1, tau) - phi) / scale
    r_t = abs(numeric_elliptic_genus(model, z, tau + 1) - phi) / scale
    s_val = numeric_elliptic_genus(model, z / tau, -1 / tau)
    r_s = abs(s_val - cmath.exp(TWO_PI_I * m * z * z / tau) * phi) / scale
    return {"z+1": r_z, "tau+1": r_t, "S": r_s}

"""Symmetric products: twisted coefficients, both sides of the DMVV identity,
the Hilbert-scheme series and direct S_n orbifold data."""

from __future__ import annotations

import cmath
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce

from .geom import (
    FixedLocusModel,
    GeometryError,
    LocusBlock,
    ManifoldModel,
    OrbifoldDatum,
    TangentSummand,
    trivial_datum,
)
from .genus import GenusResult, auto_denominator, genus_window, natural_slope, pair_elliptic_genus
from .series import Series, Truncation, WindowError, root_of_unity, to_mpq
from .theta import numeric_theta

__all__ = [
    "InsufficientPrecisionError",
    "CoeffTable",
    "dmvv_table",
    "f_ijs",
    "dmvv_lhs_exp",
    "dmvv_rhs_product",
    "dmvv_pairs_check",
    "hilbert_scheme_series",
    "symmetric_power_datum",
    "commuting_pairs",
    "lemma_characters",
    "lemma_product_residual",
    "lemma_producttwo_residual",
    "lemma_ijsum_residual",
]


class InsufficientPrecisionError(WindowError):
    """The coefficient table does not reach far enough for the request."""


def _lcm(*xs: int) -> int:
    return reduce(lambda a, b: a * b // math.gcd(a, b), xs, 1)


@dataclass(frozen=True)
class CoeffTable:
    """Coefficients ``c(m, l)`` of a genus, with the source's exactness data.

    The source may live in a tilted window; ``c`` refuses entries the source
    does not know exactly.
    """

    series: Series

    def __post_init__(self):
        tr = self.series.trunc
        if tr.gens or tr.P:
            raise ValueError("a coefficient table needs a plain q, y series")

    @classmethod
    def from_result(cls, g: GenusResult) -> "CoeffTable":
        return cls(g.series)

    @classmethod
    def from_dict(cls, entries: dict, Q, W, D: int = 1, slope: int = 0) -> "CoeffTable":
        """A finite table, taken to be exact (zero) everywhere else in the window."""
        tr = Truncation(Q=Q, W=W, D=D, slope=slope)
        terms = {}
        for (m, l), c in entries.items():
            key = (tr.scaled(m), tr.scaled(l), 0, ())
            terms[key] = to_mpq(c)
        s = Series(tr, terms)
        if s.qhi is not None or s.thi is not None or s.tlo is not None:
            raise ValueError("table entries fall outside the declared window")
        return cls(s)

    @property
    def trunc(self) -> Truncation:
        return self.series.trunc

    def c(self, m, l):
        try:
            return self.series.coefficient(m, l)
        except WindowError as exc:
            raise InsufficientPrecisionError(str(exc)) from None

    def items(self):
        for (q, y, _, _), c in self.series.items():
            yield (q, y), c


def dmvv_table(model: ManifoldModel, pmax: int, qmax, ywin, guard: int = 4) -> CoeffTable:
    """A genus table deep enough for DMVV expansions through ``p^pmax``, ``q^qmax``."""
    datum = trivial_datum(model)
    so = natural_slope(datum)
    D = auto_denominator(datum)
    Qt = pmax * Fraction(qmax)
    # exp of the plethystic log loses up to pmax * |min y| per p-degree
    Wt = Fraction(ywin) + so * pmax * Fraction(qmax) + guard + model.dim * (pmax * pmax + 1)
    return CoeffTable.from_result(pair_elliptic_genus(model, genus_window(Qt, Wt, D, so)))


# ---------------------------------------------------------------------------
# twisted coefficients and the two sides of DMVV


def _work_window(table: CoeffTable, P: int, window: Truncation) -> Truncation:
    tr = table.trunc
    so = max(tr.slope, 1)
    sw = so * P
    D = _lcm(window.D, tr.D * _lcm(*range(1, P + 1)))
    tmin = table.series._tstats()[0] if table.series.terms else 0
    guard = P * P * (max(0, -Fraction(tmin, tr.D)) + 1)
    return Truncation(Q=window.Q, W=Fraction(window.W) + sw * Fraction(window.Q) + guard,
                      P=P, D=D, slope=sw)


def _phase(m: Fraction, s: int, j: int):
    """``e^{-2 pi i m s / j}`` as an exact root of unity."""
    x = (-m * s / j) % 1
    return root_of_unity(x.denominator, x.numerator) if x else 1


def f_ijs(table: CoeffTable, i: int, j: int, s: int, window: Truncation | None = None,
          *, check: bool = True) -> Series:
    """``sum c(m,l) e^{-2 pi i m s/j} y^{il} q^{im/j}``, i.e. the genus at
    ``(i z, (i tau - s)/j)``."""
    if i < 1 or j < 1 or not 0 <= s < j:
        raise ValueError(f"need i, j >= 1 and 0 <= s < j (got {i}, {j}, {s})")
    src = table.series
    if window is None:
        window = src.trunc.with_(D=src.trunc.D * j)
    D = _lcm(window.D, src.trunc.D * j)
    work = window.with_(D=D, gens=(), nmax=0)
    sub = src.substitute_scale(Fraction(i, j), i, trunc=work)
    if j > 1:
        sub = sub.map_coefficients(lambda k, c: c * _phase(Fraction(k[0], D) * j / i, s, j))
    if check:
        try:
            sub = sub.restrict(work)
        except WindowError as exc:
            raise InsufficientPrecisionError(str(exc)) from None
    return sub


def _finish(s: Series, window: Truncation, P: int) -> Series:
    out = Truncation(Q=window.Q, W=window.W, P=P, D=s.trunc.D, slope=window.slope)
    try:
        return s.restrict(out)
    except WindowError as exc:
        raise InsufficientPrecisionError(str(exc)) from None


def dmvv_lhs_exp(table: CoeffTable, P: int, window: Truncation | None = None) -> Series:
    """``exp( sum_{i,j} sum_s p^{ij}/(ij) f_ijs )`` through ``p^P``."""
    window = window or genus_window(table.trunc.Q / max(P, 1), 3)
    work = _work_window(table, P, window)
    total = Series.zero(work)
    for i in range(1, P + 1):
        for j in range(1, P // i + 1):
            acc = Series.zero(work.with_(P=0))
            for s in range(j):
                acc = acc + f_ijs(table, i, j, s, work.with_(P=0), check=False)
            pk = Series.monomial(work, Fraction(1, i * j), p=i * j)
            total = total + pk * Series(work, acc.terms, qhi=acc.qhi, thi=acc.thi, tlo=acc.tlo, _clean=True)
    return _finish(total.exp(), window, P)


def dmvv_rhs_product(table: CoeffTable, P: int, window: Truncation | None = None) -> Series:
    """``prod_{i>=1} prod_{m,l} (1 - p^i y^l q^m)^{-c(mi, l)}`` through ``p^P``."""
    window = window or genus_window(table.trunc.Q / max(P, 1), 3)
    work = _work_window(table, P, window)
    flat = work.with_(P=0)
    src = table.series
    log = Series.zero(work)
    for i in range(1, P + 1):
        # G_i = sum_m c(m i, l) y^l q^m
        sel = {k: c for k, c in src.terms.items() if k[0] % (i * src.trunc.D) == 0}
        Gi = Series(src.trunc, sel, qhi=src.qhi, thi=src.thi, tlo=src.tlo, _clean=True)
        Gi = Gi.substitute_scale(Fraction(1, i), 1, trunc=flat)
        for k in range(1, P // i + 1):
            Gk = Gi.substitute_scale(k, k, trunc=flat) if k > 1 else Gi
            pk = Series.monomial(work, Fraction(1, k), p=i * k)
            log = log + pk * Series(work, Gk.terms, qhi=Gk.qhi, thi=Gk.thi, tlo=Gk.tlo, _clean=True)
    return _finish(log.exp(), window, P)


def dmvv_pairs_check(table: CoeffTable, P: int, window: Truncation | None = None) -> Series:
    """LHS minus RHS of the DMVV identity on a table; zero when it holds."""
    return dmvv_lhs_exp(table, P, window) - dmvv_rhs_product(table, P, window)


def hilbert_scheme_series(table: CoeffTable, P: int, window: Truncation | None = None) -> Series:
    """``sum_n p^n Ell(X^[n])`` for a surface, as the DMVV product."""
    return dmvv_rhs_product(table, P, window)


# ---------------------------------------------------------------------------
# direct orbifold data for S_n


Perm = tuple[int, ...]


def _compose(a: Perm, b: Perm) -> Perm:
    return tuple(a[b[k]] for k in range(len(a)))


def commuting_pairs(n: int) -> list[tuple[Perm, Perm]]:
    perms = list(itertools.permutations(range(n)))
    return [(g, h) for g in perms for h in perms if _compose(g, h) == _compose(h, g)]


def _orbits(g: Perm, h: Perm) -> list[list[int]]:
    n = len(g)
    seen, out = set(), []
    for start in range(n):
        if start in seen:
            continue
        orb, stack = [], [start]
        seen.add(start)
        while stack:
            k = stack.pop()
            orb.append(k)
            for nxt in (g[k], h[k]):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        out.append(sorted(orb))
    return out


def _order_on(g: Perm, orbit: list[int]) -> int:
    out = 1
    for k in orbit:
        length, j = 1, g[k]
        while j != k:
            j, length = g[j], length + 1
        out = out * length // math.gcd(out, length)
    return out


def _power(g: Perm, e: int) -> Perm:
    out = tuple(range(len(g)))
    for _ in range(e):
        out = _compose(g, out)
    return out


def _orbit_characters(g: Perm, h: Perm, orbit: list[int]) -> list[tuple[Fraction, Fraction]]:
    """Characters of the (regular) action of <g, h> on the functions on an orbit."""
    og, oh = _order_on(g, orbit), _order_on(h, orbit)
    pt = orbit[0]
    stab = [(u, v) for u in range(og) for v in range(oh) if _compose(_power(g, u), _power(h, v))[pt] == pt]
    chars = [(Fraction(r, og), Fraction(t, oh)) for r in range(og) for t in range(oh)
             if all((Fraction(r * u, og) + Fraction(t * v, oh)).denominator == 1 for u, v in stab)]
    if len(chars) != len(orbit):
        raise AssertionError("character count does not match orbit size")
    return sorted(chars)


def _cycles(g: Perm) -> str:
    seen, parts = set(), []
    for k in range(len(g)):
        if k in seen or g[k] == k:
            seen.add(k)
            continue
        cyc, j = [k], g[k]
        seen.add(k)
        while j != k:
            cyc.append(j)
            seen.add(j)
            j = g[j]
        parts.append("(" + "".join(str(c + 1) for c in cyc) + ")")
    return "".join(parts) or "e"


def symmetric_power_datum(model: ManifoldModel, n: int) -> OrbifoldDatum:
    """The orbifold datum of ``(X^n, S_n)`` with one block per orbit of <g, h>.

    Pairs with identical block data are merged into one contribution with a
    multiplicity.
    """
    if n not in (1, 2, 3):
        raise GeometryError("symmetric_power_datum supports n = 1, 2, 3")
    if model.divisors:
        raise GeometryError("symmetric_power_datum needs a divisor-free model")
    groups: dict = {}
    labels: dict = {}
    for g, h in commuting_pairs(n):
        sig = tuple(sorted(tuple(_orbit_characters(g, h, orb)) for orb in _orbits(g, h)))
        groups[sig] = groups.get(sig, 0) + 1
        labels.setdefault(sig, f"{_cycles(g)};{_cycles(h)}")
    contribs = []
    for sig, mult in sorted(groups.items(), key=lambda kv: labels[kv[0]]):
        blocks = tuple(
            LocusBlock(model, tuple(TangentSummand(ch, model.dim, model.chern) for ch in chars))
            for chars in sig)
        contribs.append(FixedLocusModel(labels[sig], blocks, mult))
    return OrbifoldDatum(f"Sym^{n}({model.name})", n * model.dim, math.factorial(n), tuple(contribs))


# ---------------------------------------------------------------------------
# numeric lemmas on the (i, j, s) character set


def lemma_characters(i: int, j: int, s: int) -> list[tuple[Fraction, Fraction]]:
    """Pairs ``(m/(ij), n/j)`` with ``0 <= n < j``, ``0 <= m < ij``, ``m = n s mod j``."""
    return [(Fraction(m, i * j), Fraction(nn, j)) for nn in range(j) for m in range(i * j)
            if (m - nn * s) % j == 0]


def _tau_ij(i: int, j: int, s: int, tau: complex) -> complex:
    return (i * tau - s) / j


def lemma_product_residual(i: int, j: int, s: int, x: complex, z: complex, tau: complex) -> float:
    """Relative residual of the product of twisted ratios against the
    ``(i, j, s)``-rescaled ratio; ``x`` stands for ``x_l / 2 pi i``."""
    th = numeric_theta
    lhs = 1
    for lg, lh in lemma_characters(i, j, s):
        u = x + float(lg) - float(lh) * tau
        lhs *= th(u - z, tau) / th(u, tau) * cmath.exp(2j * math.pi * float(lh) * z)
    t2 = _tau_ij(i, j, s, tau)
    rhs = th(i * x - i * z, t2) / th(i * x, t2)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def lemma_producttwo_residual(i: int, j: int, s: int, d: complex, z: complex, tau: complex) -> float:
    th = numeric_theta
    lhs = 1
    for lg, lh in lemma_characters(i, j, s):
        if lg == 0 and lh == 0:
            continue
        w = float(lg) - float(lh) * tau
        lhs *= th(d + w, tau) * th(w - z, tau) / (th(d + w - z, tau) * th(w, tau))
    t2 = _tau_ij(i, j, s, tau)
    num = th(i * d, t2) * th(d - z, tau) * th(-i * z, t2) * th(0, tau, 1)
    den = th(i * d - i * z, t2) * th(d, tau) * i * th(0, t2, 1) * th(-z, tau)
    rhs = num / den
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


def lemma_ijsum_residual(i: int, j: int, s: int, u: complex, v: complex, tau: complex) -> float:
    th = numeric_theta
    lhs = 0
    for lg, lh in lemma_characters(i, j, s):
        w = u + float(lg) - float(lh) * tau
        lhs += th(w - v, tau) / th(w, tau) * cmath.exp(2j * math.pi * float(lh) * v)
    t2 = _tau_ij(i, j, s, tau)
    rhs = i * th(0, t2, 1) * th(-v, tau) * th(i * u - v / j, t2) / (
        th(0, tau, 1) * th(-v / j, t2) * th(i * u, t2))
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)

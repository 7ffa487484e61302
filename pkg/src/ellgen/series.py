"""Exact truncated Puiseux series in ``q``, ``y``, ``p`` and nilpotent generators.

A :class:`Series` is a sparse map from exponent keys to coefficients.  Keys
are ``(qn, yn, p, nil)`` where ``qn/D`` and ``yn/D`` are the q- and
y-exponents, ``p`` is a non-negative integer and ``nil`` is a tuple of
exponents of the nilpotent generators declared in the :class:`Truncation`.
Coefficients are ``gmpy2.mpq`` rationals, :class:`CycRational` elements of a
cyclotomic field, or Python complex numbers for numeric work.

The window keeps ``0 <= q <= Q``, ``p <= P``, weighted nilpotent degree
``<= nmax`` and ``-W <= y + slope*q <= W``.  A positive ``slope`` tilts the
y-window so that expansions such as ``1/(1 - q y^-1)`` stay exact deep into
high q-orders.

Expansions that are infinite in ``y`` (e.g. ``1/(1-y)`` expanded around
``y = 0``) are truncated at the top of the window.  Every series records how
far its stored data is trustworthy: ``thi``/``tlo`` bound the tilted
y-degree and ``qhi`` the q-degree (``None`` means nothing was discarded).
Multiplication propagates these bounds, so a product of a truncated series
with a factor carrying negative y-powers is never silently wrong;
:meth:`Series.coefficient` refuses to read outside the exact region.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from math import factorial, gcd, inf
import cmath
import re

import gmpy2
from gmpy2 import mpq

__all__ = [
    "SeriesError",
    "ParameterError",
    "InversionError",
    "WindowError",
    "CycRational",
    "root_of_unity",
    "to_mpq",
    "Truncation",
    "Series",
]


class SeriesError(Exception):
    """Base class for series errors."""


class ParameterError(SeriesError):
    """Mismatched or unrepresentable truncation parameters."""


class InversionError(SeriesError):
    """Raised when a series has no inverse (or log/exp precondition fails)."""


class WindowError(SeriesError):
    """Raised when reading data outside the window or the exact region."""


def to_mpq(x) -> mpq:
    if isinstance(x, Fraction):
        return mpq(x.numerator, x.denominator)
    if isinstance(x, str):
        return mpq(Fraction(x))
    return mpq(x)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if type(x).__name__ == "mpq":
        return Fraction(int(x.numerator), int(x.denominator))
    return Fraction(x)


def _lcm(a: int, b: int) -> int:
    return a * b // gcd(a, b)


# ---------------------------------------------------------------------------
# Cyclotomic fields


@lru_cache(maxsize=None)
def _cyclotomic(N: int) -> tuple[int, ...]:
    """Coefficients of the N-th cyclotomic polynomial, lowest degree first."""
    from sympy import Poly, cyclotomic_poly, symbols

    x = symbols("x")
    coeffs = Poly(cyclotomic_poly(N, x), x).all_coeffs()
    return tuple(int(c) for c in reversed(coeffs))


@lru_cache(maxsize=None)
def _power_table(N: int) -> tuple[tuple[int, ...], ...]:
    """Coordinates of zeta_N^k, k = 0..N-1, in the power basis."""
    phi = _cyclotomic(N)
    d = len(phi) - 1
    table = []
    v = [0] * d
    v[0] = 1
    for _ in range(N):
        table.append(tuple(v))
        top = v[-1]
        v = [0] + v[:-1]
        if top:
            for i in range(d):
                v[i] -= top * phi[i]
    return tuple(table)


class CycRational:
    """An element of Q(zeta_N), stored in the power basis modulo Phi_N."""

    __slots__ = ("N", "c")

    def __init__(self, N: int, coeffs=()):
        d = len(_cyclotomic(N)) - 1
        c = [to_mpq(x) for x in coeffs]
        if len(c) > d:
            raise ParameterError(f"too many coordinates for conductor {N}")
        c += [mpq(0)] * (d - len(c))
        self.N = N
        self.c = tuple(c)

    @classmethod
    def zeta(cls, N: int, k: int = 1) -> "CycRational":
        return cls(N, _power_table(N)[k % N])

    @classmethod
    def rational(cls, N: int, x) -> "CycRational":
        return cls(N, [x])

    # coercion ------------------------------------------------------------
    def lift(self, M: int) -> "CycRational":
        """Embed into Q(zeta_M) for a multiple M of N."""
        if M == self.N:
            return self
        if M % self.N:
            raise ParameterError(f"{M} is not a multiple of {self.N}")
        step = M // self.N
        table = _power_table(M)
        out = [mpq(0)] * (len(_cyclotomic(M)) - 1)
        for k, a in enumerate(self.c):
            if a:
                for i, t in enumerate(table[(k * step) % M]):
                    if t:
                        out[i] += a * t
        return CycRational(M, out)

    def _coerce(self, other):
        if isinstance(other, CycRational):
            if other.N == self.N:
                return self, other
            M = _lcm(self.N, other.N)
            return self.lift(M), other.lift(M)
        if isinstance(other, (int, Fraction)) or type(other).__name__ == "mpq":
            return self, CycRational(self.N, [other])
        return None, None

    # arithmetic ----------------------------------------------------------
    def __add__(self, other):
        a, b = self._coerce(other)
        if a is None:
            return NotImplemented
        return CycRational(a.N, [x + y for x, y in zip(a.c, b.c)])

    __radd__ = __add__

    def __neg__(self):
        return CycRational(self.N, [-x for x in self.c])

    def __sub__(self, other):
        a, b = self._coerce(other)
        if a is None:
            return NotImplemented
        return CycRational(a.N, [x - y for x, y in zip(a.c, b.c)])

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, int) or type(other).__name__ == "mpq":
            return CycRational(self.N, [x * other for x in self.c])
        a, b = self._coerce(other)
        if a is None:
            return NotImplemented
        d = len(a.c)
        raw = [mpq(0)] * (2 * d - 1)
        for i, x in enumerate(a.c):
            if x:
                for j, y in enumerate(b.c):
                    if y:
                        raw[i + j] += x * y
        table = _power_table(a.N)
        out = list(raw[:d])
        for k in range(d, 2 * d - 1):
            v = raw[k]
            if v:
                for i, t in enumerate(table[k % a.N]):
                    if t:
                        out[i] += v * t
        return CycRational(a.N, out)

    __rmul__ = __mul__

    def inverse(self) -> "CycRational":
        if not self:
            raise ZeroDivisionError("inverse of zero in a cyclotomic field")
        d = len(self.c)
        # columns: self * zeta^j
        cols = []
        z = CycRational.zeta(self.N)
        cur = self
        for _ in range(d):
            cols.append(cur.c)
            cur = cur * z
        m = [[cols[j][i] for j in range(d)] + [mpq(1 if i == 0 else 0)] for i in range(d)]
        for col in range(d):
            piv = next(r for r in range(col, d) if m[r][col])
            m[col], m[piv] = m[piv], m[col]
            inv = 1 / m[col][col]
            m[col] = [x * inv for x in m[col]]
            for r in range(d):
                if r != col and m[r][col]:
                    f = m[r][col]
                    m[r] = [x - f * y for x, y in zip(m[r], m[col])]
        return CycRational(self.N, [m[i][d] for i in range(d)])

    def __truediv__(self, other):
        if isinstance(other, int) or type(other).__name__ == "mpq":
            return CycRational(self.N, [x / other for x in self.c])
        a, b = self._coerce(other)
        if a is None:
            return NotImplemented
        return a * b.inverse()

    def __rtruediv__(self, other):
        return self.inverse() * other

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        out = CycRational(self.N, [1])
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # predicates ----------------------------------------------------------
    def __bool__(self):
        return any(self.c)

    def __eq__(self, other):
        a, b = self._coerce(other)
        if a is None:
            return NotImplemented
        return a.c == b.c

    def __hash__(self):
        if self.is_rational():
            return hash(self.c[0])
        return hash((self.N, self.c))

    def is_rational(self) -> bool:
        return not any(self.c[1:])

    def to_rational(self) -> mpq:
        if not self.is_rational():
            raise ValueError(f"{self} is not rational")
        return self.c[0]

    def __complex__(self):
        w = cmath.exp(2j * cmath.pi / self.N)
        return complex(sum(float(a) * w**k for k, a in enumerate(self.c)))

    def __repr__(self):
        return f"CycRational({self.N}, {[str(x) for x in self.c]})"

    def __str__(self):
        return f"cyc{self.N}[{','.join(str(x) for x in self.c)}]"


def root_of_unity(N: int, k: int = 1):
    """``exp(2 pi i k/N)`` as an exact field element (rational when possible)."""
    k %= N
    if k == 0:
        return mpq(1)
    if 2 * k == N:
        return mpq(-1)
    return CycRational.zeta(N, k)


def _simplify(c):
    if isinstance(c, CycRational) and c.is_rational():
        return c.c[0]
    if type(c).__name__ == "mpc":
        return complex(c)
    return c


def _coeff_str(c) -> str:
    if isinstance(c, complex):
        return f"({c.real!r}{c.imag:+!r}j)"
    if isinstance(c, CycRational):
        return str(c)
    return str(c)


_CYC_RE = re.compile(r"cyc(\d+)\[([^\]]*)\]")


def _parse_coeff(s: str):
    s = s.strip()
    m = _CYC_RE.fullmatch(s)
    if m:
        return CycRational(int(m.group(1)), [to_mpq(x) for x in m.group(2).split(",")])
    if s.startswith("(") and s.endswith("j)"):
        return complex(s[1:-1])
    return to_mpq(s)


# ---------------------------------------------------------------------------
# Truncation windows


@dataclass(frozen=True)
class Truncation:
    """Window parameters shared by series that are combined together."""

    Q: Fraction = Fraction(6)
    W: Fraction = Fraction(8)
    P: int = 0
    D: int = 1
    gens: tuple[tuple[str, int], ...] = ()
    nmax: int = 0
    slope: int = 0
    qfloor: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "Q", Fraction(self.Q))
        object.__setattr__(self, "W", Fraction(self.W))
        object.__setattr__(self, "qfloor", Fraction(self.qfloor))
        object.__setattr__(self, "gens", tuple((str(n), int(d)) for n, d in self.gens))
        if self.D < 1 or self.P < 0 or self.nmax < 0 or self.slope < 0:
            raise ParameterError(f"invalid truncation {self}")
        if self.W < 0 or self.Q < self.qfloor:
            raise ParameterError(f"invalid truncation {self}")
        if any(d < 1 for _, d in self.gens):
            raise ParameterError("nilpotent generators need positive degree")

    @property
    def Qn(self) -> int:
        return int((self.Q * self.D).__floor__())

    @property
    def Tn(self) -> int:
        return int((self.W * self.D).__floor__())

    @property
    def qfloor_n(self) -> int:
        return int((self.qfloor * self.D).__ceil__())

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.gens)

    def with_(self, **kw) -> "Truncation":
        return replace(self, **kw)

    def nil_degree(self, nil: tuple[int, ...]) -> int:
        return sum(e * d for e, (_, d) in zip(nil, self.gens))

    def scaled(self, x) -> int:
        """An exponent in units of 1/D; raises if not representable."""
        v = Fraction(x) * self.D
        if v.denominator != 1:
            raise ParameterError(f"exponent {x} not representable with D={self.D}")
        return int(v)


def _min_opt(*xs):
    vals = [x for x in xs if x is not None]
    return min(vals) if vals else None


def _max_opt(*xs):
    vals = [x for x in xs if x is not None]
    return max(vals) if vals else None


class Series:
    """Immutable truncated series; see the module docstring."""

    __slots__ = ("trunc", "terms", "qhi", "thi", "tlo", "_stats")

    def __init__(self, trunc: Truncation, terms=None, *, qhi=None, thi=None, tlo=None, _clean=False):
        self.trunc = trunc
        self.qhi, self.thi, self.tlo = qhi, thi, tlo
        self._stats = None
        if _clean:
            self.terms = terms
            return
        clean: dict = {}
        if terms:
            Qn, Tn, s = trunc.Qn, trunc.Tn, trunc.slope
            qf = trunc.qfloor_n
            nv = len(trunc.gens)
            for key, c in terms.items():
                qn, yn, p, nil = key
                if len(nil) != nv:
                    raise ParameterError(f"key {key} does not match generators {trunc.names}")
                if not c:
                    continue
                if qn < qf:
                    raise ParameterError(f"q-exponent {Fraction(qn, trunc.D)} below q_floor")
                if p < 0 or any(e < 0 for e in nil):
                    raise ParameterError(f"negative p or nilpotent exponent in {key}")
                if p > trunc.P or trunc.nil_degree(nil) > trunc.nmax:
                    continue
                if qn > Qn:
                    self.qhi = _min_opt(self.qhi, Qn)
                    continue
                t = yn + s * qn
                if t > Tn:
                    self.thi = _min_opt(self.thi, Tn)
                    continue
                if t < -Tn:
                    self.tlo = _max_opt(self.tlo, -Tn)
                    continue
                clean[key] = clean.get(key, 0) + c
            clean = {k: _simplify(v) for k, v in clean.items() if v}
        self.terms = clean

    # -- constructors ------------------------------------------------------
    @classmethod
    def zero(cls, trunc: Truncation) -> "Series":
        return cls(trunc, {}, _clean=True)

    @classmethod
    def constant(cls, trunc: Truncation, c=1) -> "Series":
        return cls.monomial(trunc, c)

    @classmethod
    def one(cls, trunc: Truncation) -> "Series":
        return cls.monomial(trunc, 1)

    @classmethod
    def monomial(cls, trunc: Truncation, c=1, q=0, y=0, p=0, nil=None) -> "Series":
        if not isinstance(c, (complex, CycRational)):
            c = to_mpq(c)
        return cls(trunc, {(trunc.scaled(q), trunc.scaled(y), int(p), cls._nil(trunc, nil)): c})

    @classmethod
    def from_dict(cls, trunc: Truncation, data) -> "Series":
        """Build from ``{(q, y): c}``, ``{(q, y, p): c}`` or ``{(q, y, p, nil): c}``."""
        terms: dict = {}
        for key, c in data.items():
            key = tuple(key)
            q, y = key[0], key[1]
            p = key[2] if len(key) > 2 else 0
            nil = cls._nil(trunc, key[3] if len(key) > 3 else None)
            if not isinstance(c, (complex, CycRational)):
                c = to_mpq(c)
            k = (trunc.scaled(q), trunc.scaled(y), int(p), nil)
            terms[k] = terms.get(k, 0) + c
        return cls(trunc, terms)

    @staticmethod
    def _nil(trunc: Truncation, nil) -> tuple[int, ...]:
        n = len(trunc.gens)
        if nil is None:
            return (0,) * n
        if isinstance(nil, dict):
            out = [0] * n
            names = trunc.names
            for name, e in nil.items():
                if name not in names:
                    raise ParameterError(f"unknown nilpotent generator {name!r}")
                out[names.index(name)] += int(e)
            return tuple(out)
        nil = tuple(int(e) for e in nil)
        if len(nil) != n:
            raise ParameterError(f"nilpotent exponent {nil} does not match {trunc.names}")
        return nil

    # -- inspection --------------------------------------------------------
    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(sorted(self.terms.items()))

    def items(self):
        """Terms as ``((q, y, p, nil), c)`` with Fraction exponents, sorted."""
        D = self.trunc.D
        for (qn, yn, p, nil), c in sorted(self.terms.items()):
            yield (Fraction(qn, D), Fraction(yn, D), p, nil), c

    def is_zero(self) -> bool:
        return not self.terms

    def _t(self, key) -> int:
        return key[1] + self.trunc.slope * key[0]

    def _tstats(self):
        if self._stats is None:
            if self.terms:
                ts = [self._t(k) for k in self.terms]
                qs = [k[0] for k in self.terms]
                self._stats = (min(ts), max(ts), min(qs))
            else:
                self._stats = (inf, -inf, inf)
        return self._stats

    def _support_bounds(self):
        """Bounds (L, U, qL) on the support of the true series."""
        tmin, tmax, qmin = self._tstats()
        L = -inf if self.tlo is not None else min(tmin, self.thi if self.thi is not None else inf)
        U = inf if self.thi is not None else max(tmax, self.tlo if self.tlo is not None else -inf)
        qL = min(qmin, self.qhi if self.qhi is not None else inf)
        return L, U, qL

    def is_exact_at(self, q, y) -> bool:
        tr = self.trunc
        qn, yn = Fraction(q) * tr.D, Fraction(y) * tr.D
        t = yn + tr.slope * qn
        if self.qhi is not None and qn > self.qhi:
            return False
        if self.thi is not None and t > self.thi:
            return False
        if self.tlo is not None and t < self.tlo:
            return False
        return True

    def exact_in(self, Q, W) -> bool:
        """True when all coefficients with q <= Q and |y| <= W are exact."""
        return self.is_exact_at(Q, W) and self.is_exact_at(0, W) and self.is_exact_at(Q, -W) and self.is_exact_at(0, -W)

    def coefficient(self, q=0, y=0, p=0, nil=None):
        """The coefficient of ``q^q y^y p^p nil``; zero when absent."""
        tr = self.trunc
        q, y = Fraction(q), Fraction(y)
        qn, yn = q * tr.D, y * tr.D
        if qn.denominator != 1 or yn.denominator != 1:
            raise WindowError(f"exponent (q={q}, y={y}) not on the D={tr.D} grid")
        qn, yn = int(qn), int(yn)
        nil = self._nil(tr, nil)
        t = yn + tr.slope * qn
        if not (tr.qfloor_n <= qn <= tr.Qn and -tr.Tn <= t <= tr.Tn and 0 <= p <= tr.P
                and tr.nil_degree(nil) <= tr.nmax):
            raise WindowError(f"key (q={q}, y={y}, p={p}, nil={nil}) outside the window")
        if not self.is_exact_at(q, y):
            raise WindowError(f"coefficient at (q={q}, y={y}) was truncated away")
        return self.terms.get((qn, yn, p, nil), mpq(0))

    def __getitem__(self, key):
        return self.coefficient(*key)

    # -- comparison --------------------------------------------------------
    def __eq__(self, other):
        if isinstance(other, (int, Fraction)) or type(other).__name__ == "mpq":
            other = Series.constant(self.trunc, other)
        if not isinstance(other, Series):
            return NotImplemented
        return self.trunc == other.trunc and self.terms == other.terms

    def __hash__(self):
        return hash((self.trunc, frozenset(self.terms.items())))

    # -- ring operations ---------------------------------------------------
    def _check(self, other: "Series"):
        if self.trunc != other.trunc:
            raise ParameterError(f"truncation mismatch: {self.trunc} vs {other.trunc}")

    def _lift(self, other):
        if isinstance(other, Series):
            self._check(other)
            return other
        if isinstance(other, (int, Fraction, complex, CycRational)) or type(other).__name__ == "mpq":
            return Series.constant(self.trunc, other)
        return None

    def __add__(self, other):
        other = self._lift(other)
        if other is None:
            return NotImplemented
        terms = dict(self.terms)
        for k, c in other.terms.items():
            v = terms.get(k, 0) + c
            if v:
                terms[k] = _simplify(v)
            else:
                terms.pop(k, None)
        return Series(self.trunc, terms, qhi=_min_opt(self.qhi, other.qhi),
                      thi=_min_opt(self.thi, other.thi), tlo=_max_opt(self.tlo, other.tlo), _clean=True)

    __radd__ = __add__

    def __neg__(self):
        return Series(self.trunc, {k: -c for k, c in self.terms.items()},
                      qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)

    def __sub__(self, other):
        other = self._lift(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, c) -> "Series":
        if not isinstance(c, (complex, CycRational)):
            c = to_mpq(c)
        if not c:
            return Series(self.trunc, {}, qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)
        return Series(self.trunc, {k: _simplify(v * c) for k, v in self.terms.items()},
                      qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction, complex, CycRational)) or type(other).__name__ == "mpq":
            return self.scale(other)
        if not isinstance(other, Series):
            return NotImplemented
        self._check(other)
        terms, drops = _mul_terms(self, other)
        return Series(self.trunc, terms, _clean=True, **_product_bounds(self, other, drops))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, Series):
            return self * other.invert()
        if isinstance(other, CycRational):
            return self.scale(other.inverse())
        if isinstance(other, complex):
            return self.scale(1 / other)
        return self.scale(1 / to_mpq(other))

    def __pow__(self, k: int):
        if k < 0:
            return self.invert() ** (-k)
        out = Series.one(self.trunc)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def shift(self, q=0, y=0) -> "Series":
        """Multiply by the monomial ``q^q y^y`` exactly (re-truncated)."""
        return self * Series.monomial(self.trunc, 1, q=q, y=y)

    # -- inversion, exp, log -----------------------------------------------
    def _lead(self):
        if not self.terms:
            raise InversionError("cannot invert zero")
        tr = self.trunc

        def order(k):
            return (k[2], k[0], tr.nil_degree(k[3]), k[1])

        key = min(self.terms, key=order)
        if key[2] != 0 or any(key[3]):
            raise InversionError(f"leading term {key} is not a unit")
        c = self.terms[key]
        if not c:
            raise InversionError("leading coefficient is not invertible")
        return key, c

    def _step_bound(self) -> int:
        """Number of positive factors after which products leave the window."""
        tr = self.trunc
        neg = max(0, -self._tstats()[0]) if self.terms else 0
        base = tr.P + tr.Qn + tr.nmax + 1
        return base + 2 * tr.Tn + base * neg + 2

    def invert(self) -> "Series":
        """Multiplicative inverse, expanded around the lowest term.

        Newton steps ``b <- b + b (1 - a b)`` double the order of the error,
        so a logarithmic number of steps reaches the window edge.  Whatever
        error survives sits at the top of the window and is folded into the
        exactness bound of the result.
        """
        tr = self.trunc
        (lq, ly, _, _), c = self._lead()
        if -lq < tr.qfloor_n:
            raise InversionError("inverse of the leading q-power is below q_floor")
        cinv = c.inverse() if isinstance(c, CycRational) else 1 / c
        b = Series(tr, {(-lq, -ly, 0, (0,) * len(tr.gens)): cinv}, _clean=True)
        one = Series.one(tr)
        steps = tr.P + tr.Qn + tr.nmax + 2 * tr.Tn + 2
        for _ in range(steps.bit_length() + 2):
            ab_terms, drops = _mul_terms(self, b)
            e = one - Series(tr, ab_terms, _clean=True)
            if not e.terms:
                break
            be_terms, _ = _mul_terms(b, e)
            b = b + Series(tr, be_terms, _clean=True)
        else:
            ab_terms, drops = _mul_terms(self, b)
            e = one - Series(tr, ab_terms, _clean=True)
        return Series(tr, b.terms, _clean=True, **_inverse_bounds(self, b, e, drops))

    def _require_unit_constant(self, value, what: str):
        zero = (0, 0, 0, (0,) * len(self.trunc.gens))
        if self.terms.get(zero, 0) != value:
            raise InversionError(f"{what} needs constant term {value}")
        for k in self.terms:
            if k != zero and not _positive(self.trunc, k):
                raise InversionError(f"{what}: term {k} is not positive, the series would not terminate")

    def exp(self) -> "Series":
        self._require_unit_constant(0, "exp")
        return _power_sum(self, lambda k: mpq(1, factorial(k)), start=0)

    def log(self) -> "Series":
        self._require_unit_constant(1, "log")
        u = self - 1
        return _power_sum(u, lambda k: mpq((-1) ** (k + 1), k), start=1)

    def exp_log(self, mode: str) -> "Series":
        if mode == "exp":
            return self.exp()
        if mode == "log":
            return self.log()
        raise ValueError(f"mode must be 'exp' or 'log', not {mode!r}")

    # -- substitutions -----------------------------------------------------
    def restrict(self, trunc: Truncation, *, check: bool = True) -> "Series":
        """Re-express in another window, keeping only data that stays exact."""
        old = self.trunc
        if trunc.names != old.names:
            raise ParameterError("restrict cannot change nilpotent generators")
        return _rescale(self, trunc, Fraction(1), Fraction(1), check=check)

    def truncate(self, Q=None, W=None) -> "Series":
        tr = self.trunc.with_(Q=self.trunc.Q if Q is None else Q, W=self.trunc.W if W is None else W)
        return self.restrict(tr)

    def substitute_scale(self, r=1, s=1, trunc: Truncation | None = None) -> "Series":
        """Apply ``q -> q^r`` and ``y -> y^s`` for positive rationals r, s."""
        r, s = Fraction(r), Fraction(s)
        if r <= 0 or s <= 0:
            raise ParameterError("scaling exponents must be positive")
        return _rescale(self, trunc or self.trunc, r, s, check=False)

    def comb_select(self, j: int) -> "Series":
        """``j * sum_m a_{jm} q^m``: keep q-exponents divisible by j, divide them by j."""
        if j < 1:
            raise ParameterError("j must be positive")
        if j == 1:
            return self
        D = self.trunc.D
        kept = {}
        for key, c in self.terms.items():
            qn = key[0]
            if qn % (j * D) == 0:
                kept[key] = c
            elif qn % D != 0:
                raise ParameterError("comb_select needs integer q-exponents")
        sel = Series(self.trunc, kept, qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)
        return _rescale(sel, self.trunc, Fraction(1, j), Fraction(1), check=False).scale(j)

    def map_coefficients(self, f) -> "Series":
        return Series(self.trunc, {k: f(k, c) for k, c in self.terms.items()},
                      qhi=self.qhi, thi=self.thi, tlo=self.tlo)

    def nil_parts(self) -> dict:
        """Split by nilpotent monomial: ``{nil: Series without nilpotents}``."""
        tr = self.trunc.with_(gens=(), nmax=0)
        groups: dict = {}
        for (qn, yn, p, nil), c in self.terms.items():
            groups.setdefault(nil, {})[(qn, yn, p, ())] = c
        return {nil: Series(tr, t, qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)
                for nil, t in groups.items()}

    def with_generators(self, trunc: Truncation) -> "Series":
        """Embed a series without nilpotents into a window that has them."""
        if self.trunc.gens:
            raise ParameterError("series already carries nilpotent generators")
        base = trunc.with_(gens=(), nmax=0)
        if base != self.trunc:
            raise ParameterError(f"window mismatch: {base} vs {self.trunc}")
        z = (0,) * len(trunc.gens)
        return Series(trunc, {(q, y, p, z): c for (q, y, p, _), c in self.terms.items()},
                      qhi=self.qhi, thi=self.thi, tlo=self.tlo, _clean=True)

    # -- numerics ----------------------------------------------------------
    def evaluate(self, z: complex, tau: complex, p: complex = 0, nil_values=None) -> complex:
        """Embed into the complex numbers at ``y = e^{2 pi i z}``, ``q = e^{2 pi i tau}``."""
        D = self.trunc.D
        total = 0j
        two_pi_i = 2j * cmath.pi
        for (qn, yn, pe, nil), c in self.terms.items():
            if any(nil):
                if nil_values is None:
                    raise ValueError("series has nilpotent terms; supply nil_values")
                mono = 1
                for v, e in zip(nil_values, nil):
                    mono *= v**e
            else:
                mono = 1
            total += complex(c) * cmath.exp(two_pi_i * (qn * tau + yn * z) / D) * (p**pe) * mono
        return total

    # -- text form ---------------------------------------------------------
    def to_text(self) -> str:
        tr = self.trunc
        D = tr.D
        lines = []
        for (qn, yn, p, nil), c in sorted(self.terms.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1], kv[0][3])):
            parts = []
            if qn:
                parts.append(f"q^({qn}/{D})")
            if yn:
                parts.append(f"y^({yn}/{D})")
            if p:
                parts.append(f"p^{p}")
            for (name, _), e in zip(tr.gens, nil):
                if e:
                    parts.append(f"{name}^{e}")
            cs = _coeff_str(c)
            lines.append(cs + (" * " + " ".join(parts) if parts else ""))
        return "\n".join(lines)

    @classmethod
    def from_text(cls, trunc: Truncation, text: str) -> "Series":
        terms: dict = {}
        names = trunc.names
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if " * " in line:
                cs, mono = line.split(" * ", 1)
            else:
                cs, mono = line, ""
            c = _parse_coeff(cs)
            q = y = Fraction(0)
            p = 0
            nil = [0] * len(names)
            for tok in mono.split():
                base, _, ex = tok.partition("^")
                ex = ex.strip("()")
                if base == "q":
                    q = Fraction(ex)
                elif base == "y":
                    y = Fraction(ex)
                elif base == "p":
                    p = int(ex)
                elif base in names:
                    nil[names.index(base)] += int(ex)
                else:
                    raise ParameterError(f"unknown variable {base!r} in {raw!r}")
            k = (trunc.scaled(q), trunc.scaled(y), p, tuple(nil))
            terms[k] = terms.get(k, 0) + c
        return cls(trunc, terms)

    def __repr__(self):
        body = self.to_text().replace("\n", " + ") or "0"
        return f"Series({body})"


# ---------------------------------------------------------------------------
# kernels


def _positive(tr: Truncation, key) -> bool:
    qn, yn, p, nil = key
    if p:
        return p > 0
    if qn:
        return qn > 0
    d = tr.nil_degree(nil)
    if d:
        return d > 0
    return yn > 0


def _add_nil(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _mul_terms(a: Series, b: Series):
    """Raw truncated product; returns terms and which window edges were hit."""
    tr = a.trunc
    Qn, Tn, P, nmax, s = tr.Qn, tr.Tn, tr.P, tr.nmax, tr.slope
    has_nil = bool(tr.gens)
    drops = {"hi": False, "lo": False, "q": False}
    if not a.terms or not b.terms:
        return {}, drops
    if len(a.terms) < len(b.terms):
        a, b = b, a
    groups: dict = {}
    for (qn, yn, p, nil), c in b.terms.items():
        groups.setdefault(qn, []).append((yn, p, nil, tr.nil_degree(nil) if has_nil else 0, yn + s * qn, c))
    bq = sorted(groups.items())
    out: dict = {}
    get = out.get
    for (qa, ya, pa, na), ca in a.terms.items():
        da = tr.nil_degree(na) if has_nil else 0
        ta = ya + s * qa
        for qb, lst in bq:
            q = qa + qb
            if q > Qn:
                drops["q"] = True
                break
            for yb, pb, nb, db, tb, cb in lst:
                if pa + pb > P or da + db > nmax:
                    continue
                t = ta + tb
                if t > Tn:
                    drops["hi"] = True
                    continue
                if t < -Tn:
                    drops["lo"] = True
                    continue
                key = (q, ya + yb, pa + pb, _add_nil(na, nb) if has_nil else na)
                out[key] = get(key, 0) + ca * cb
    return {k: _simplify(v) for k, v in out.items() if v}, drops


def _bound_sum(x, y):
    if x in (inf, -inf):
        return x
    if y in (inf, -inf):
        return y
    return x + y


def _product_bounds(a: Series, b: Series, drops) -> dict:
    La, Ua, qLa = a._support_bounds()
    Lb, Ub, qLb = b._support_bounds()
    tr = a.trunc
    his = []
    if a.thi is not None:
        his.append(_bound_sum(a.thi, Lb))
    if b.thi is not None:
        his.append(_bound_sum(b.thi, La))
    if drops["hi"]:
        his.append(tr.Tn)
    los = []
    if a.tlo is not None:
        los.append(_bound_sum(a.tlo, Ub))
    if b.tlo is not None:
        los.append(_bound_sum(b.tlo, Ua))
    if drops["lo"]:
        los.append(-tr.Tn)
    qs = []
    if a.qhi is not None:
        qs.append(_bound_sum(a.qhi, qLb))
    if b.qhi is not None:
        qs.append(_bound_sum(b.qhi, qLa))
    if drops["q"]:
        qs.append(tr.Qn)
    thi = min(his) if his else None
    tlo = max(los) if los else None
    qhi = min(qs) if qs else None
    if thi == inf:
        thi = None
    if tlo == -inf:
        tlo = None
    if qhi == inf:
        qhi = None
    return {"thi": thi, "tlo": tlo, "qhi": qhi}


def _inverse_bounds(a: Series, b: Series, e: Series, drops) -> dict:
    """Exactness of an approximate inverse ``b`` of ``a``.

    With ``a b = 1 + e'`` (``e'`` the untruncated residual) and ``d`` the
    unknown part of ``a``, the true inverse differs from ``b`` by
    ``-(1/a)(e' + d b)``.  Supports of ``e'`` and ``d`` are known, and the
    support of ``1/a`` is bounded below, which bounds the error.
    """
    tr = a.trunc
    (lq, ly, _, _), _ = a._lead()
    lead_t = ly + tr.slope * lq
    neg = min(0, a._tstats()[0] - lead_t)
    l_beta = -lead_t + neg * (tr.P + tr.Qn + tr.nmax)
    tmin_b = b._tstats()[0]
    his = []
    if e.terms:
        his.append(e._tstats()[0] - 1 + l_beta)
    if drops["hi"]:
        his.append(tr.Tn + l_beta)
    if a.thi is not None:
        his.append(_bound_sum(_bound_sum(a.thi, tmin_b), l_beta))
    thi = min(his) if his else None
    if a.tlo is not None or drops["lo"]:
        thi = -inf
    qs = []
    if drops["q"]:
        qs.append(tr.Qn - lq)
    if a.qhi is not None:
        qs.append(a.qhi - 2 * lq)
    qhi = min(qs) if qs else None
    return {"thi": thi, "tlo": None, "qhi": qhi}


def _power_sum(a: Series, coeff, start: int) -> Series:
    """``sum_{k >= start} coeff(k) a^k`` for a series whose powers leave the window."""
    tr = a.trunc
    total = Series.zero(tr)
    power = Series.one(tr)
    if start == 0:
        total = total + power.scale(coeff(0))
    k = 0
    bound = a._step_bound()
    # a^k is graded at least k times the base's minimal p-, q- and
    # nilpotent degree; once that leaves the window every later power is zero
    if a.terms:
        pmin = min(key[2] for key in a.terms)
        qmin = min(key[0] for key in a.terms)
        nmin = min(tr.nil_degree(key[3]) for key in a.terms)
    else:
        pmin = qmin = nmin = 0
    while True:
        k += 1
        power = power * a
        if k >= start:
            total = total + power.scale(coeff(k))
        if not power.terms:
            exact_tail = power.thi is None and power.tlo is None
            graded_out = ((pmin > 0 and k * pmin > tr.P) or (qmin > 0 and k * qmin > tr.Qn)
                          or (nmin > 0 and k * nmin > tr.nmax))
            if exact_tail or graded_out or k > bound:
                # remaining powers live beyond power's exact region, or
                # have left the window entirely
                break
    return total


def _rescale(src: Series, trunc: Truncation, r: Fraction, s: Fraction, *, check: bool) -> Series:
    """Map keys (q, y) -> (r q, s y) into ``trunc``, tracking exactness."""
    old = src.trunc
    if trunc.names != old.names:
        raise ParameterError("cannot change nilpotent generators while rescaling")
    Do, Dn = old.D, trunc.D
    terms: dict = {}
    for (qn, yn, p, nil), c in src.terms.items():
        q = Fraction(qn, Do) * r
        y = Fraction(yn, Do) * s
        qv, yv = q * Dn, y * Dn
        if qv.denominator != 1 or yv.denominator != 1:
            raise ParameterError(f"exponent (q={q}, y={y}) not representable with D={Dn}")
        k = (int(qv), int(yv), p, nil)
        terms[k] = terms.get(k, 0) + c
    out = Series(trunc, terms)
    # exactness region of the source, transported into the new coordinates
    so, sn = old.slope, trunc.slope
    cfac = Fraction(so) / r - Fraction(sn) / s  # old t/D = (y'/s + so q'/r)
    Qn = Fraction(trunc.Qn, Dn)
    # unset t-bounds mean nothing was ever dropped there; the q-edge of the
    # source window still limits what shrinking q can reveal
    src_qhi = old.Qn if src.qhi is None else src.qhi
    thi = tlo = None
    if src.thi is not None:
        if src.thi == -inf:
            thi = -inf
        else:
            bound = Fraction(src.thi, Do) - max(Fraction(0), cfac * Qn)
            thi = int((bound * s * Dn).__floor__())
    if src.tlo is not None:
        if src.tlo == inf:
            tlo = inf
        else:
            bound = Fraction(src.tlo, Do) - min(Fraction(0), cfac * Qn)
            tlo = int((bound * s * Dn).__ceil__())
    qv = int((Fraction(src_qhi, Do) * r * Dn).__floor__())
    qhi = qv if qv < trunc.Qn else None
    # a source without losses stays exact up to the new window's edges
    thi = _min_opt(thi, out.thi)
    tlo = _max_opt(tlo, out.tlo)
    qhi = _min_opt(qhi, out.qhi)
    res = Series(trunc, out.terms, qhi=qhi, thi=thi, tlo=tlo, _clean=True)
    if check:
        Q, W = trunc.Q, trunc.W
        corners = [(Fraction(0), W), (Q, W - sn * Q), (Fraction(0), -W), (Q, -W - sn * Q)]
        for q, y in corners:
            if not res.is_exact_at(q, y):
                raise WindowError(
                    f"source exact region does not cover the requested window (q={q}, y={y})")
        res = Series(trunc, res.terms, qhi=qhi, thi=thi, tlo=tlo, _clean=True)
    return res

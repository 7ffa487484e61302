"""Declarative manifold models and the Chern-root calculus.

Cohomology classes live in the free graded-commutative algebra on the
declared generators (:class:`ClassPoly`).  Relations only enter through the
integration functional, which reads the top-degree part.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction

import sympy

from .series import Series, Truncation, to_mpq

__all__ = [
    "GeometryError",
    "KawamataError",
    "MissingIntersectionError",
    "ClassPoly",
    "Divisor",
    "ManifoldModel",
    "TangentSummand",
    "DivisorRestriction",
    "LocusBlock",
    "FixedLocusModel",
    "OrbifoldDatum",
    "integrate",
    "integrate_series",
    "power_sums",
    "elementary_from_power_sums",
    "sum_over_roots",
    "class_to_series",
    "product_model",
    "blowup_surface_point_model",
    "point_model",
    "projective_space",
    "k3_model",
    "p1xp1_model",
    "trivial_datum",
]


class GeometryError(ValueError):
    pass


class KawamataError(GeometryError):
    """A divisor coefficient breaks the klt condition (delta + 1 must be > 0)."""


class MissingIntersectionError(GeometryError):
    pass


Gens = tuple[tuple[str, int], ...]


# ---------------------------------------------------------------------------
# graded polynomials


@dataclass(frozen=True)
class ClassPoly:
    """A polynomial in graded generators with rational coefficients."""

    gens: Gens
    terms: tuple[tuple[tuple[int, ...], Fraction], ...] = ()

    @classmethod
    def from_dict(cls, gens: Gens, d: dict) -> "ClassPoly":
        items = sorted((tuple(m), Fraction(c)) for m, c in d.items() if c)
        return cls(tuple(gens), tuple(items))

    @classmethod
    def constant(cls, gens: Gens, c=1) -> "ClassPoly":
        return cls.from_dict(gens, {(0,) * len(gens): c})

    @classmethod
    def generator(cls, gens: Gens, name: str) -> "ClassPoly":
        names = [n for n, _ in gens]
        if name not in names:
            raise GeometryError(f"unknown generator {name!r}")
        m = [0] * len(gens)
        m[names.index(name)] = 1
        return cls.from_dict(gens, {tuple(m): 1})

    @classmethod
    def parse(cls, gens: Gens, text: str) -> "ClassPoly":
        names = [n for n, _ in gens]
        syms = sympy.symbols(names) if names else ()
        if len(names) == 1:
            syms = (syms,) if not isinstance(syms, (tuple, list)) else syms
        local = dict(zip(names, syms))
        try:
            expr = sympy.sympify(text.replace("^", "**"), locals=local)
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise GeometryError(f"cannot parse class {text!r}: {exc}") from None
        unknown = {str(s) for s in expr.free_symbols} - set(names)
        if unknown:
            raise GeometryError(f"class {text!r} uses undeclared generators {sorted(unknown)}")
        if not names:
            return cls.constant(gens, Fraction(str(sympy.nsimplify(expr))))
        poly = sympy.Poly(sympy.expand(expr), *syms)
        d = {}
        for mono, c in poly.terms():
            c = sympy.Rational(c)
            d[tuple(mono)] = Fraction(int(c.p), int(c.q))
        return cls.from_dict(gens, d)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.gens)

    def as_dict(self) -> dict:
        return dict(self.terms)

    def degree_of(self, mono) -> int:
        return sum(e * d for e, (_, d) in zip(mono, self.gens))

    def part(self, k: int) -> "ClassPoly":
        return ClassPoly(self.gens, tuple((m, c) for m, c in self.terms if self.degree_of(m) == k))

    def truncate(self, cap: int) -> "ClassPoly":
        return ClassPoly(self.gens, tuple((m, c) for m, c in self.terms if self.degree_of(m) <= cap))

    def constant_term(self) -> Fraction:
        return self.as_dict().get((0,) * len(self.gens), Fraction(0))

    def _same(self, other):
        if isinstance(other, ClassPoly):
            if other.gens != self.gens:
                raise GeometryError(f"generator mismatch {self.names} vs {other.names}")
            return other
        return ClassPoly.constant(self.gens, Fraction(other))

    def __add__(self, other):
        other = self._same(other)
        d = self.as_dict()
        for m, c in other.terms:
            d[m] = d.get(m, 0) + c
        return ClassPoly.from_dict(self.gens, d)

    __radd__ = __add__

    def __neg__(self):
        return ClassPoly(self.gens, tuple((m, -c) for m, c in self.terms))

    def __sub__(self, other):
        return self + (-self._same(other))

    def __rsub__(self, other):
        return self._same(other) - self

    def mul(self, other, cap: int | None = None) -> "ClassPoly":
        other = self._same(other)
        d: dict = {}
        for (m1, c1), (m2, c2) in itertools.product(self.terms, other.terms):
            m = tuple(a + b for a, b in zip(m1, m2))
            if cap is not None and self.degree_of(m) > cap:
                continue
            d[m] = d.get(m, 0) + c1 * c2
        return ClassPoly.from_dict(self.gens, d)

    def __mul__(self, other):
        return self.mul(other)

    __rmul__ = __mul__

    def pow(self, k: int, cap: int | None = None) -> "ClassPoly":
        out = ClassPoly.constant(self.gens)
        for _ in range(k):
            out = out.mul(self, cap)
        return out

    def rename(self, gens: Gens) -> "ClassPoly":
        """Same exponents read against a renamed generator list."""
        return ClassPoly(tuple(gens), self.terms)

    def embed(self, gens: Gens) -> "ClassPoly":
        """Re-express in a larger generator list containing these names."""
        names = [n for n, _ in gens]
        idx = [names.index(n) for n in self.names]
        d = {}
        for m, c in self.terms:
            big = [0] * len(gens)
            for i, e in zip(idx, m):
                big[i] = e
            d[tuple(big)] = c
        return ClassPoly.from_dict(gens, d)

    def is_zero(self) -> bool:
        return not self.terms

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for m, c in sorted(self.terms, key=lambda t: (self.degree_of(t[0]), [-e for e in t[0]])):
            mono = "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(self.names, m) if e)
            if not mono:
                parts.append(str(c))
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append(f"-{mono}")
            else:
                parts.append(f"{c}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")

    def __str__(self):
        return self.to_text()


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class Divisor:
    name: str
    cls: ClassPoly
    delta: Fraction


def check_klt(name: str, delta) -> Fraction:
    delta = Fraction(delta)
    if delta + 1 <= 0:
        raise KawamataError(f"divisor {name!r}: coefficient delta={delta} violates delta + 1 > 0")
    return delta


@dataclass(frozen=True)
class ManifoldModel:
    name: str
    dim: int
    gens: Gens
    intersections: tuple[tuple[tuple[int, ...], Fraction], ...]
    chern: ClassPoly
    divisors: tuple[Divisor, ...] = ()
    euler: int | None = None
    c1_zero: bool = False

    def __post_init__(self):
        if self.dim < 0:
            raise GeometryError("dimension must be non-negative")
        if self.chern.gens != self.gens:
            raise GeometryError("chern class uses foreign generators")
        if self.chern.constant_term() != 1:
            raise GeometryError(f"{self.name}: total Chern class must have constant term 1")
        for m, _ in self.intersections:
            if len(m) != len(self.gens) or self.chern.degree_of(m) != self.dim:
                raise GeometryError(f"{self.name}: intersection monomial {m} is not of top degree")
        for d in self.divisors:
            check_klt(d.name, d.delta)
            if d.cls.gens != self.gens:
                raise GeometryError(f"divisor {d.name!r} uses foreign generators")

    @classmethod
    def build(cls, name, dim, gens, intersections: dict, chern, divisors=(), euler=None, c1_zero=False):
        gens = tuple((str(n), int(d)) for n, d in gens)
        if isinstance(chern, str):
            chern = ClassPoly.parse(gens, chern)
        inter = tuple(sorted((tuple(m), Fraction(v)) for m, v in intersections.items()))
        divs = []
        for d in divisors:
            if not isinstance(d, Divisor):
                dname, dcls, delta = d
                if isinstance(dcls, str):
                    dcls = ClassPoly.parse(gens, dcls)
                d = Divisor(dname, dcls, Fraction(delta))
            divs.append(d)
        return cls(name, int(dim), gens, inter, chern, tuple(divs), euler, c1_zero)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.gens)

    def intersection(self, mono, strict: bool = False) -> Fraction:
        d = dict(self.intersections)
        mono = tuple(mono)
        if mono in d:
            return d[mono]
        if strict:
            raise MissingIntersectionError(f"{self.name}: no intersection number declared for {self.monomial_text(mono)}")
        return Fraction(0)

    def monomial_text(self, mono) -> str:
        return "*".join(n if e == 1 else f"{n}^{e}" for n, e in zip(self.names, mono) if e) or "1"

    def top_monomials(self) -> list[tuple[int, ...]]:
        ranges = [range(self.dim // d + 1) for _, d in self.gens]
        out = [m for m in itertools.product(*ranges) if self.chern.degree_of(m) == self.dim]
        return sorted(out)

    def cls(self, text: str) -> ClassPoly:
        return ClassPoly.parse(self.gens, text)

    def chern_number(self, k: int | None = None) -> Fraction:
        """``int c_n`` by default, the Euler number."""
        return integrate(self, self.chern.part(self.dim if k is None else k))

    def with_divisors(self, divisors) -> "ManifoldModel":
        return replace(self, divisors=tuple(divisors))


def integrate(model: ManifoldModel, poly: ClassPoly, strict: bool = False) -> Fraction:
    """Apply the intersection pairing to the top-degree part of ``poly``."""
    if poly.gens != model.gens:
        poly = poly.embed(model.gens)
    total = Fraction(0)
    for m, c in poly.terms:
        if poly.degree_of(m) == model.dim:
            total += c * model.intersection(m, strict)
    return total


def integrate_series(model: ManifoldModel, s: Series, strict: bool = False) -> Series:
    """Integrate a series whose nilpotent generators are the model's generators."""
    tr = s.trunc
    if tr.names != model.names:
        raise GeometryError(f"series generators {tr.names} differ from {model.names}")
    out: dict = {}
    for (qn, yn, p, nil), c in s.terms.items():
        if tr.nil_degree(nil) != model.dim:
            continue
        v = model.intersection(nil, strict)
        if v:
            key = (qn, yn, p, ())
            out[key] = out.get(key, 0) + c * _q(v)
    base = tr.with_(gens=(), nmax=0)
    return Series(base, out, qhi=s.qhi, thi=s.thi, tlo=s.tlo)


def _q(v: Fraction):
    return to_mpq(v)


# ---------------------------------------------------------------------------
# Chern roots


def power_sums(chern: ClassPoly, n: int) -> list[ClassPoly]:
    """``[p_1, ..., p_n]`` with ``p_k = sum_i x_i^k`` via Newton's identities."""
    if chern.constant_term() != 1:
        raise GeometryError("total Chern class must have constant term 1")
    e = [chern.part(k) for k in range(n + 1)]
    p: list[ClassPoly] = []
    for k in range(1, n + 1):
        acc = e[k] * ((-1) ** (k - 1) * k)
        for i in range(1, k):
            acc = acc + e[i].mul(p[k - i - 1], n) * ((-1) ** (i - 1))
        p.append(acc.truncate(n))
    return p


def elementary_from_power_sums(p: list[ClassPoly], n: int) -> ClassPoly:
    """Inverse of :func:`power_sums`: the total class ``1 + e_1 + ... + e_n``."""
    gens = p[0].gens
    e = [ClassPoly.constant(gens)]
    for k in range(1, n + 1):
        acc = ClassPoly.constant(gens, 0)
        for i in range(1, k + 1):
            if i <= len(p):
                acc = acc + e[k - i].mul(p[i - 1], n) * ((-1) ** (i - 1))
        e.append(acc * Fraction(1, k))
    out = ClassPoly.constant(gens, 0)
    for c in e:
        out = out + c
    return out.truncate(n)


def class_to_series(poly: ClassPoly, trunc: Truncation, coeff=None) -> Series:
    """Embed a class (times an optional coefficient series) into a window whose
    nilpotent generators are the class's generators."""
    if trunc.names != poly.names:
        poly = poly.embed(trunc.gens)
    if coeff is None:
        return Series(trunc, {(0, 0, 0, m): _q(c) for m, c in poly.terms})
    out = Series.zero(trunc)
    base = coeff.with_generators(trunc) if not coeff.trunc.gens else coeff
    for m, c in poly.terms:
        out = out + base * Series(trunc, {(0, 0, 0, m): _q(c)})
    return out


def sum_over_roots(h: Series, chern: ClassPoly, n: int, trunc: Truncation | None = None) -> Series:
    """``sum_i h(x_i)`` over the Chern roots, for ``h`` in one nilpotent slot.

    The result lives in ``trunc`` (default: ``h``'s window with the class
    generators in place of the slot).
    """
    htr = h.trunc
    if len(htr.gens) != 1:
        raise GeometryError("h must have exactly one nilpotent slot")
    if any(k[3] == (0,) for k in h.terms):
        raise GeometryError("h must vanish at x = 0")
    if trunc is None:
        trunc = htr.with_(gens=chern.gens, nmax=n)
    parts = h.nil_parts()
    ps = power_sums(chern, n)
    out = Series.zero(trunc)
    for (k,), coeff in sorted(parts.items()):
        if k == 0 or k > n:
            continue
        coeff = Series(trunc.with_(gens=(), nmax=0), coeff.terms, qhi=coeff.qhi, thi=coeff.thi, tlo=coeff.tlo, _clean=True)
        out = out + class_to_series(ps[k - 1], trunc, coeff)
    return out


# ---------------------------------------------------------------------------
# constructions


def _fresh(name: str, taken: set[str]) -> str:
    if name not in taken:
        return name
    i = 2
    while f"{name}{i}" in taken:
        i += 1
    return f"{name}{i}"


def product_model(a: ManifoldModel, b: ManifoldModel, name: str | None = None) -> ManifoldModel:
    taken = set(a.names)
    bnames = []
    for n, _ in b.gens:
        nn = _fresh(n, taken)
        taken.add(nn)
        bnames.append(nn)
    gens = a.gens + tuple((nn, d) for nn, (_, d) in zip(bnames, b.gens))
    na = len(a.gens)

    def lift_a(p: ClassPoly) -> ClassPoly:
        return ClassPoly(gens, tuple((m + (0,) * len(b.gens), c) for m, c in p.terms))

    def lift_b(p: ClassPoly) -> ClassPoly:
        return ClassPoly(gens, tuple(((0,) * na + m, c) for m, c in p.terms))

    inter = {}
    for ma, va in a.intersections:
        for mb, vb in b.intersections:
            inter[ma + mb] = va * vb
    chern = lift_a(a.chern).mul(lift_b(b.chern), a.dim + b.dim)
    divs = [Divisor(d.name, lift_a(d.cls), d.delta) for d in a.divisors]
    taken_d = {d.name for d in divs}
    for d in b.divisors:
        dn = _fresh(d.name, taken_d)
        taken_d.add(dn)
        divs.append(Divisor(dn, lift_b(d.cls), d.delta))
    euler = a.euler * b.euler if a.euler is not None and b.euler is not None else None
    return ManifoldModel(name or f"{a.name}x{b.name}", a.dim + b.dim, gens,
                         tuple(sorted(inter.items())), chern, tuple(divs), euler,
                         a.c1_zero and b.c1_zero)


def blowup_surface_point_model(base: ManifoldModel, exceptional: str = "E", delta=1) -> ManifoldModel:
    """Blow up a point of a surface away from its divisors.

    Adds a degree-one generator ``e`` with ``e^2 = -pt`` orthogonal to the old
    classes; ``c_1 -> c_1 - e`` and ``c_2 -> c_2 + pt = c_2 - e^2``.  The
    exceptional curve is registered with coefficient ``delta`` (its
    discrepancy, 1 for a point on a surface).
    """
    if base.dim != 2:
        raise GeometryError("blowup_surface_point_model needs a surface")
    en = _fresh("e", set(base.names))
    gens = base.gens + ((en, 1),)
    lift = lambda p: ClassPoly(gens, tuple((m + (0,), c) for m, c in p.terms))
    e = ClassPoly.generator(gens, en)
    inter = {m + (0,): v for m, v in base.intersections}
    e2 = tuple([0] * len(base.gens) + [2])
    inter[e2] = Fraction(-1)
    chern = lift(base.chern) - e - e.mul(e)
    divs = [Divisor(d.name, lift(d.cls), d.delta) for d in base.divisors]
    dn = _fresh(exceptional, {d.name for d in divs})
    divs.append(Divisor(dn, e, check_klt(dn, delta)))
    euler = base.euler + 1 if base.euler is not None else None
    return ManifoldModel(f"Bl({base.name})", 2, gens, tuple(sorted(inter.items())), chern,
                         tuple(divs), euler, False)


def point_model() -> ManifoldModel:
    return ManifoldModel.build("pt", 0, (), {(): 1}, "1", euler=1, c1_zero=True)


def projective_space(n: int, gen: str = "h") -> ManifoldModel:
    gens = ((gen, 1),)
    h = ClassPoly.generator(gens, gen)
    chern = (1 + h).pow(n + 1, n)
    return ManifoldModel(f"P{n}", n, gens, (((n,), Fraction(1)),), chern, (), n + 1, False)


def k3_model() -> ManifoldModel:
    """Abstract K3: only ``c_1`` (with ``c_1^2 = 0``) and ``c_2 = 24``."""
    return ManifoldModel.build("K3", 2, (("c1", 1), ("c2", 2)), {(2, 0): 0, (0, 1): 24},
                               "1 + c1 + c2", euler=24, c1_zero=True)


def p1xp1_model() -> ManifoldModel:
    m = product_model(projective_space(1, "h1"), projective_space(1, "h2"), "P1xP1")
    return m


# ---------------------------------------------------------------------------
# fixed-locus data


@dataclass(frozen=True)
class TangentSummand:
    lam: tuple[Fraction, Fraction]
    rank: int
    chern: ClassPoly

    def __post_init__(self):
        lam = (Fraction(self.lam[0]), Fraction(self.lam[1]))
        object.__setattr__(self, "lam", lam)
        if not all(0 <= v < 1 for v in lam):
            raise GeometryError(f"character ({lam[0]}, {lam[1]}) outside [0,1)")
        if self.rank < 0:
            raise GeometryError("rank must be non-negative")
        if self.chern.constant_term() != 1:
            raise GeometryError("summand Chern class must have constant term 1")

    @property
    def untwisted(self) -> bool:
        return self.lam == (0, 0)


@dataclass(frozen=True)
class DivisorRestriction:
    """An ambient divisor restricted to a locus: ``eps`` is its character
    when the locus lies inside it, ``(0, 0)`` when transverse."""

    name: str
    cls: ClassPoly
    delta: Fraction
    eps: tuple[Fraction, Fraction] = (Fraction(0), Fraction(0))
    contains: bool = False

    def __post_init__(self):
        eps = (Fraction(self.eps[0]), Fraction(self.eps[1]))
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "delta", check_klt(self.name, self.delta))
        if not all(0 <= v < 1 for v in eps):
            raise GeometryError(f"divisor character ({eps[0]}, {eps[1]}) outside [0,1)")
        if not self.contains and eps != (0, 0):
            raise GeometryError(f"transverse divisor {self.name!r} must have trivial character")


@dataclass(frozen=True)
class LocusBlock:
    """One factor of a fixed locus: a manifold, its normal/tangent summands
    and the divisors meeting it."""

    manifold: ManifoldModel
    summands: tuple[TangentSummand, ...]
    divisors: tuple[DivisorRestriction, ...] = ()

    def __post_init__(self):
        untw = [s for s in self.summands if s.untwisted]
        if len(untw) > 1:
            raise GeometryError("at most one untwisted summand per block")
        if self.manifold.dim > 0 or untw:
            if not untw or untw[0].rank != self.manifold.dim:
                raise GeometryError(f"block {self.manifold.name}: untwisted summand must have rank = dim")
            if untw[0].chern != self.manifold.chern:
                raise GeometryError(f"block {self.manifold.name}: untwisted summand must carry the tangent class")
        for s in self.summands:
            if s.chern.gens != self.manifold.gens:
                raise GeometryError("summand class uses foreign generators")
        for d in self.divisors:
            if d.cls.gens != self.manifold.gens:
                raise GeometryError(f"divisor {d.name!r} uses foreign generators")

    @property
    def rank(self) -> int:
        return sum(s.rank for s in self.summands)


@dataclass(frozen=True)
class FixedLocusModel:
    label: str
    blocks: tuple[LocusBlock, ...]
    multiplicity: int = 1

    def __post_init__(self):
        if self.multiplicity < 1:
            raise GeometryError(f"contribution {self.label!r}: multiplicity must be positive")

    @classmethod
    def single(cls, label: str, manifold: ManifoldModel, summands, divisors=(), multiplicity: int = 1):
        return cls(label, (LocusBlock(manifold, tuple(summands), tuple(divisors)),), multiplicity)

    @property
    def dim(self) -> int:
        return sum(b.manifold.dim for b in self.blocks)

    @property
    def rank(self) -> int:
        return sum(b.rank for b in self.blocks)

    @property
    def untwisted(self) -> bool:
        return all(s.untwisted for b in self.blocks for s in b.summands) and all(
            d.eps == (0, 0) for b in self.blocks for d in b.divisors)


@dataclass(frozen=True)
class OrbifoldDatum:
    name: str
    dim: int
    group_order: int
    contributions: tuple[FixedLocusModel, ...]

    def __post_init__(self):
        if self.group_order < 1:
            raise GeometryError("group order must be positive")
        labels = [c.label for c in self.contributions]
        if len(set(labels)) != len(labels):
            raise GeometryError("contribution labels must be unique")
        for c in self.contributions:
            if c.rank != self.dim:
                raise GeometryError(f"contribution {c.label!r}: summand ranks add to {c.rank}, expected {self.dim}")
        if not any(c.untwisted and c.dim == self.dim for c in self.contributions):
            raise GeometryError("missing the identity contribution on the whole space")


def trivial_datum(model: ManifoldModel) -> OrbifoldDatum:
    """The triple ``(X, E, {1})``."""
    summ = (TangentSummand((0, 0), model.dim, model.chern),) if model.dim else ()
    divs = tuple(DivisorRestriction(d.name, d.cls, d.delta) for d in model.divisors)
    block = LocusBlock(model, summ, divs)
    return OrbifoldDatum(model.name, model.dim, 1, (FixedLocusModel("e,e", (block,)),))

"""Lattices, simplicial fans and the toroidal push/pull maps on piecewise functions.

A fan lives in ``N = Z^r``; its maximal cones are generated by bases of a
finite-index sublattice ``N^ ⊆ N``.  The coordinate functions ``x_1..x_r`` on
``N_C`` are shared by every cone, so a piecewise polynomial is stored as one
ambient polynomial per maximal cone.  For a cone with generator matrix ``B``
(generators as columns) the dual forms ``x_{i;C}`` are the rows of ``B^-1``.
"""

from __future__ import annotations

import cmath
import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import sympy as sp
from sympy.matrices.normalforms import invariant_factors, smith_normal_decomp

from .geom import ClassPoly, GeometryError, ManifoldModel
from .theta import TWO_PI_I, ThetaSingularityError, numeric_theta

__all__ = [
    "ToroidalError",
    "FanError",
    "PreconditionError",
    "PoleError",
    "UndeclaredStratumError",
    "LatticePair",
    "SimplicialFan",
    "SncComplex",
    "PiecewiseFunction",
    "Pushforward",
    "quotient_group_elements",
    "fractional_coordinates",
    "monomial_of_point",
    "point_of_monomial",
    "rho_lite",
    "nu_pullback",
    "nu_pushforward",
    "covering_degrees",
    "wall_residues",
    "check_pole_cancellation",
    "verify_projection_formula",
    "verify_degree_count",
    "verify_firstorth",
    "verify_toricsum",
    "firstorth_symbolic",
    "verify_mainthetalemma",
    "mainthetalemma_sides",
    "firstorth_from_theta",
    "index_three_fan",
    "orthant_fan",
    "resolve_orthant",
    "random_subdivision",
    "trial_rng",
]

Vec = tuple[int, ...]


class ToroidalError(ValueError):
    pass


class FanError(ToroidalError):
    """Fan data violate a structural invariant."""


class PreconditionError(ToroidalError):
    """A verifier was handed data outside its hypotheses."""


class PoleError(ToroidalError):
    def __init__(self, message: str, wall=None):
        super().__init__(message)
        self.wall = wall


class UndeclaredStratumError(ToroidalError, GeometryError):
    pass


def trial_rng(seed: int, trial: int) -> random.Random:
    """Independent generator for one trial, fixed by the master seed."""
    return random.Random(f"{seed}:{trial}")


def _frac_matrix(m: sp.Matrix) -> list[list[Fraction]]:
    return [[Fraction(int(sp.fraction(v)[0]), int(sp.fraction(v)[1])) for v in m.row(i)] for i in range(m.rows)]


def _cols(vectors: Sequence[Sequence[int]]) -> sp.Matrix:
    return sp.Matrix(vectors).T


# ---------------------------------------------------------------------------
# lattices


class LatticePair:
    """``N^ ⊆ N = Z^r`` given by generators of ``N^`` (the columns of ``M``)."""

    def __init__(self, generators: Sequence[Sequence[int]]):
        gens = tuple(tuple(int(v) for v in g) for g in generators)
        if not gens:
            raise FanError("a sublattice needs at least one generator")
        r = len(gens[0])
        if len(gens) != r or any(len(g) != r for g in gens):
            raise FanError(f"sublattice needs {r} generators of length {r}")
        self.generators = gens
        self.rank = r
        self.matrix = _cols(gens)
        det = int(self.matrix.det())
        if det == 0:
            raise FanError("sublattice generators are linearly dependent")
        S, U, _ = smith_normal_decomp(self.matrix, domain=sp.ZZ)
        self._diag = [abs(int(S[i, i])) for i in range(r)]
        if math.prod(self._diag) != abs(det):
            raise FanError("Smith normal form disagrees with the determinant")
        self.index = abs(det)
        self._U_inv = U.inv()
        self._M_inv = self.matrix.inv()

    @classmethod
    def identity(cls, r: int) -> "LatticePair":
        return cls([[int(i == j) for j in range(r)] for i in range(r)])

    def contains(self, v: Sequence[int]) -> bool:
        c = self._M_inv * sp.Matrix(v)
        return all(x.is_integer for x in c)

    def coset_representatives(self) -> list[Vec]:
        reps = []
        for k in itertools.product(*(range(d) for d in self._diag)):
            v = self._U_inv * sp.Matrix(k)
            reps.append(tuple(int(x) for x in v))
        return reps

    def to_dict(self) -> dict:
        return {"rank": self.rank, "sublattice": [list(g) for g in self.generators]}

    def __eq__(self, other):
        return isinstance(other, LatticePair) and self.generators == other.generators

    def __hash__(self):
        return hash(self.generators)

    def __repr__(self):
        return f"LatticePair({[list(g) for g in self.generators]})"


def quotient_group_elements(lp: LatticePair) -> list[Vec]:
    """Representatives of ``N / N^``, exactly ``|det M|`` of them."""
    return lp.coset_representatives()


# ---------------------------------------------------------------------------
# fans


class SimplicialFan:
    """Maximal cones of a simplicial fan, each generated by a basis of ``N^``.

    ``free`` lists the coordinates along which the support is a full line;
    the support is ``{x : x_i >= 0 for i not in free}``.
    """

    def __init__(self, cones: Iterable[Sequence[Sequence[int]]], lattice: LatticePair | None = None,
                 free: Iterable[int] = (), name: str = "", *, coverage_trials: int = 24):
        self.cones: tuple[tuple[Vec, ...], ...] = tuple(
            tuple(tuple(int(v) for v in g) for g in c) for c in cones)
        if not self.cones:
            raise FanError("a fan needs at least one maximal cone")
        r = len(self.cones[0][0])
        self.rank = r
        self.lattice = lattice or LatticePair.identity(r)
        if self.lattice.rank != r:
            raise FanError(f"lattice rank {self.lattice.rank} differs from fan rank {r}")
        self.free = tuple(sorted(set(int(i) for i in free)))
        if any(not 0 <= i < r for i in self.free):
            raise FanError(f"free coordinates must lie in 0..{r - 1}")
        self.name = name
        self.symbols = sp.symbols(f"x1:{r + 1}")
        self._inv: list[list[list[Fraction]]] = []
        for k, c in enumerate(self.cones):
            if len(c) != r or any(len(g) != r for g in c):
                raise FanError(f"cone {k} needs {r} generators of length {r}")
            B = _cols(c)
            det = int(B.det())
            for g in c:
                if not self.lattice.contains(g):
                    raise FanError(f"cone {k}: generator {list(g)} is not in the sublattice")
                if any(g[i] < 0 for i in range(r) if i not in self.free):
                    raise FanError(f"cone {k}: generator {list(g)} leaves the support")
            if abs(det) != self.lattice.index:
                raise FanError(f"cone {k} is not generated by a basis of the sublattice "
                               f"(|det| = {abs(det)}, index {self.lattice.index})")
            self._inv.append(_frac_matrix(B.inv()))
        if len(set(frozenset(c) for c in self.cones)) != len(self.cones):
            raise FanError("repeated maximal cone")
        self.check_coverage(coverage_trials)

    # -- geometry ---------------------------------------------------------

    def forms(self, k: int, x: Sequence) -> list:
        """Values of the dual forms ``x_{i;C}`` of cone ``k`` at ``x``."""
        return [sum(row[j] * x[j] for j in range(self.rank)) for row in self._inv[k]]

    def form_exprs(self, k: int) -> list[sp.Expr]:
        X = self.symbols
        return [sum(sp.Rational(row[j].numerator, row[j].denominator) * X[j] for j in range(self.rank))
                for row in self._inv[k]]

    def coordinates(self, k: int, v: Sequence) -> list[Fraction]:
        return self.forms(k, [Fraction(t) for t in v])

    def cones_containing(self, v: Sequence) -> list[int]:
        return [k for k in range(len(self.cones)) if all(c >= 0 for c in self.coordinates(k, v))]

    def in_support(self, v: Sequence) -> bool:
        return all(v[i] >= 0 for i in range(self.rank) if i not in self.free)

    def random_point(self, rng: random.Random) -> list[Fraction]:
        pt = []
        for i in range(self.rank):
            t = Fraction(rng.randint(1, 997), rng.randint(1, 61))
            if i in self.free and rng.random() < 0.5:
                t = -t
            pt.append(t)
        return pt

    def check_coverage(self, trials: int, seed: int = 0) -> None:
        """Generic points of the support lie in exactly one maximal cone."""
        for t in range(trials):
            rng = trial_rng(seed, t)
            pt = self.random_point(rng)
            hits = [k for k in range(len(self.cones))
                    if all(c > 0 for c in self.forms(k, pt))]
            if len(hits) != 1:
                what = "is not covered" if not hits else f"lies in cones {hits}"
                raise FanError(f"point {[str(p) for p in pt]} of the support {what}")

    def all_cones(self) -> set[frozenset[Vec]]:
        out: set[frozenset[Vec]] = set()
        for c in self.cones:
            for k in range(len(c) + 1):
                out.update(frozenset(s) for s in itertools.combinations(c, k))
        return out

    def walls(self) -> list[tuple[frozenset[Vec], int, int]]:
        """Codimension-one cones shared by two maximal cones."""
        out = []
        for a, b in itertools.combinations(range(len(self.cones)), 2):
            shared = frozenset(self.cones[a]) & frozenset(self.cones[b])
            if len(shared) == self.rank - 1:
                out.append((shared, a, b))
        return out

    def face_substitution(self, a: int, b: int) -> dict:
        shared = sorted(frozenset(self.cones[a]) & frozenset(self.cones[b]))
        s = sp.symbols(f"s1:{len(shared) + 1}") if shared else ()
        return {self.symbols[i]: sum((s[m] * g[i] for m, g in enumerate(shared)), sp.Integer(0))
                for i in range(self.rank)}

    def max_keys(self) -> list[int]:
        return list(range(len(self.cones)))

    def with_lattice(self, lattice: LatticePair) -> "SimplicialFan":
        return SimplicialFan(self.cones, lattice, self.free, self.name)

    def to_dict(self) -> dict:
        d = {"lattice": self.lattice.to_dict(), "cone": [{"gens": [list(g) for g in c]} for c in self.cones]}
        if self.free:
            d["support"] = {"free": list(self.free)}
        if self.name:
            d["name"] = self.name
        return d

    def __eq__(self, other):
        return (isinstance(other, SimplicialFan) and self.cones == other.cones
                and self.lattice == other.lattice and self.free == other.free)

    def __repr__(self):
        return f"SimplicialFan({self.name or len(self.cones)}, index={self.lattice.index})"


def fractional_coordinates(fan: SimplicialFan, k: int, v: Sequence[int]) -> list[Fraction]:
    """Fractional parts of the coordinates of ``v`` in the basis of cone ``k``."""
    return [c - math.floor(c) for c in fan.coordinates(k, v)]


def orthant_fan(r: int) -> SimplicialFan:
    return SimplicialFan([[[int(i == j) for j in range(r)] for i in range(r)]], name=f"orthant{r}")


def index_three_fan() -> SimplicialFan:
    """The first quadrant cut by rays (3,0),(2,1),(1,2),(0,3) in the index-3
    lattice spanned by (2,1) and (1,2)."""
    lp = LatticePair([[2, 1], [1, 2]])
    return SimplicialFan([[(3, 0), (2, 1)], [(2, 1), (1, 2)], [(1, 2), (0, 3)]], lp, name="index3")


# ---------------------------------------------------------------------------
# random unimodular subdivisions of the orthant


def _parallelepiped_points(cone: Sequence[Vec], lattice: LatticePair) -> list[Vec]:
    """Nonzero points of ``N^`` in the half-open parallelepiped of ``cone``."""
    K = lattice._M_inv * _cols(cone)  # cone generators in N^-coordinates
    S, U, _ = smith_normal_decomp(K, domain=sp.ZZ)
    diag = [abs(int(S[i, i])) for i in range(K.rows)]
    U_inv, K_inv = U.inv(), K.inv()
    B = _cols(cone)
    pts = []
    for c in itertools.product(*(range(d) for d in diag)):
        lam = K_inv * (U_inv * sp.Matrix(c))
        lam = sp.Matrix([t - sp.floor(t) for t in lam])
        if any(lam):
            p = B * lam
            pts.append(tuple(int(t) for t in p))
    return pts


def _primitive(p: Vec, lattice: LatticePair) -> Vec:
    g = math.gcd(*p)
    for m in sorted((d for d in range(2, g + 1) if g % d == 0), reverse=True):
        q = tuple(t // m for t in p)
        if lattice.contains(q):
            return q
    return p


def _stellar(cones: list[tuple[Vec, ...]], p: Vec) -> list[tuple[Vec, ...]]:
    out = []
    for c in cones:
        lam = sp.Matrix(_cols(c)).solve(sp.Matrix(p))
        if all(t >= 0 for t in lam):
            for i, t in enumerate(lam):
                if t > 0:
                    out.append(tuple(p if j == i else g for j, g in enumerate(c)))
        else:
            out.append(c)
    return out


def _axis_generators(lattice: LatticePair) -> list[Vec]:
    gens = []
    for i in range(lattice.rank):
        k = 1
        while not lattice.contains([k if j == i else 0 for j in range(lattice.rank)]):
            k += 1
        gens.append(tuple(k if j == i else 0 for j in range(lattice.rank)))
    return gens


def resolve_orthant(lattice: LatticePair, rng: random.Random | None = None) -> list[tuple[Vec, ...]]:
    """Subdivide the first orthant into cones generated by bases of ``lattice``
    by repeated stellar subdivision at parallelepiped points."""
    cones = [tuple(_axis_generators(lattice))]
    while True:
        bad = [c for c in cones if abs(int(_cols(c).det())) > lattice.index]
        if not bad:
            return cones
        c = bad[0] if rng is None else rng.choice(bad)
        pts = _parallelepiped_points(c, lattice)
        if rng is None:
            p = min(pts, key=lambda v: (sum(v), v))
        else:
            p = rng.choice(pts)
        cones = _stellar(cones, _primitive(p, lattice))


def random_subdivision(rank: int, rng: random.Random, max_index: int = 4, extra: int = 2) -> SimplicialFan:
    """A random subdivision of the orthant, unimodular in a random sublattice."""
    while True:
        rows = [[0] * rank for _ in range(rank)]
        for i in range(rank):
            rows[i][i] = rng.randint(1, max_index)
            for j in range(i + 1, rank):
                rows[i][j] = rng.randint(0, rows[i][i] - 1)
        gens = [[rows[i][j] for i in range(rank)] for j in range(rank)]
        lp = LatticePair(gens)
        if lp.index <= max_index * 2:
            break
    cones = resolve_orthant(lp, rng)
    for _ in range(extra):
        c = rng.choice(cones)
        face = rng.sample(c, rng.randint(2, rank)) if rank >= 2 else list(c)
        if rank < 2:
            break
        p = tuple(sum(g[i] for g in face) for i in range(rank))
        cones = _stellar(cones, p)
    return SimplicialFan(cones, lp, name=f"random{rank}")


# ---------------------------------------------------------------------------
# snc strata complexes


class SncComplex:
    """Cones of an snc divisor in one chart: the cone on ``{e_i : i in I}``
    for every declared stratum ``Z_I``."""

    def __init__(self, model: ManifoldModel, divisors: Sequence[ClassPoly | str],
                 strata: Mapping[Iterable[int], ClassPoly | str]):
        self.model = model
        self.divisors = tuple(model.cls(d) if isinstance(d, str) else d for d in divisors)
        self.rank = len(self.divisors)
        self.strata = {frozenset(k): (model.cls(v) if isinstance(v, str) else v) for k, v in strata.items()}
        for k in self.strata:
            if not k or any(not 0 <= i < self.rank for i in k):
                raise FanError(f"stratum {sorted(k)} does not name divisors 0..{self.rank - 1}")
        self.symbols = sp.symbols(f"x1:{self.rank + 1}")
        keys = sorted(self.strata, key=lambda k: (-len(k), sorted(k)))
        maximal = [k for k in keys if not any(k < j for j in keys)]
        singles = [frozenset([i]) for i in range(self.rank) if not any(i in k for k in keys)]
        self._max = maximal + singles

    def max_keys(self) -> list[frozenset[int]]:
        return list(self._max)

    def face_substitution(self, a: frozenset[int], b: frozenset[int]) -> dict:
        keep = a & b
        return {x: (x if i in keep else sp.Integer(0)) for i, x in enumerate(self.symbols)}

    def localize(self, key: frozenset[int], expr: sp.Expr) -> sp.Expr:
        return sp.expand(expr.subs({x: 0 for i, x in enumerate(self.symbols) if i not in key}))

    def stratum(self, I: frozenset[int]) -> ClassPoly:
        if not I:
            return ClassPoly.constant(self.model.gens, 1)
        if I not in self.strata:
            raise UndeclaredStratumError(f"stratum Z_{sorted(i + 1 for i in I)} is not declared")
        return self.strata[I]


# ---------------------------------------------------------------------------
# piecewise functions


class PiecewiseFunction:
    """One ambient polynomial per maximal cone, agreeing on shared faces."""

    def __init__(self, complex_, pieces: Mapping, *, check: bool = True):
        self.complex = complex_
        keys = complex_.max_keys()
        missing = [k for k in keys if k not in pieces]
        if missing:
            raise FanError(f"no piece given on cones {missing}")
        local = getattr(complex_, "localize", lambda k, e: sp.expand(e))
        self.pieces = {k: local(k, sp.sympify(pieces[k])) for k in keys}
        if check:
            self.check_compatible()

    @classmethod
    def constant(cls, complex_, value) -> "PiecewiseFunction":
        return cls(complex_, {k: sp.sympify(value) for k in complex_.max_keys()}, check=False)

    @classmethod
    def global_polynomial(cls, complex_, expr) -> "PiecewiseFunction":
        return cls(complex_, {k: expr for k in complex_.max_keys()}, check=False)

    def check_compatible(self) -> None:
        keys = list(self.pieces)
        for a, b in itertools.combinations(keys, 2):
            sub = self.complex.face_substitution(a, b)
            fa = sp.expand(self.pieces[a].subs(sub, simultaneous=True))
            fb = sp.expand(self.pieces[b].subs(sub, simultaneous=True))
            if sp.expand(fa - fb) != 0:
                raise FanError(f"pieces on cones {a} and {b} disagree on their common face")

    def _combine(self, other, op) -> "PiecewiseFunction":
        if isinstance(other, PiecewiseFunction):
            if other.complex is not self.complex:
                raise FanError("piecewise functions live on different complexes")
            return PiecewiseFunction(self.complex, {k: op(v, other.pieces[k]) for k, v in self.pieces.items()},
                                     check=False)
        c = sp.sympify(other)
        return PiecewiseFunction(self.complex, {k: op(v, c) for k, v in self.pieces.items()}, check=False)

    def __add__(self, other):
        return self._combine(other, lambda a, b: sp.expand(a + b))

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, lambda a, b: sp.expand(a - b))

    def __mul__(self, other):
        return self._combine(other, lambda a, b: sp.expand(a * b))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (isinstance(other, PiecewiseFunction) and other.complex is self.complex
                and all(sp.expand(v - other.pieces[k]) == 0 for k, v in self.pieces.items()))

    def in_cone_coordinates(self, k: int) -> sp.Expr:
        """The piece on fan cone ``k`` written in its dual forms ``y_i = x_{i;C}``."""
        fan = self.complex
        y = sp.symbols(f"y1:{fan.rank + 1}")
        B = _cols(fan.cones[k])
        sub = {fan.symbols[i]: sum(B[i, j] * y[j] for j in range(fan.rank)) for i in range(fan.rank)}
        return sp.expand(self.pieces[k].subs(sub, simultaneous=True))

    def __repr__(self):
        return f"PiecewiseFunction({self.pieces})"


def monomial_of_point(fan: SimplicialFan, v: Sequence[int]) -> PiecewiseFunction:
    """The element ``x^v`` of the partial semigroup ring: ``prod x_{i;C}^{a_i}``
    on cones containing ``v`` and zero elsewhere."""
    if not fan.lattice.contains(v):
        raise FanError(f"{list(v)} is not a point of the sublattice")
    if not fan.cones_containing(v):
        raise FanError(f"{list(v)} is outside the fan")
    pieces = {}
    for k in fan.max_keys():
        a = fan.coordinates(k, v)
        if all(t >= 0 for t in a):
            forms = fan.form_exprs(k)
            pieces[k] = sp.Mul(*(f ** int(t) for f, t in zip(forms, a)))
        else:
            pieces[k] = sp.Integer(0)
    return PiecewiseFunction(fan, pieces, check=False)


def point_of_monomial(pf: PiecewiseFunction) -> Vec:
    """Inverse of :func:`monomial_of_point`."""
    fan = pf.complex
    for k in fan.max_keys():
        expr = pf.in_cone_coordinates(k)
        if expr == 0:
            continue
        poly = sp.Poly(expr, *sp.symbols(f"y1:{fan.rank + 1}"))
        terms = poly.terms()
        if len(terms) != 1 or terms[0][1] != 1:
            raise FanError("function is not a single monomial")
        a = terms[0][0]
        return tuple(sum(a[j] * fan.cones[k][j][i] for j in range(fan.rank)) for i in range(fan.rank))
    raise FanError("the zero function has no point")


# ---------------------------------------------------------------------------
# rho, pullback, pushforward


def rho_lite(pf: PiecewiseFunction, model: ManifoldModel | None = None) -> ClassPoly:
    """``x^v -> Z_I prod D_i^(k_i - 1)`` for ``v = sum k_i e_i`` with support ``I``,
    extended linearly.  Transverse, connected strata only."""
    cx = pf.complex
    if not isinstance(cx, SncComplex):
        raise PreconditionError("rho needs a function on an snc strata complex")
    model = model or cx.model
    seen: dict[tuple[int, ...], sp.Expr] = {}
    for key, expr in pf.pieces.items():
        if expr == 0:
            continue
        for exps, c in sp.Poly(expr, *cx.symbols).terms():
            seen.setdefault(exps, c)
    gens = model.gens
    total = ClassPoly.constant(gens, 0)
    for exps, c in sorted(seen.items()):
        I = frozenset(i for i, k in enumerate(exps) if k)
        term = cx.stratum(I)
        for i in I:
            term = term.mul(cx.divisors[i].pow(exps[i] - 1, model.dim), model.dim)
        coeff = Fraction(int(sp.fraction(c)[0]), int(sp.fraction(c)[1]))
        total = total + term * ClassPoly.constant(gens, coeff)
    return total.truncate(model.dim)


def nu_pullback(f, fan: SimplicialFan) -> PiecewiseFunction:
    """Pull a polynomial on the target orthant back along ``N^ -> N``; the
    ambient coordinates are shared, so every cone receives ``f`` itself."""
    expr = sp.sympify(f)
    if isinstance(f, str):
        expr = sp.sympify(f, locals={str(x): x for x in fan.symbols})
    return PiecewiseFunction.global_polynomial(fan, expr)


def covering_degrees(fan: SimplicialFan) -> dict[frozenset[int], int]:
    """``d_I = |N : N^ + Z^I|`` for every coordinate face ``I`` of the orthant."""
    r = fan.rank
    out = {}
    for k in range(r + 1):
        for I in itertools.combinations(range(r), k):
            cols = [list(g) for g in fan.lattice.generators] + [[int(i == j) for j in range(r)] for i in I]
            facs = invariant_factors(sp.Matrix(cols).T, domain=sp.ZZ)
            out[frozenset(I)] = math.prod(abs(int(t)) for t in facs if t != 0)
    return out


def _support(vectors: Iterable[Sequence[int]], r: int) -> frozenset[int]:
    return frozenset(i for i in range(r) if any(v[i] for v in vectors))


def _face_cones(fan: SimplicialFan, I: frozenset[int]) -> list[tuple[Vec, ...]]:
    """Cones of dimension ``|I|`` whose relative interior sits in that of face ``I``."""
    out = []
    for cone in fan.all_cones():
        if len(cone) == len(I) and _support(cone, fan.rank) == I:
            out.append(tuple(sorted(cone)))
    return sorted(out)


def _sub_index(cone: Sequence[Vec], I: Sequence[int]) -> int:
    if not cone:
        return 1
    return abs(int(sp.Matrix([[g[i] for i in I] for g in cone]).det()))


def _restricted_piece(f: PiecewiseFunction, cone: Sequence[Vec], I: frozenset[int]) -> sp.Expr:
    fan = f.complex
    host = next(k for k in fan.max_keys() if set(cone) <= set(fan.cones[k]))
    return sp.expand(f.pieces[host].subs({fan.symbols[j]: 0 for j in range(fan.rank) if j not in I},
                                         simultaneous=True))


def _face_terms(f: PiecewiseFunction, I: frozenset[int], d: int) -> list[tuple[tuple[Vec, ...], sp.Expr]]:
    fan = f.complex
    idx = sorted(I)
    X = fan.symbols
    terms = []
    for cone in _face_cones(fan, I):
        if not cone:
            terms.append((cone, d * _restricted_piece(f, cone, I)))
            continue
        Binv = sp.Matrix([[g[i] for i in idx] for g in cone]).T.inv()
        forms = [sum(Binv[a, b] * X[idx[b]] for b in range(len(idx))) for a in range(len(idx))]
        num = sp.Mul(*(X[i] for i in idx))
        terms.append((cone, d * _restricted_piece(f, cone, I) * num / sp.Mul(*forms)))
    return terms


@dataclass
class Pushforward:
    """Pushforward data: one polynomial per coordinate face of the target."""

    faces: dict[frozenset[int], sp.Expr]
    rank: int

    @property
    def top(self) -> sp.Expr:
        return self.faces[frozenset(range(self.rank))]

    def restrict_compatible(self, symbols) -> bool:
        for I, expr in self.faces.items():
            for J, sub in self.faces.items():
                if J < I:
                    r = expr.subs({symbols[j]: 0 for j in I - J}, simultaneous=True)
                    if sp.expand(r - sub) != 0:
                        return False
        return True


def nu_pushforward(f: PiecewiseFunction, d_multiplicities: Mapping[frozenset[int], int] | int | None = None,
                   *, faces: Iterable[frozenset[int]] | None = None) -> Pushforward:
    """Push a piecewise polynomial on a subdivision down to the orthant.

    On each face ``I`` this sums ``d_I f_C prod x_i / prod x_{i;C}`` over the
    ``|I|``-dimensional cones inside that face.  A leftover pole raises
    :class:`PoleError` naming the wall it sits on.
    """
    fan: SimplicialFan = f.complex
    if not isinstance(fan, SimplicialFan) or fan.free:
        raise PreconditionError("pushforward needs a subdivision of the first orthant")
    r = fan.rank
    if d_multiplicities is None:
        d_map = covering_degrees(fan)
    elif isinstance(d_multiplicities, int):
        d_map = {I: d_multiplicities for I in covering_degrees(fan)}
    else:
        d_map = {frozenset(k): int(v) for k, v in d_multiplicities.items()}
    face_list = [frozenset(I) for I in faces] if faces is not None else [
        frozenset(I) for k in range(r + 1) for I in itertools.combinations(range(r), k)]
    out = {}
    for I in face_list:
        terms = _face_terms(f, I, d_map.get(I, 1))
        total = sp.cancel(sp.together(sum((t for _, t in terms), sp.Integer(0))))
        num, den = sp.fraction(total)
        if den.free_symbols:
            wall = _wall_of(fan, den)
            where = f"wall spanned by {', '.join(map(str, wall))}" if isinstance(wall, list) else wall
            face = ",".join(f"x{i + 1}" for i in sorted(I)) or "origin"
            raise PoleError(f"pushforward to face ({face}) keeps a pole along the {where}", wall=wall)
        out[I] = sp.expand(num / den)
    return Pushforward(out, r)


def _wall_of(fan: SimplicialFan, den: sp.Expr):
    X = fan.symbols
    for fac, _ in sp.factor_list(den)[1]:
        p = sp.Poly(fac, *X)
        if p.total_degree() != 1:
            continue
        normal = [p.coeff_monomial(x) for x in X]
        for shared, a, b in fan.walls():
            if all(sum(normal[i] * g[i] for i in range(fan.rank)) == 0 for g in shared):
                return sorted(shared)
        return f"hyperplane {fac} = 0"
    return str(den)


def wall_residues(f: PiecewiseFunction) -> list[tuple[list[Vec], sp.Expr, sp.Expr]]:
    """Residues of the two top-face terms across each interior wall."""
    fan: SimplicialFan = f.complex
    X = fan.symbols
    r = fan.rank
    out = []
    for shared, a, b in fan.walls():
        gens = sorted(shared)
        s = sp.symbols(f"s1:{len(gens) + 1}")
        point = {X[i]: sum(s[m] * g[i] for m, g in enumerate(gens)) for i in range(r)}
        res = []
        ell = None
        for k in (a, b):
            forms = fan.form_exprs(k)
            opp = next(i for i, g in enumerate(fan.cones[k]) if g not in shared)
            if ell is None:
                ell = forms[opp]
                scale = sp.Integer(1)
            else:
                scale = sp.simplify(ell / forms[opp])
            rest = sp.Mul(*(forms[i] for i in range(r) if i != opp))
            expr = f.pieces[k] * sp.Mul(*X) / rest * scale
            res.append(sp.cancel(expr.subs(point, simultaneous=True)))
        out.append((gens, res[0], res[1]))
    return out


def check_pole_cancellation(f: PiecewiseFunction) -> bool:
    return all(sp.cancel(ra + rb) == 0 for _, ra, rb in wall_residues(f))


def verify_projection_formula(f: PiecewiseFunction, g, d_multiplicities=None) -> bool:
    """``nu_*(nu^*(g) f) = g nu_*(f)`` on every face."""
    fan = f.complex
    g = sp.sympify(g)
    lhs = nu_pushforward(nu_pullback(g, fan) * f, d_multiplicities)
    rhs = nu_pushforward(f, d_multiplicities)
    for I, expr in rhs.faces.items():
        gI = g.subs({fan.symbols[j]: 0 for j in range(fan.rank) if j not in I}, simultaneous=True)
        if sp.expand(lhs.faces[I] - gI * expr) != 0:
            return False
    return True


def verify_degree_count(fan: SimplicialFan, d_multiplicities=None) -> bool:
    """Local degree bookkeeping: for a face ``I1`` and ``I2 = I1 + {i0}``, the
    indices of the cones over a fixed ``|I1|``-cone, weighted by ``d``, agree."""
    r = fan.rank
    d = covering_degrees(fan) if d_multiplicities is None else {frozenset(k): v for k, v in d_multiplicities.items()}
    for k in range(r):
        for I1 in itertools.combinations(range(r), k):
            I1f = frozenset(I1)
            for i0 in set(range(r)) - I1f:
                I2 = I1f | {i0}
                for c1 in _face_cones(fan, I1f):
                    lhs = sum(_sub_index(c2, sorted(I2)) * d[I2]
                              for c2 in _face_cones(fan, I2) if set(c1) <= set(c2))
                    if lhs != _sub_index(c1, sorted(I1f)) * d[I1f]:
                        return False
    return True


# ---------------------------------------------------------------------------
# exact identity checks at random rational points


def _sample_avoiding(fan: SimplicialFan, rng: random.Random, forms_of: Callable, max_tries: int = 1000):
    for _ in range(max_tries):
        pt = fan.random_point(rng)
        vals = forms_of(pt)
        if all(v != 0 for v in vals):
            return pt
    raise ToroidalError("could not find a point off every hyperplane")


def _all_forms(fan: SimplicialFan, pt) -> list:
    vals = list(pt)
    for k in fan.max_keys():
        vals.extend(fan.forms(k, pt))
    return vals


def _inverse_product_sum(fan: SimplicialFan, pt) -> Fraction:
    return sum((1 / math.prod(fan.forms(k, pt)) for k in fan.max_keys()), Fraction(0))


def verify_firstorth(fan: SimplicialFan, lp: LatticePair | None = None, trials: int = 20, seed: int = 0) -> bool:
    """``sum_C 1/prod x_{i;C} == |N:N^| / prod x_i`` at random rational points."""
    if fan.free:
        raise PreconditionError("this identity needs a fan in the first orthant")
    index = (lp or fan.lattice).index
    for t in range(trials):
        pt = _sample_avoiding(fan, trial_rng(seed, t), lambda p: _all_forms(fan, p))
        if _inverse_product_sum(fan, pt) != Fraction(index) / math.prod(pt):
            return False
    return True


def verify_toricsum(fan: SimplicialFan, trials: int = 20, seed: int = 0) -> bool:
    """``sum_C 1/prod x_{i;C} == 0`` for a fan whose support has a line factor."""
    if not fan.free:
        raise PreconditionError("support must be a subspace times an orthant with a nonzero subspace")
    if fan.lattice.index != 1:
        raise PreconditionError("maximal cones must be generated by bases of N")
    for t in range(trials):
        pt = _sample_avoiding(fan, trial_rng(seed, t), lambda p: _all_forms(fan, p))
        if _inverse_product_sum(fan, pt) != 0:
            return False
    return True


def firstorth_symbolic(fan: SimplicialFan, lp: LatticePair | None = None) -> sp.Expr:
    """Symbolic difference of the two sides (rank <= 3); zero when the identity holds."""
    if fan.rank > 3:
        raise PreconditionError("symbolic path is limited to rank <= 3")
    index = (lp or fan.lattice).index
    lhs = sum(1 / sp.Mul(*fan.form_exprs(k)) for k in fan.max_keys())
    return sp.cancel(sp.together(lhs - index / sp.Mul(*fan.symbols)))


# ---------------------------------------------------------------------------
# the theta-function identity


def _theta_term(w: complex, g, h, a: complex, tau: complex, tp0: complex, th_a: complex) -> complex:
    u = w + float(g) - float(h) * tau
    return (tp0 * numeric_theta(u - a, tau) / (TWO_PI_I * numeric_theta(u, tau) * th_a)
            * cmath.exp(TWO_PI_I * a * float(h)))


def mainthetalemma_sides(fan: SimplicialFan, lp: LatticePair | None, a: Sequence, z: complex | None,
                         tau: complex, w: Sequence[complex]) -> tuple[complex, complex]:
    """Both sides of the theta identity at ``x_i = 2 pi i w_i``.

    ``a`` gives rational values on ``e_i``; the functional used is ``a * z``
    (or ``a`` itself when ``z`` is None).
    """
    lp = lp or fan.lattice
    tau = complex(tau)
    scale = 1 if z is None else complex(z)
    a = [Fraction(t) for t in a]
    tp0 = numeric_theta(0, tau, 1)
    G = quotient_group_elements(lp)

    def val(v):
        return complex(sum(a[i] * v[i] for i in range(fan.rank))) * scale

    def th(aa):
        t = numeric_theta(-aa, tau)
        if abs(t) < 1e-12:
            raise ThetaSingularityError(f"theta(-a) vanishes at a = {aa}")
        return t

    lhs = 0j
    for k in fan.max_keys():
        gens = fan.cones[k]
        avals = [val(g) for g in gens]
        thas = [th(x) for x in avals]
        wk = fan.forms(k, w)
        for g in G:
            gf = fractional_coordinates(fan, k, g)
            for h in G:
                hf = fractional_coordinates(fan, k, h)
                term = 1 + 0j
                for i in range(fan.rank):
                    term *= _theta_term(wk[i], gf[i], hf[i], avals[i], tau, tp0, thas[i])
                lhs += term
    rhs = complex(lp.index)
    for i in range(fan.rank):
        ai = val([int(i == j) for j in range(fan.rank)])
        rhs *= _theta_term(w[i], 0, 0, ai, tau, tp0, th(ai))
    return lhs, rhs


def _random_w(rng: random.Random, r: int) -> list[complex]:
    return [complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.25, 0.25)) for _ in range(r)]


def verify_mainthetalemma(fan: SimplicialFan, lp: LatticePair | None, a: Sequence, z: complex | None,
                          tau: complex, trials: int = 5, seed: int = 0) -> float:
    """Largest relative residual of the theta identity over random samples."""
    if complex(tau).imag <= 0:
        raise ValueError("need Im(tau) > 0")
    if fan.free:
        raise PreconditionError("the theta identity needs a fan in the first orthant")
    worst = 0.0
    for t in range(trials):
        rng = trial_rng(seed, t)
        for _ in range(100):
            w = _random_w(rng, fan.rank)
            forms = _all_forms(fan, w)
            if min(abs(numeric_theta(v, tau)) for v in forms) > 1e-3:
                break
        else:
            raise ToroidalError("could not sample away from theta zeros")
        lhs, rhs = mainthetalemma_sides(fan, lp, a, z, tau, w)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return worst


def firstorth_from_theta(fan: SimplicialFan, lp: LatticePair | None, a: Sequence, z: complex | None,
                         tau: complex, w: Sequence[complex], h: float = 1e-2) -> tuple[complex, complex]:
    """Leading Laurent coefficient of the theta identity at ``eps w`` as
    ``eps -> 0`` (Richardson extrapolation over three step sizes), next to
    the rational sum it should reproduce."""
    r = fan.rank

    def lead(eps):
        lhs, _ = mainthetalemma_sides(fan, lp, a, z, tau, [eps * t for t in w])
        return lhs * eps ** r

    l1, l2, l4 = lead(h), lead(h / 2), lead(h / 4)
    r1, r2 = 2 * l2 - l1, 2 * l4 - l2
    extrapolated = (4 * r2 - r1) / 3
    x = [TWO_PI_I * t for t in w]
    exact = sum(1 / math.prod(fan.forms(k, x)) for k in fan.max_keys())
    return extrapolated, exact

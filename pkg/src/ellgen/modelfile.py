"""Reading and writing model files.

Models are TOML documents with a top-level ``kind``:

``manifold``
    ``name``, ``dim``, ``generators = [["h", 1], ...]``, ``chern``, optional
    ``euler`` and ``c1_zero``, an ``[intersections]`` table mapping top
    monomials to numbers, and ``[[divisor]]`` entries (``name``, ``class``,
    ``delta``).
``orbifold``
    ``name``, ``dim``, ``group_order``, helper ``[[manifold]]`` entries and
    ``[[contribution]]`` entries holding ``[[contribution.block]]`` tables
    with ``summand`` and ``divisor`` arrays.
``fan``
    ``[lattice]`` (``rank``, ``sublattice``), optional ``[support]`` with
    ``free`` coordinates, ``[[cone]]`` entries with ``gens`` and an optional
    ``[verify]`` table (``sublattice``, ``expect``, ``identities``).

Rational numbers may be written as integers or strings like ``"-1/2"``.
Every validation error carries the line of the offending entry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import tomli
import tomlkit

from .geom import (
    ClassPoly,
    DivisorRestriction,
    FixedLocusModel,
    GeometryError,
    LocusBlock,
    ManifoldModel,
    OrbifoldDatum,
    TangentSummand,
    check_klt,
)
from .toroidal import FanError, LatticePair, SimplicialFan

__all__ = [
    "ModelFileError",
    "FanSpec",
    "parse_model",
    "parse_model_text",
    "serialize_model",
    "write_model",
    "model_to_dict",
]

KINDS = ("manifold", "orbifold", "fan")


class ModelFileError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class FanSpec:
    """A fan plus optional verification settings."""

    fan: SimplicialFan
    check_lattice: LatticePair | None = None
    expect: str = "pass"
    identities: tuple[str, ...] = ("firstorth",)

    @property
    def lattice(self) -> LatticePair:
        return self.check_lattice or self.fan.lattice


# ---------------------------------------------------------------------------
# line bookkeeping


_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-\"]+)\s*\]\]?\s*(#.*)?$")
_KEY = re.compile(r'^\s*("?)([^"=\s]+)\1\s*=')


class _Lines:
    """Map concrete TOML paths like ``("contribution", 1, "block", 0, "rank")`` to lines."""

    def __init__(self, text: str):
        self.tables: dict[tuple, int] = {(): 1}
        self.keys: dict[tuple, int] = {}
        counters: dict[tuple, int] = {}
        current: tuple = ()
        for n, line in enumerate(text.splitlines(), start=1):
            m = _HEADER.match(line)
            if m:
                names = m.group(2).replace('"', "").split(".")
                concrete: tuple = ()
                for i, name in enumerate(names):
                    concrete += (name,)
                    last = i == len(names) - 1
                    if last and m.group(1) == "[[":
                        idx = counters.get(concrete, -1) + 1
                        counters[concrete] = idx
                        concrete += (idx,)
                    elif concrete in counters:
                        concrete += (counters[concrete],)
                current = concrete
                self.tables[current] = n
                continue
            k = _KEY.match(line)
            if k:
                self.keys.setdefault(current + (k.group(2),), n)

    def line(self, path: tuple) -> int | None:
        path = tuple(path)
        while path:
            if path in self.keys:
                return self.keys[path]
            if path in self.tables:
                return self.tables[path]
            path = path[:-1]
        return None


class _Ctx:
    def __init__(self, source: str, lines: _Lines):
        self.source = source
        self.lines = lines

    def fail(self, path: tuple, exc: Exception | str) -> None:
        line = self.lines.line(path)
        where = f"{self.source}:{line}" if line else self.source
        msg = f"{where}: {exc}"
        if isinstance(exc, Exception):
            err = type(exc)(msg)
            err.line = line
            raise err from exc
        raise ModelFileError(msg, line)

    def get(self, table: dict, key: str, path: tuple, kind=None, default: Any = ...):
        if key not in table:
            if default is ...:
                self.fail(path, f"missing required key {key!r}")
            return default
        v = table[key]
        if kind is not None and not isinstance(v, kind):
            self.fail(path + (key,), f"key {key!r} has the wrong type ({type(v).__name__})")
        return v

    def check_keys(self, table: dict, allowed: Sequence[str], path: tuple) -> None:
        for k in table:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key {k!r} (allowed: {', '.join(allowed)})")

    def rational(self, v, path: tuple) -> Fraction:
        if isinstance(v, bool) or not isinstance(v, (int, str, float)):
            self.fail(path, f"expected a rational number, got {v!r}")
        try:
            return Fraction(v) if not isinstance(v, float) else Fraction(str(v))
        except (ValueError, ZeroDivisionError):
            self.fail(path, f"cannot read {v!r} as a rational number")

    def guarded(self, path: tuple, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (GeometryError, FanError) as exc:
            self.fail(path, exc)


# ---------------------------------------------------------------------------
# parsing


_MANIFOLD_KEYS = ("kind", "name", "dim", "generators", "chern", "euler", "c1_zero", "intersections", "divisor")


def _manifold(ctx: _Ctx, t: dict, path: tuple) -> ManifoldModel:
    ctx.check_keys(t, _MANIFOLD_KEYS, path)
    name = ctx.get(t, "name", path, str)
    dim = ctx.get(t, "dim", path, int)
    raw_gens = ctx.get(t, "generators", path, list, [])
    gens = []
    for i, g in enumerate(raw_gens):
        if not (isinstance(g, list) and len(g) == 2 and isinstance(g[0], str) and isinstance(g[1], int)):
            ctx.fail(path + ("generators",), f"generator {i} must be [name, degree]")
        gens.append((g[0], g[1]))
    gens = tuple(gens)
    chern = ctx.guarded(path + ("chern",), ClassPoly.parse, gens, ctx.get(t, "chern", path, str))
    inter = {}
    for key, val in ctx.get(t, "intersections", path, dict, {}).items():
        p = path + ("intersections", key)
        poly = ctx.guarded(p, ClassPoly.parse, gens, key)
        if len(poly.terms) != 1 or poly.terms[0][1] != 1:
            ctx.fail(p, f"intersection key {key!r} must be a single monomial")
        inter[poly.terms[0][0]] = ctx.rational(val, p)
    divisors = []
    for i, d in enumerate(ctx.get(t, "divisor", path, list, [])):
        p = path + ("divisor", i)
        ctx.check_keys(d, ("name", "class", "delta"), p)
        dname = ctx.get(d, "name", p, str)
        cls = ctx.guarded(p + ("class",), ClassPoly.parse, gens, ctx.get(d, "class", p, str))
        delta = ctx.rational(ctx.get(d, "delta", p), p + ("delta",))
        ctx.guarded(p + ("delta",), check_klt, dname, delta)
        divisors.append((dname, cls, delta))
    euler = ctx.get(t, "euler", path, int, None)
    c1_zero = ctx.get(t, "c1_zero", path, bool, False)
    return ctx.guarded(path, ManifoldModel.build, name, dim, gens, inter, chern, divisors, euler, c1_zero)


def _pair(ctx: _Ctx, v, path: tuple) -> tuple[Fraction, Fraction]:
    if not (isinstance(v, list) and len(v) == 2):
        ctx.fail(path, "a character must be a pair [alpha, beta]")
    return ctx.rational(v[0], path), ctx.rational(v[1], path)


def _orbifold(ctx: _Ctx, t: dict) -> OrbifoldDatum:
    ctx.check_keys(t, ("kind", "name", "dim", "group_order", "manifold", "contribution"), ())
    manifolds: dict[str, ManifoldModel] = {}
    for i, m in enumerate(ctx.get(t, "manifold", (), list, [])):
        model = _manifold(ctx, m, ("manifold", i))
        if model.name in manifolds:
            ctx.fail(("manifold", i, "name"), f"manifold {model.name!r} defined twice")
        manifolds[model.name] = model
    contribs = []
    for ci, c in enumerate(ctx.get(t, "contribution", (), list)):
        cp = ("contribution", ci)
        ctx.check_keys(c, ("label", "multiplicity", "block"), cp)
        blocks = []
        for bi, b in enumerate(ctx.get(c, "block", cp, list)):
            bp = cp + ("block", bi)
            ctx.check_keys(b, ("manifold", "summand", "divisor"), bp)
            mname = ctx.get(b, "manifold", bp, str)
            if mname not in manifolds:
                ctx.fail(bp + ("manifold",), f"unknown manifold {mname!r}")
            man = manifolds[mname]
            summands = []
            for si, s in enumerate(ctx.get(b, "summand", bp, list, [])):
                sp_ = bp + ("summand", si)
                ctx.check_keys(s, ("lambda", "rank", "chern"), sp_)
                lam = _pair(ctx, ctx.get(s, "lambda", sp_), sp_ + ("lambda",))
                ch = ctx.guarded(sp_ + ("chern",), ClassPoly.parse, man.gens, ctx.get(s, "chern", sp_, str))
                summands.append(ctx.guarded(sp_ + ("lambda",), TangentSummand, lam, ctx.get(s, "rank", sp_, int), ch))
            divs = []
            for di, d in enumerate(ctx.get(b, "divisor", bp, list, [])):
                dp = bp + ("divisor", di)
                ctx.check_keys(d, ("name", "class", "delta", "eps", "contains"), dp)
                dname = ctx.get(d, "name", dp, str)
                cls = ctx.guarded(dp + ("class",), ClassPoly.parse, man.gens, ctx.get(d, "class", dp, str))
                delta = ctx.rational(ctx.get(d, "delta", dp), dp + ("delta",))
                eps = _pair(ctx, ctx.get(d, "eps", dp, list, [0, 0]), dp + ("eps",))
                divs.append(ctx.guarded(dp, DivisorRestriction, dname, cls, delta, eps,
                                        ctx.get(d, "contains", dp, bool, False)))
            blocks.append(ctx.guarded(bp, LocusBlock, man, tuple(summands), tuple(divs)))
        contribs.append(ctx.guarded(cp, FixedLocusModel, ctx.get(c, "label", cp, str), tuple(blocks),
                                    ctx.get(c, "multiplicity", cp, int, 1)))
    return ctx.guarded((), OrbifoldDatum, ctx.get(t, "name", (), str), ctx.get(t, "dim", (), int),
                       ctx.get(t, "group_order", (), int), tuple(contribs))


def _int_rows(ctx: _Ctx, v, path: tuple) -> list[list[int]]:
    if not (isinstance(v, list) and all(isinstance(r, list) and all(isinstance(x, int) and not isinstance(x, bool)
                                                                       for x in r) for r in v)):
        ctx.fail(path, "expected a list of integer vectors")
    return v


_IDENTITIES = ("firstorth", "toricsum", "mainthetalemma")


def _fan(ctx: _Ctx, t: dict) -> FanSpec:
    ctx.check_keys(t, ("kind", "name", "lattice", "support", "cone", "verify"), ())
    lat = ctx.get(t, "lattice", (), dict)
    ctx.check_keys(lat, ("rank", "sublattice"), ("lattice",))
    rank = ctx.get(lat, "rank", ("lattice",), int)
    sub = lat.get("sublattice")
    lp = (LatticePair.identity(rank) if sub is None else
          ctx.guarded(("lattice", "sublattice"), LatticePair, _int_rows(ctx, sub, ("lattice", "sublattice"))))
    if lp.rank != rank:
        ctx.fail(("lattice", "rank"), f"rank {rank} does not match the sublattice")
    support = ctx.get(t, "support", (), dict, {})
    ctx.check_keys(support, ("free",), ("support",))
    free = support.get("free", [])
    cones = []
    for i, c in enumerate(ctx.get(t, "cone", (), list)):
        ctx.check_keys(c, ("gens",), ("cone", i))
        cones.append(_int_rows(ctx, ctx.get(c, "gens", ("cone", i)), ("cone", i, "gens")))
    fan = ctx.guarded(("cone",), SimplicialFan, cones, lp, free, ctx.get(t, "name", (), str, ""))
    ver = ctx.get(t, "verify", (), dict, {})
    ctx.check_keys(ver, ("sublattice", "expect", "identities"), ("verify",))
    check = None
    if "sublattice" in ver:
        check = ctx.guarded(("verify", "sublattice"), LatticePair,
                            _int_rows(ctx, ver["sublattice"], ("verify", "sublattice")))
    expect = ctx.get(ver, "expect", ("verify",), str, "pass")
    if expect not in ("pass", "fail"):
        ctx.fail(("verify", "expect"), "expect must be 'pass' or 'fail'")
    default_ids = ["toricsum"] if fan.free else ["firstorth", "mainthetalemma"]
    ids = ctx.get(ver, "identities", ("verify",), list, default_ids)
    for name in ids:
        if name not in _IDENTITIES:
            ctx.fail(("verify", "identities"), f"unknown identity {name!r}")
    return FanSpec(fan, check, expect, tuple(ids))


def parse_model_text(text: str, source: str = "<string>"):
    """Parse model text; returns a ManifoldModel, OrbifoldDatum or FanSpec."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = int(m.group(1)) if m else None
        where = f"{source}:{line}" if line else source
        raise ModelFileError(f"{where}: syntax error: {exc}", line) from None
    ctx = _Ctx(source, _Lines(text))
    kind = data.get("kind")
    if kind not in KINDS:
        ctx.fail(("kind",), f"kind must be one of {', '.join(KINDS)} (got {kind!r})")
    if kind == "manifold":
        return _manifold(ctx, data, ())
    if kind == "orbifold":
        return _orbifold(ctx, data)
    return _fan(ctx, data)


def parse_model(path: str | Path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ModelFileError(f"{p}: {exc.strerror}") from None
    return parse_model_text(text, str(p))


# ---------------------------------------------------------------------------
# serialization


def _num(x: Fraction):
    x = Fraction(x)
    return int(x) if x.denominator == 1 else str(x)


def _manifold_dict(m: ManifoldModel, with_kind: bool = True) -> dict:
    d: dict[str, Any] = {"kind": "manifold"} if with_kind else {}
    d.update({"name": m.name, "dim": m.dim, "generators": [[n, k] for n, k in m.gens],
              "chern": m.chern.to_text()})
    if m.euler is not None:
        d["euler"] = m.euler
    if m.c1_zero:
        d["c1_zero"] = True
    d["intersections"] = {m.monomial_text(mono): _num(v) for mono, v in m.intersections}
    if m.divisors:
        d["divisor"] = [{"name": v.name, "class": v.cls.to_text(), "delta": _num(v.delta)} for v in m.divisors]
    return d


def model_to_dict(obj) -> dict:
    if isinstance(obj, ManifoldModel):
        return _manifold_dict(obj)
    if isinstance(obj, OrbifoldDatum):
        manifolds: dict[str, ManifoldModel] = {}
        contribs = []
        for c in obj.contributions:
            blocks = []
            for b in c.blocks:
                prev = manifolds.setdefault(b.manifold.name, b.manifold)
                if prev != b.manifold:
                    raise ModelFileError(f"two different manifolds share the name {b.manifold.name!r}")
                bd: dict[str, Any] = {"manifold": b.manifold.name}
                if b.summands:
                    bd["summand"] = [{"lambda": [_num(s.lam[0]), _num(s.lam[1])], "rank": s.rank,
                                      "chern": s.chern.to_text()} for s in b.summands]
                if b.divisors:
                    bd["divisor"] = [{"name": v.name, "class": v.cls.to_text(), "delta": _num(v.delta),
                                      "eps": [_num(v.eps[0]), _num(v.eps[1])], "contains": v.contains}
                                     for v in b.divisors]
                blocks.append(bd)
            contribs.append({"label": c.label, "multiplicity": c.multiplicity, "block": blocks})
        return {"kind": "orbifold", "name": obj.name, "dim": obj.dim, "group_order": obj.group_order,
                "manifold": [_manifold_dict(m, False) for m in manifolds.values()],
                "contribution": contribs}
    if isinstance(obj, SimplicialFan):
        obj = FanSpec(obj)
    if isinstance(obj, FanSpec):
        d = {"kind": "fan"}
        d.update(obj.fan.to_dict())
        ver: dict[str, Any] = {}
        if obj.check_lattice is not None:
            ver["sublattice"] = [list(g) for g in obj.check_lattice.generators]
        if obj.expect != "pass":
            ver["expect"] = obj.expect
        ver["identities"] = list(obj.identities)
        d["verify"] = ver
        return d
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def serialize_model(obj) -> str:
    return tomlkit.dumps(model_to_dict(obj))


def write_model(obj, path: str | Path) -> None:
    Path(path).write_text(serialize_model(obj))

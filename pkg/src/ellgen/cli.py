"""The ``ell`` command line."""

from __future__ import annotations

import argparse
import csv
import io
import json
import random
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .genus import (
    GenusResult,
    auto_denominator,
    elliptic_genus,
    orbifold_elliptic_genus,
    pair_elliptic_genus,
    singular_elliptic_genus,
    verify_jacobi,
    verify_mckay,
)
from .geom import GeometryError, ManifoldModel, OrbifoldDatum, trivial_datum
from .modelfile import FanSpec, ModelFileError, parse_model
from .series import Series, SeriesError
from .suite import SUITES, ConfigError, RunConfig, load_config, run_suite
from .symprod import dmvv_lhs_exp, dmvv_table, hilbert_scheme_series, symmetric_power_datum
from .theta import numeric_theta, theta_bar
from .toroidal import (
    PreconditionError,
    ToroidalError,
    verify_firstorth,
    verify_mainthetalemma,
    verify_toricsum,
)

__all__ = ["main", "emit_table", "parse_model", "run_suite"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output


def _exp(x: Fraction) -> str:
    return str(x) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _monomial(q: Fraction, y: Fraction, p: int, nil: tuple, names: Sequence[str]) -> str:
    parts = []
    for sym, e in (("p", Fraction(p)), ("q", q), ("y", y)):
        if e == 1:
            parts.append(sym)
        elif e:
            parts.append(f"{sym}^{_exp(e)}")
    for name, e in zip(names, nil):
        if e:
            parts.append(name if e == 1 else f"{name}^{e}")
    return "*".join(parts) or "1"


def _coeff(c) -> str:
    s = str(c)
    return s if " " not in s else f"({s})"


def _rows(series: Series):
    rows = [(p, q, y, nil, c) for (q, y, p, nil), c in series.items()]
    rows.sort(key=lambda r: r[:4])
    return rows


def emit_table(result: Series | GenusResult, fmt: str = "text") -> str:
    """Render coefficients sorted by (p, q, y); identical input gives identical bytes."""
    series = result.series if isinstance(result, GenusResult) else result
    names = series.trunc.names if series.trunc.gens else ()
    rows = _rows(series)
    if fmt == "text":
        lines = []
        for p, q, y, nil, c in rows:
            mono = _monomial(q, y, p, nil, names)
            lines.append(_coeff(c) if mono == "1" else f"{_coeff(c)} {mono}")
        return "".join(line + "\n" for line in lines)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "q", "y", *names, "coeff"])
        for p, q, y, nil, c in rows:
            w.writerow([p, _exp(q), _exp(y), *nil, str(c)])
        return buf.getvalue()
    raise UsageError(f"unknown format {fmt!r}")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _load(path: str, kinds: tuple[type, ...]):
    obj = parse_model(path)
    if not isinstance(obj, kinds):
        want = " or ".join(k.__name__ for k in kinds)
        raise UsageError(f"{path}: expected a {want} file, got {type(obj).__name__}")
    return obj


def _checked(cfg: RunConfig, datum: OrbifoldDatum) -> None:
    cfg.require_denominator(auto_denominator(datum), datum.name)


def cmd_compute(args, cfg: RunConfig) -> int:
    model = _load(args.model, (ManifoldModel,))
    _checked(cfg, trivial_datum(model))
    g = elliptic_genus(model, cfg.window(), strict=cfg.strict)
    _write(emit_table(g, args.format), cfg.out)
    return EXIT_OK


def cmd_pair(args, cfg: RunConfig) -> int:
    model = _load(args.model, (ManifoldModel,))
    _checked(cfg, trivial_datum(model))
    fn = singular_elliptic_genus if args.hat else pair_elliptic_genus
    _write(emit_table(fn(model, cfg.window(), strict=cfg.strict), args.format), cfg.out)
    return EXIT_OK


def cmd_orbifold(args, cfg: RunConfig) -> int:
    obj = _load(args.model, (ManifoldModel, OrbifoldDatum))
    if args.symmetric:
        if not isinstance(obj, ManifoldModel):
            raise UsageError("--symmetric needs a manifold file")
        datum = symmetric_power_datum(obj, args.symmetric)
    elif isinstance(obj, OrbifoldDatum):
        datum = obj
    else:
        datum = trivial_datum(obj)
    _checked(cfg, datum)
    g = orbifold_elliptic_genus(datum, cfg.window(), strict=cfg.strict)
    _write(emit_table(g, args.format), cfg.out)
    return EXIT_OK


def _dmvv_common(args, cfg: RunConfig, fn) -> int:
    model = _load(args.model, (ManifoldModel,))
    table = dmvv_table(model, cfg.pmax, cfg.qmax, cfg.ywin)
    s = fn(table, cfg.pmax, cfg.window())
    _write(emit_table(s, args.format), cfg.out)
    return EXIT_OK


def cmd_dmvv(args, cfg: RunConfig) -> int:
    return _dmvv_common(args, cfg, dmvv_lhs_exp)


def cmd_hilbert(args, cfg: RunConfig) -> int:
    return _dmvv_common(args, cfg, hilbert_scheme_series)


def _fan_identity(spec: FanSpec, ident: str, cfg: RunConfig, trials: int, seed: int) -> tuple[bool, str]:
    if ident == "firstorth":
        return verify_firstorth(spec.fan, spec.lattice, trials, seed), ""
    if ident == "toricsum":
        return verify_toricsum(spec.fan, trials, seed), ""
    rng = random.Random(f"{seed}:a")
    a = [Fraction(rng.randint(1, 97), rng.randint(98, 199)) for _ in range(spec.fan.rank)]
    z = complex(rng.uniform(0.1, 0.4), rng.uniform(-0.1, 0.1))
    tau = complex(rng.uniform(-0.3, 0.3), rng.uniform(0.9, 1.3))
    r = verify_mainthetalemma(spec.fan, spec.lattice, a, z, tau, trials, seed)
    return r < 1e-8, f" residual={r:.3e}"


def cmd_fans(args, cfg: RunConfig) -> int:
    spec = _load(args.fan, (FanSpec,))
    trials = args.trials or cfg.trials
    seed = cfg.seed if args.seed is None else args.seed
    if args.identity == "all":
        idents = ["toricsum"] if spec.fan.free else ["firstorth", "mainthetalemma"]
    else:
        idents = [args.identity]
    ok = True
    lines = []
    for ident in idents:
        passed, extra = _fan_identity(spec, ident, cfg, trials, seed)
        ok = ok and passed
        lines.append(f"{ident}: {'pass' if passed else 'FAIL'}{extra}\n")
    _write("".join(lines), cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def _complex(s: str) -> complex:
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise UsageError(f"not a complex number: {s!r}") from None


def cmd_theta(args, cfg: RunConfig) -> int:
    if args.action == "dump":
        th = theta_bar(cfg.window())
        _write(emit_table(th.series, args.format), cfg.out)
        return EXIT_OK
    if args.z is None or args.tau is None:
        raise UsageError("theta eval needs Z and TAU")
    z, tau = _complex(args.z), _complex(args.tau)
    if tau.imag <= 0:
        raise UsageError("TAU must lie in the upper half plane")
    v = numeric_theta(z, tau)
    _write(f"{v.real!r} {v.imag!r}\n", cfg.out)
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    if args.what == "mckay":
        if len(args.files) != 2:
            raise UsageError("verify mckay needs LHS and RHS files")
        lhs = _load(args.files[0], (OrbifoldDatum,))
        rhs = _load(args.files[1], (ManifoldModel,))
        r = verify_mckay(lhs, rhs, cfg.window())
        if r.is_zero():
            _write(f"mckay: pass through q^{cfg.qmax}, |y| <= {cfg.ywin}\n", cfg.out)
            return EXIT_OK
        _write("mckay: FAIL, residual follows\n" + emit_table(r, args.format), cfg.out)
        return EXIT_FAIL
    if len(args.files) != 1:
        raise UsageError("verify jacobi needs one model file")
    model = _load(args.files[0], (ManifoldModel,))
    rng = random.Random(f"{cfg.seed}:jacobi")
    worst = 0.0
    for _ in range(cfg.trials):
        tau = complex(rng.uniform(-0.4, 0.4), rng.uniform(0.9, 1.4))
        z = complex(rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1))
        worst = max(worst, max(verify_jacobi(model, z, tau).values()))
    ok = worst < 1e-6
    _write(f"jacobi: {'pass' if ok else 'FAIL'} max residual {worst:.3e} over {cfg.trials} points\n", cfg.out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_suite(args, cfg: RunConfig) -> int:
    report = run_suite(args.name, cfg)
    lines = []
    for c in report["checks"]:
        res = "" if c["residual"] is None else f" residual={c['residual']:.3e}"
        lines.append(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}{res} {c['detail']}".rstrip() + "\n")
    n = len(report["checks"])
    good = sum(c["passed"] for c in report["checks"])
    lines.append(f"{good}/{n} checks passed\n")
    sys.stdout.write("".join(lines))
    if cfg.out:
        Path(cfg.out).write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--qmax", type=int)
    p.add_argument("--ywin", type=int)
    p.add_argument("--pmax", type=int)
    p.add_argument("--conductor", type=int, help="common denominator for exponents")
    p.add_argument("--seed", type=int)
    p.add_argument("--strict", action="store_true", default=None,
                   help="fail on missing intersection numbers instead of treating them as 0")
    p.add_argument("--out", help="write output here instead of stdout")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--jobs", type=int)
    p.add_argument("--config", help="TOML run configuration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ell", description="Elliptic genera of pairs, orbifolds and symmetric products.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        _common(p)
        p.set_defaults(fn=fn)
        return p

    add("compute", cmd_compute, "genus of a smooth model").add_argument("model")
    p = add("pair", cmd_pair, "genus of a pair with a divisor")
    p.add_argument("model")
    p.add_argument("--hat", action="store_true", help="divide out the normalization factor")
    p = add("orbifold", cmd_orbifold, "orbifold genus")
    p.add_argument("model")
    p.add_argument("--symmetric", type=int, metavar="N", help="use the N-th symmetric product")
    add("dmvv", cmd_dmvv, "generating series of symmetric products").add_argument("model")
    add("hilbert", cmd_hilbert, "product formula for the generating series").add_argument("model")

    fans = sub.add_parser("fans", help="toroidal identities on a fan file")
    fsub = fans.add_subparsers(dest="fans_command", required=True)
    p = fsub.add_parser("verify")
    _common(p)
    p.add_argument("identity", choices=("firstorth", "toricsum", "mainthetalemma", "all"))
    p.add_argument("fan")
    p.add_argument("--trials", type=int)
    p.set_defaults(fn=cmd_fans)

    p = add("theta", cmd_theta, "theta function: formal dump or numeric value")
    p.add_argument("action", choices=("dump", "eval"))
    p.add_argument("z", nargs="?")
    p.add_argument("tau", nargs="?")

    p = add("verify", cmd_verify, "check an identity")
    p.add_argument("what", choices=("mckay", "jacobi"))
    p.add_argument("files", nargs="+")
    p.add_argument("--trials", type=int)

    p = add("suite", cmd_suite, "run a verification suite")
    p.add_argument("name", choices=(*SUITES, "all"))
    p.add_argument("--trials", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config, qmax=args.qmax, ywin=args.ywin, pmax=args.pmax,
                          conductor=args.conductor, seed=args.seed, strict=args.strict,
                          out=args.out, jobs=args.jobs, trials=getattr(args, "trials", None))
        return args.fn(args, cfg)
    except (UsageError, ConfigError, ModelFileError, GeometryError, PreconditionError, ToroidalError,
            SeriesError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"ell: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Verification suites over the bundled fixtures."""

from __future__ import annotations

import math
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import sympy as sp
import tomli

from .genus import (
    chi_y_specialize,
    elliptic_genus,
    euler_from_chi_y,
    genus_window,
    orbifold_elliptic_genus,
    numeric_elliptic_genus,
    pair_elliptic_genus,
    verify_jacobi,
    verify_mckay,
)
from .modelfile import FanSpec, parse_model
from .series import Truncation
from .symprod import (
    dmvv_pairs_check,
    dmvv_rhs_product,
    dmvv_table,
    f_ijs,
    hilbert_scheme_series,
    lemma_ijsum_residual,
    lemma_product_residual,
    lemma_producttwo_residual,
    symmetric_power_datum,
)
from .symprod import CoeffTable
from .theta import (
    numeric_theta,
    numeric_theta_factor,
    numeric_theta_product,
    theta_bar,
    theta_factor,
    verify_quasi_periodicity,
)
from .toroidal import (
    check_pole_cancellation,
    firstorth_from_theta,
    index_three_fan,
    monomial_of_point,
    nu_pullback,
    nu_pushforward,
    random_subdivision,
    trial_rng,
    verify_degree_count,
    verify_firstorth,
    verify_mainthetalemma,
    verify_projection_formula,
    verify_toricsum,
)

__all__ = [
    "CONFIG_ENV",
    "ConfigError",
    "SUITES",
    "RunConfig",
    "CheckResult",
    "load_config",
    "fixture_path",
    "fixture_names",
    "run_suite",
]

CONFIG_ENV = "ELLGEN_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    qmax: int = 5
    ywin: int = 6
    pmax: int = 3
    denominator: int = 2
    conductor: int | None = None
    seed: int = 0
    strict: bool = False
    out: str | None = None
    trials: int = 5
    jobs: int = 1

    def __post_init__(self):
        for name in ("qmax", "ywin", "pmax", "denominator", "trials", "jobs"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer (got {v!r})")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer (got {self.seed!r})")
        if self.conductor is not None and (not isinstance(self.conductor, int) or self.conductor <= 0):
            raise ConfigError(f"conductor must be a positive integer (got {self.conductor!r})")
        if self.conductor is not None and self.conductor % self.denominator:
            raise ConfigError(f"conductor {self.conductor} is not divisible by the denominator {self.denominator}")

    def window(self) -> Truncation:
        return genus_window(self.qmax, self.ywin, self.conductor or self.denominator)

    def require_denominator(self, d: int, what: str) -> None:
        if self.conductor is not None and self.conductor % d:
            raise ConfigError(f"conductor {self.conductor} is not divisible by denominator {d} of {what}")


def load_config(path: str | Path | None = None, **overrides) -> RunConfig:
    """Defaults, then the config file (argument or environment), then overrides."""
    values: dict = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            data = tomli.loads(Path(path).read_text())
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        data = data.get("run", data)
        known = {f for f in RunConfig.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def fixture_path(name: str) -> Path:
    p = resources.files("ellgen") / "data" / f"{name}.toml"
    return Path(str(p))


def fixture_names() -> list[str]:
    root = resources.files("ellgen") / "data"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


@dataclass
class CheckResult:
    name: str
    passed: bool
    residual: float | None = None
    detail: str = ""
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def _rng(cfg: RunConfig, tag: str) -> random.Random:
    return random.Random(f"{cfg.seed}:{tag}")


# ---------------------------------------------------------------------------
# theta


def check_theta_formal(cfg: RunConfig) -> CheckResult:
    th = theta_bar(Truncation(Q=20, W=24, P=0, D=2))
    rng = _rng(cfg, "theta")
    worst = 0.0
    for _ in range(10):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(1.0, 2.0))
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2))
        a, b = th.evaluate(z, tau), numeric_theta(z, tau)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    return CheckResult("theta formal vs sum", worst < 1e-9, worst, "10 points, Im tau in [1,2]")


def check_theta_product(cfg: RunConfig) -> CheckResult:
    rng = _rng(cfg, "product")
    worst = 0.0
    for _ in range(10):
        tau = complex(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0))
        z = complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.2, 0.2))
        b = numeric_theta(z, tau)
        worst = max(worst, abs(numeric_theta_product(z, tau) - b) / max(1.0, abs(b)))
    return CheckResult("theta product vs sum", worst < 1e-12, worst)


def check_theta_periodicity(cfg: RunConfig) -> CheckResult:
    rng = _rng(cfg, "period")
    worst = max(verify_quasi_periodicity(complex(rng.uniform(-.5, .5), rng.uniform(-.2, .2)),
                                         complex(rng.uniform(-.5, .5), rng.uniform(.6, 1.5)),
                                         rng.randint(-2, 2), rng.randint(-2, 2)) for _ in range(10))
    return CheckResult("theta quasi-periodicity", worst < 1e-10, worst)


def check_theta_twisted(cfg: RunConfig) -> CheckResult:
    tr = Truncation(Q=12, W=30, P=0, D=12)
    rng = _rng(cfg, "twisted")
    worst = 0.0
    cases = [(Fraction(1, 3), Fraction(1, 2), 1), (Fraction(1, 2), 0, 1), (0, Fraction(1, 3), 2),
             (Fraction(2, 3), Fraction(1, 6), Fraction(1, 2))]
    for alpha, beta, a in cases:
        f = theta_factor(alpha, beta, a, None, tr)
        for _ in range(3):
            tau = complex(rng.uniform(-.5, .5), rng.uniform(2.0, 3.0))
            z = complex(rng.uniform(-.3, .3), rng.uniform(-.05, .05))
            b = numeric_theta_factor(alpha, beta, a, z, tau)
            worst = max(worst, abs(f.evaluate(z, tau) - b) / max(1.0, abs(b)))
    return CheckResult("twisted factor vs numeric", worst < 1e-8, worst, f"{len(cases)} characters")


# ---------------------------------------------------------------------------
# genus identities


def _fixture(name: str):
    return parse_model(fixture_path(name))


def check_chi_y(cfg: RunConfig) -> CheckResult:
    h = Fraction(1, 2)
    expected = {
        "point": ({0: 1}, 1),
        "p1": ({-h: 1, h: 1}, 2),
        "p2": ({-1: 1, 0: 1, 1: 1}, 3),
        "k3": ({-1: 2, 0: 20, 1: 2}, 24),
    }
    bad = []
    for name, (chi, euler) in expected.items():
        g = elliptic_genus(_fixture(name), genus_window(1, 2), strict=cfg.strict)
        got = {k: int(v) for k, v in chi_y_specialize(g).items()}
        if got != chi or int(euler_from_chi_y(chi_y_specialize(g))) != euler:
            bad.append(f"{name}: {got}")
    return CheckResult("chi_y and Euler numbers", not bad, None, "; ".join(bad) or "point, P1, P2, K3")


def _blowup(cfg: RunConfig, base: str, blown: str) -> CheckResult:
    w = cfg.window()
    a = elliptic_genus(_fixture(base), w, strict=cfg.strict).series
    b = pair_elliptic_genus(_fixture(blown), w, strict=cfg.strict).series
    D = math.lcm(a.trunc.D, b.trunc.D)
    tr = Truncation(Q=w.Q, W=w.W, P=0, D=D)
    diff = a.restrict(tr) - b.restrict(tr)
    return CheckResult(f"blowup invariance {base}", diff.is_zero(), float(len(diff.terms)),
                       f"through q^{cfg.qmax}, |y| <= {cfg.ywin}")


def check_blowup_p2(cfg: RunConfig) -> CheckResult:
    return _blowup(cfg, "p2", "blowup_p2")


def check_blowup_p1xp1(cfg: RunConfig) -> CheckResult:
    return _blowup(cfg, "p1xp1", "blowup_p1xp1")


def check_mckay(cfg: RunConfig) -> CheckResult:
    r = verify_mckay(_fixture("mckay_lhs"), _fixture("mckay_rhs"), cfg.window())
    return CheckResult("McKay identity P1xP1/Z2", r.is_zero(), float(len(r.terms)),
                       f"through q^{cfg.qmax}, |y| <= {cfg.ywin}")


def check_jacobi(cfg: RunConfig) -> CheckResult:
    rng = _rng(cfg, "jacobi")
    model = _fixture("k3")
    worst = 0.0
    for _ in range(max(cfg.trials, 5)):
        tau = complex(rng.uniform(-0.4, 0.4), rng.uniform(0.9, 1.4))
        z = complex(rng.uniform(-0.3, 0.3), rng.uniform(-0.1, 0.1))
        worst = max(worst, max(verify_jacobi(model, z, tau).values()))
    return CheckResult("weak Jacobi laws K3", worst < 1e-6, worst)


# ---------------------------------------------------------------------------
# symmetric products


def _sym_compare(name: str, P: int, Q: int = 3, W: int = 3) -> tuple[bool, str]:
    model = _fixture(name)
    table = dmvv_table(model, P, Q, W)
    rhs = dmvv_rhs_product(table, P, genus_window(Q, W))
    D = rhs.trunc.D
    bad = []
    for n in range(2, P + 1):
        g = orbifold_elliptic_genus(symmetric_power_datum(model, n), genus_window(Q, W)).series
        g = g.restrict(Truncation(Q=Q, W=W, P=0, D=math.lcm(D, g.trunc.D)))
        prod = {(k[0] * g.trunc.D // D, k[1] * g.trunc.D // D): c for k, c in rhs.terms.items() if k[2] == n}
        direct = {(k[0], k[1]): c for k, c in g.terms.items()}
        if not direct or prod != direct:
            bad.append(f"S_{n}")
    return not bad, ", ".join(bad)


def check_dmvv_k3(cfg: RunConfig) -> CheckResult:
    P = min(cfg.pmax, 3)
    ok, bad = _sym_compare("k3", P)
    return CheckResult("DMVV K3 vs S_n orbifold", ok, None, bad or f"n = 2..{P}, q^3, |y| <= 3")


def check_dmvv_p2(cfg: RunConfig) -> CheckResult:
    P = min(cfg.pmax, 3)
    ok, bad = _sym_compare("p2", P)
    return CheckResult("DMVV P2 vs S_n orbifold", ok, None, bad or f"n = 2..{P}, q^3, |y| <= 3")


def _pairs(name: str, P: int, Q: int, W: int) -> CheckResult:
    table = dmvv_table(_fixture(name), P, Q, W)
    r = dmvv_pairs_check(table, P, genus_window(Q, W, table.trunc.D))
    return CheckResult(f"DMVV pairs {name}", r.is_zero(), float(len(r.terms)), f"p^{P}, q^{Q}, |y| <= {W}")


def check_pairs_line(cfg: RunConfig) -> CheckResult:
    return _pairs("p2_half_line", 2, 2, 4)


def check_pairs_point(cfg: RunConfig) -> CheckResult:
    return _pairs("p1_third_point", 3, 2, 4)


def check_hilbert(cfg: RunConfig) -> CheckResult:
    model = _fixture("k3")
    Q, W = 3, 3
    table = dmvv_table(model, 2, Q, W)
    h = hilbert_scheme_series(table, 2, genus_window(Q, W))
    g = orbifold_elliptic_genus(symmetric_power_datum(model, 2), genus_window(Q, W)).series
    D = h.trunc.D
    g = g.restrict(Truncation(Q=Q, W=W, P=0, D=math.lcm(D, g.trunc.D)))
    f = g.trunc.D // D
    direct = {(k[0], k[1]): c for k, c in g.terms.items()}
    ok = bool(direct) and {(k[0] * f, k[1] * f): c for k, c in h.terms.items() if k[2] == 2} == direct
    return CheckResult("Hilbert scheme p^2 = S_2 orbifold (K3)", ok, None, f"q^{Q}, |y| <= {W}")


def check_gottsche(cfg: RunConfig) -> CheckResult:
    """q^0 part of the Hilbert series against the product formula for chi_y."""
    P = min(cfg.pmax, 3)
    table = dmvv_table(_fixture("k3"), P, 1, 3)
    h = hilbert_scheme_series(table, P, genus_window(1, 3))
    D = h.trunc.D
    p, y = sp.symbols("p y")

    def trunc(e):
        e = sp.expand(e)
        return sum(e.coeff(p, n) * p**n for n in range(P + 1))

    gen = sp.Integer(1)
    for k in range(1, P + 1):
        for u, m in ((p**k / y, 2), (p**k, 20), (p**k * y, 2)):
            geo = sum(sp.binomial(m + l - 1, l) * u**l for l in range(P // k + 1))
            gen = trunc(gen * geo)
    ok = True
    for n in range(1, P + 1):
        got = sum(sp.Integer(int(c)) * y ** sp.Rational(k[1], D) for k, c in h.terms.items()
                  if k[0] == 0 and k[2] == n)
        ok = ok and got != 0 and sp.expand(gen.coeff(p, n) - got) == 0
    return CheckResult("chi_y product formula (K3 Hilbert)", ok, None, f"through p^{P}")


def _region_u(rng: random.Random, j: int, tau: complex) -> complex:
    """A point with (j-1)/j < Im(u)/Im(tau) < 1, away from both edges."""
    lo = (j - 1) / j
    frac = lo + (1 - lo) * rng.uniform(0.2, 0.8)
    return complex(rng.uniform(0.05, 0.45), frac * tau.imag)


def check_lemmas(cfg: RunConfig) -> CheckResult:
    rng = _rng(cfg, "lemmas")
    worst = 0.0
    for i in range(1, 5):
        for j in range(1, 5):
            for s in range(j):
                tau = complex(rng.uniform(-0.4, 0.4), rng.uniform(0.8, 1.5))
                z = complex(rng.uniform(0.05, 0.3), rng.uniform(-0.05, 0.05))
                x = complex(rng.uniform(0.05, 0.4), rng.uniform(-0.05, 0.05))
                d = complex(rng.uniform(0.05, 0.4), rng.uniform(-0.05, 0.05))
                u = _region_u(rng, j, tau)
                worst = max(worst, lemma_product_residual(i, j, s, x, z, tau),
                            lemma_producttwo_residual(i, j, s, d, z, tau),
                            lemma_ijsum_residual(i, j, s, u, z, tau))
    return CheckResult("character product/sum lemmas", worst < 1e-8, worst, "i, j <= 4, all s")


def check_fijs(cfg: RunConfig) -> CheckResult:
    """Rescaled coefficient series against the numeric genus at the transformed point."""
    model = _fixture("k3")
    table = CoeffTable.from_result(pair_elliptic_genus(model, genus_window(8, 14, 2, 1)))
    z, tau = 0.13 + 0.02j, 2.5j
    worst = 0.0
    for i, j, s in [(1, 1, 0), (2, 1, 0), (1, 2, 0), (1, 2, 1), (2, 2, 1), (1, 3, 2)]:
        f = f_ijs(table, i, j, s, genus_window(2, 4, 12 * j, 0), check=False)
        b = numeric_elliptic_genus(model, i * z, (i * tau - s) / j)
        worst = max(worst, abs(f.evaluate(z, tau) - b) / abs(b))
    return CheckResult("rescaled coefficients vs numeric genus", worst < 1e-9, worst, "K3, tau = 2.5i")


# ---------------------------------------------------------------------------
# fans


def check_index3_identity(cfg: RunConfig) -> CheckResult:
    rng = _rng(cfg, "index3")
    ok = True
    for _ in range(20):
        while True:
            x1 = Fraction(rng.randint(1, 999), rng.randint(1, 50))
            x2 = Fraction(rng.randint(1, 999), rng.randint(1, 50))
            if x1 != 2 * x2 and x2 != 2 * x1:
                break
        lhs = (1 / (x2 * (x1 - 2 * x2) / 3) + 1 / ((2 * x2 - x1) / 3 * (2 * x1 - x2) / 3)
               + 1 / (x1 * (x2 - 2 * x1) / 3))
        ok = ok and lhs == 3 / (x1 * x2)
    ok = ok and verify_firstorth(index_three_fan(), trials=20, seed=cfg.seed)
    return CheckResult("index-3 fan identity", ok, None, "20 exact rational points")


def check_bundled_fans(cfg: RunConfig) -> CheckResult:
    a = [Fraction(2, 7), Fraction(3, 11), Fraction(5, 13)]
    z, tau = complex(0.31, 0.07), complex(0.17, 1.13)
    lines = []
    ok = True
    worst = 0.0
    for name in fixture_names():
        if not name.startswith("fan_"):
            continue
        spec: FanSpec = _fixture(name)
        results = []
        for ident in spec.identities:
            if ident == "firstorth":
                results.append(verify_firstorth(spec.fan, spec.lattice, 20, cfg.seed))
            elif ident == "toricsum":
                results.append(verify_toricsum(spec.fan, 20, cfg.seed))
            else:
                r = verify_mainthetalemma(spec.fan, spec.lattice, a[:spec.fan.rank], z, tau, cfg.trials, cfg.seed)
                worst = max(worst, r)
                results.append(r < 1e-8)
        passed = all(results)
        good = passed if spec.expect == "pass" else not passed
        ok = ok and good
        lines.append(f"{name}:{'ok' if good else 'BAD'}")
    return CheckResult("bundled fans", ok, worst, " ".join(lines))


def check_theta_lemma(cfg: RunConfig) -> CheckResult:
    fan = index_three_fan()
    r = verify_mainthetalemma(fan, None, [Fraction(1, 3), Fraction(2, 7)], complex(0.37, 0.11),
                              complex(0.2, 1.1), max(cfg.trials, 5), cfg.seed)
    rng = _rng(cfg, "laurent")
    w = [complex(rng.uniform(-.3, .3), rng.uniform(-.1, .1)) for _ in range(2)]
    lead, exact = firstorth_from_theta(fan, None, [Fraction(1, 3), Fraction(2, 7)], complex(0.37, 0.11),
                                       complex(0.2, 1.1), w)
    lr = abs(lead - exact) / abs(exact)
    return CheckResult("theta lemma on index-3 fan", r < 1e-8 and lr < 1e-6, max(r, lr),
                       f"residual {r:.2e}, Laurent limit {lr:.2e}")


def check_pushforward(cfg: RunConfig) -> CheckResult:
    bad = []
    count = 0
    for rank in (1, 2, 3):
        for t in range(max(cfg.trials, 3)):
            rng = trial_rng(cfg.seed, 1000 * rank + t)
            fan = random_subdivision(rank, rng)
            X = fan.symbols
            g = sum(rng.randint(-3, 3) * X[rng.randrange(rank)] ** rng.randint(0, 2) for _ in range(3))
            f = nu_pullback(sum(rng.randint(-2, 2) * x for x in X), fan)
            for _ in range(2):
                k = rng.randrange(len(fan.cones))
                coeffs = [rng.randint(0, 2) for _ in range(rank)]
                pt = tuple(sum(c * gen[i] for c, gen in zip(coeffs, fan.cones[k])) for i in range(rank))
                if any(pt):
                    f = f + monomial_of_point(fan, pt) * rng.randint(1, 3)
            count += 1
            unit = nu_pushforward(nu_pullback(g, fan))
            if sp.expand(unit.top - fan.lattice.index * g) != 0:
                bad.append(f"rank {rank} #{t}: projection of 1")
            if not verify_projection_formula(f, g):
                bad.append(f"rank {rank} #{t}: module property")
            if not check_pole_cancellation(f):
                bad.append(f"rank {rank} #{t}: wall residues")
            if not nu_pushforward(f).restrict_compatible(X):
                bad.append(f"rank {rank} #{t}: face compatibility")
            if not verify_degree_count(fan):
                bad.append(f"rank {rank} #{t}: degree count")
    return CheckResult("pushforward contract", not bad, None, "; ".join(bad) or f"{count} random subdivisions")


SUITES: dict[str, tuple] = {
    "theta": (check_theta_formal, check_theta_product, check_theta_periodicity, check_theta_twisted),
    "mckay": (check_chi_y, check_blowup_p2, check_blowup_p1xp1, check_mckay),
    "jacobi": (check_jacobi,),
    "dmvv": (check_dmvv_k3, check_dmvv_p2, check_pairs_line, check_pairs_point, check_hilbert,
             check_gottsche, check_lemmas, check_fijs),
    "fans": (check_index3_identity, check_bundled_fans, check_theta_lemma, check_pushforward),
}


def _timed(fn, cfg: RunConfig) -> CheckResult:
    t0 = time.perf_counter()
    try:
        res = fn(cfg)
    except Exception as exc:  # a crashing check is a failing check
        res = CheckResult(fn.__name__, False, None, f"{type(exc).__name__}: {exc}")
    res.seconds = round(time.perf_counter() - t0, 3)
    return res


def run_suite(name: str, cfg: RunConfig | None = None) -> dict:
    """Run a named suite; the report lists checks in a fixed order."""
    cfg = cfg or RunConfig()
    if name == "all":
        checks = [fn for key in ("theta", "mckay", "jacobi", "dmvv", "fans") for fn in SUITES[key]]
    elif name in SUITES:
        checks = list(SUITES[name])
    else:
        raise KeyError(f"unknown suite {name!r} (choose from {', '.join([*SUITES, 'all'])})")
    if cfg.jobs > 1 and len(checks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_timed, checks, [cfg] * len(checks)))
    else:
        results = [_timed(fn, cfg) for fn in checks]
    return {
        "suite": name,
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("out", "jobs")},
        "passed": all(r.passed for r in results),
        "checks": [r.as_dict() for r in results],
    }

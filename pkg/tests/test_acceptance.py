"""Acceptance criteria at default truncation (q^5, y-window 6, p^3).

Each test prints a single PASS/FAIL line, visible under ``pytest -v``.
"""

from __future__ import annotations

import time
from typing import Callable

import pytest

from ellgen import suite as S
from ellgen.suite import CheckResult, RunConfig

BUDGET_SECONDS = 600.0

CRITERIA: dict[int, tuple[str, tuple[Callable[[RunConfig], CheckResult], ...]]] = {
    1: ("formal theta vs numeric sum, 10 points, tol 1e-9", (S.check_theta_formal,)),
    2: ("chi_y of P2 and K3, Euler numbers 3 and 24", (S.check_chi_y,)),
    3: ("blowup of P2 at a point equals P2, q^5, |y| <= 6", (S.check_blowup_p2,)),
    4: ("McKay residual zero, q^5, |y| <= 6", (S.check_mckay,)),
    5: ("S_2 and S_3 orbifold genus vs product formula, K3 and P2", (S.check_dmvv_k3, S.check_dmvv_p2)),
    6: ("pairs generating identity, half line and third point", (S.check_pairs_line, S.check_pairs_point)),
    7: ("Hilbert scheme p^2 equals S_2 orbifold genus", (S.check_hilbert,)),
    8: ("weak Jacobi laws for K3 at 5 points, tol 1e-6", (S.check_jacobi,)),
    9: ("index-3 fan identity at 20 rational points", (S.check_index3_identity,)),
    10: ("theta lemma and fan identities with a negative control", (S.check_theta_lemma, S.check_bundled_fans)),
    11: ("product and sum lemmas for i, j <= 4, tol 1e-8", (S.check_lemmas,)),
    12: ("pushforward contract on random subdivisions", (S.check_pushforward,)),
}

_elapsed: dict[int, float] = {}


@pytest.fixture(scope="module")
def cfg() -> RunConfig:
    c = RunConfig()
    assert (c.qmax, c.ywin, c.pmax) == (5, 6, 3)
    return c


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number: int, cfg: RunConfig, capsys) -> None:
    title, checks = CRITERIA[number]
    t0 = time.perf_counter()
    results = [S._timed(fn, cfg) for fn in checks]
    _elapsed[number] = time.perf_counter() - t0
    passed = all(r.passed for r in results)
    residuals = [r.residual for r in results if r.residual is not None]
    extra = f" residual={max(residuals):.3g}" if residuals else ""
    with capsys.disabled():
        print(f"\ncriterion {number:2d}: {'PASS' if passed else 'FAIL'} {title}{extra} ({_elapsed[number]:.1f}s)")
    for r in results:
        assert r.passed, f"{r.name}: {r.detail}"


def test_runtime_budget(capsys) -> None:
    assert len(_elapsed) == len(CRITERIA), "run the whole module to measure the budget"
    total = sum(_elapsed.values())
    with capsys.disabled():
        print(f"\nruntime budget: {'PASS' if total < BUDGET_SECONDS else 'FAIL'} {total:.1f}s of {BUDGET_SECONDS:.0f}s")
    assert total < BUDGET_SECONDS

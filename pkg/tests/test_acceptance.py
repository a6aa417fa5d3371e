"""Acceptance suite: one criterion per test, one printed pass/fail line each.

Runs the full benchmark instance (L=25, N=4, rho=25, seed 7) once per variant
and shares the traces across criteria.
"""

import statistics
import time

import numpy as np
import pytest

from aladin import (LocalSolveConfig, RunConfig, Variant, centralized_solve,
                    empirical_contraction, run, uplink_cost)
from aladin.mhe import benchmark_instance
from aladin.verify import suite_oracle_equivalence, suite_quasi_newton, suite_split_unsplit

SEED = 7
ITERS = 50


def _report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def instance():
    return benchmark_instance(seed=SEED)


@pytest.fixture(scope="module")
def reference(instance):
    cfg = LocalSolveConfig(kkt_tol=1e-10, max_newton_steps=100)
    x_star, _, _ = centralized_solve(instance.problem,
                                     np.concatenate(instance.initial_guess), cfg)
    offsets = np.concatenate([[0], np.cumsum([n for n, _ in instance.layout.dims])]).astype(int)
    return [x_star[offsets[i]:offsets[i + 1]] for i in range(instance.layout.N)]


@pytest.fixture(scope="module")
def traces(instance, reference):
    out = {}
    for variant in Variant:
        cfg = RunConfig(variant=variant, y0=instance.initial_guess,
                        max_iters=ITERS, rho=25.0, instrument=variant.is_rt)
        out[variant] = run(instance.problem, cfg, reference=reference)
    return out


def test_criterion_1_coordination_oracle_equivalence():
    t0 = time.perf_counter()
    name, ok, detail = suite_oracle_equivalence(n_instances=100, tol=1e-9)
    elapsed = time.perf_counter() - t0
    _report("criterion 1 (oracle equivalence)", ok and elapsed < 5.0,
            f"{detail}, {elapsed:.2f} s")


def test_criterion_2_quasi_newton_invariants():
    t0 = time.perf_counter()
    name, ok, detail = suite_quasi_newton(n_updates=1000, tol=1e-9)
    elapsed = time.perf_counter() - t0
    _report("criterion 2 (quasi-Newton invariants)", ok and elapsed < 5.0,
            f"{detail}, {elapsed:.2f} s")


def test_criterion_3a_gauss_newton_convergence(traces):
    errs = [rec.err_to_ref for rec in traces[Variant.GAUSS_NEWTON][:30]]
    best = min(errs)
    _report("criterion 3a (gn err <= 1e-9 within 30)", best <= 1e-9,
            f"best err {best:.3e}")


def test_criterion_3b_adjoint_bfgs_convergence(traces):
    errs = [rec.err_to_ref for rec in traces[Variant.ADJOINT_BFGS][:25]]
    best = min(errs)
    _report("criterion 3b (abfgs err <= 1e-8 within 25)", best <= 1e-8,
            f"best err {best:.3e}")


def test_criterion_3c_rt_convergence_with_three_triggers(traces):
    details = []
    ok = True
    for variant in (Variant.RT_GAUSS_NEWTON, Variant.RT_ADJOINT_BFGS):
        trace = traces[variant]
        best = min(rec.err_to_ref for rec in trace)
        triggers = [rec.k for rec in trace if rec.triggered]
        ok = ok and best <= 1e-6 and triggers == [3, 9, 27]
        details.append(f"{variant.value} best err {best:.3e}, triggers {triggers}")
    _report("criterion 3c (rt variants err <= 1e-6, 3 triggers)", ok,
            "; ".join(details))


def test_criterion_4_event_trigger_freezing(traces):
    checked = 0
    frozen = True
    for variant in (Variant.RT_GAUSS_NEWTON, Variant.RT_ADJOINT_BFGS):
        prev = None
        for rec in traces[variant]:
            snap = rec.snapshot
            if rec.triggered or prev is None:
                prev = snap
                continue
            for key in ("H", "C", "G", "Q", "R"):
                for a, b in zip(prev[key], snap[key]):
                    frozen = frozen and np.array_equal(a, b)
            frozen = frozen and prev["schur"][0] == snap["schur"][0]
            frozen = frozen and np.array_equal(prev["schur"][1], snap["schur"][1])
            checked += 1
            prev = snap
    _report("criterion 4 (event-trigger freezing)", frozen and checked >= 2 * (ITERS - 4),
            f"bitwise-constant sensitivities over {checked} non-trigger intervals")


def test_criterion_5_communication_accounting(instance, traces):
    dims = instance.layout.dims
    full = uplink_cost(Variant.GAUSS_NEWTON, dims)
    compact = uplink_cost(Variant.ADJOINT_BFGS, dims)
    expected = {
        Variant.GAUSS_NEWTON: full, Variant.RT_GAUSS_NEWTON: full,
        Variant.ADJOINT_BFGS: compact, Variant.RT_ADJOINT_BFGS: compact,
    }
    logged_ok = all(rec.uplink_scalars == expected[variant]
                    for variant, trace in traces.items() for rec in trace)
    ratio = compact / full
    _report("criterion 5 (communication accounting)",
            logged_ok and ratio < 0.25,
            f"full {full}, compact {compact}, ratio {ratio:.4f}, "
            f"logged exactly every iteration: {logged_ok}")


def test_criterion_6_relative_coordination_timing(instance, reference):
    totals = {}
    for variant in Variant:
        reps = []
        for _ in range(5):
            cfg = RunConfig(variant=variant, y0=instance.initial_guess,
                            max_iters=ITERS, rho=25.0)
            trace = run(instance.problem, cfg, reference=reference)
            reps.append(sum(rec.coord_wall_ns for rec in trace))
        totals[variant] = statistics.median(reps)
    r_gn = totals[Variant.RT_GAUSS_NEWTON] / totals[Variant.GAUSS_NEWTON]
    r_bf = totals[Variant.RT_ADJOINT_BFGS] / totals[Variant.ADJOINT_BFGS]
    _report("criterion 6 (relative coordination timing)",
            r_gn <= 0.5 and r_bf <= 0.8,
            f"rt-gn/gn {r_gn:.3f} (<= 0.5), rt-abfgs/abfgs {r_bf:.3f} (<= 0.8)")


def test_criterion_7_split_unsplit_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    ok = True
    for seed in range(5):
        name, passed, detail = suite_split_unsplit(seed=seed, tol=1e-8)
        ok = ok and passed
        worst = max(worst, float(detail.split()[-1]))
    elapsed = time.perf_counter() - t0
    _report("criterion 7 (split/unsplit equivalence)", ok and elapsed < 30.0,
            f"worst deviation {worst:.3e} over 5 seeds, {elapsed:.2f} s")


def test_criterion_8_empirical_contraction(traces):
    ratio = empirical_contraction(traces[Variant.GAUSS_NEWTON], tail=4)
    _report("criterion 8 (empirical contraction)", ratio < 1.0,
            f"geometric-mean tail ratio {ratio:.3f}")

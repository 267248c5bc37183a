"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import time
import tracemalloc

import numpy as np
import pytest

from periodic_qmc.cbc import cbc_fast, cbc_naive
from periodic_qmc.experiments import (ExperimentConfig, run_cubature_convergence,
                                      run_fem_convergence, run_field_moments,
                                      run_truncation_study)
from periodic_qmc.lattice import LatticeRule, worst_case_error_dual, worst_case_error_kernel
from periodic_qmc.random_field import FieldSpec, b_sequence
from periodic_qmc.special_fn import riemann_zeta, verify_regularity_identity
from periodic_qmc.spod_weights import pde_spod_weights, weight_of_subset


@pytest.fixture
def report(capsys):
    def emit(label: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail

    return emit


def half_decay(beta: float, s: int) -> np.ndarray:
    return 0.5 * np.arange(1, s + 1, dtype=float) ** -beta


def test_criterion_1_fast_matches_naive(report):
    t0 = time.perf_counter()
    bad, worst = [], 0.0
    for n, alpha, beta in itertools.product((17, 31, 67), (2, 4), (2, 4)):
        spec = pde_spod_weights(half_decay(beta, 10), alpha, 10)
        for s in range(1, 11):
            f, nv = cbc_fast(n, s, spec, alpha), cbc_naive(n, s, spec, alpha)
            rel = np.max(np.abs(f.step_values - nv.step_values) / np.abs(nv.step_values))
            worst = max(worst, rel)
            if list(f.z) != list(nv.z) or rel > 1e-10:
                bad.append((n, s, alpha, beta))
    dt = time.perf_counter() - t0
    report("criterion 1 (fast CBC = naive CBC)", not bad and dt < 60,
           f"120 cases, mismatches {bad}, worst step-value rel diff {worst:.2e}, {dt:.1f}s")


def test_criterion_2_kernel_vs_dual(report):
    tol = {2: 1e-4, 4: 1e-8}
    lines, ok = [], True
    for n, alpha in itertools.product((17, 31), (2, 4)):
        spec = pde_spod_weights(half_decay(2, 2), alpha, 2)
        vec = cbc_fast(n, 2, spec, alpha)
        for s in (1, 2):
            rule = LatticeRule.from_vector(vec, s)
            pk = worst_case_error_kernel(rule, spec, alpha)
            pd = worst_case_error_dual(rule, spec, alpha, 200)
            rel = abs(pk - pd) / pk
            good = rel <= tol[alpha]
            msg = f"n={n} s={s} a={alpha}: rel {rel:.2e} (tol {tol[alpha]:.0e})"
            if s == 1:
                closed = 2 * weight_of_subset(spec, [0]) * riemann_zeta(alpha) / n**alpha
                rk, rd = abs(pk - closed) / closed, abs(pd - closed) / closed
                good = good and rk <= 1e-12 and rd <= 1e-12
                msg += f", closed form: kernel {rk:.1e} dual {rd:.1e}"
            ok = ok and good
            lines.append(msg)
    report("criterion 2 (kernel vs dual sum, H=200)", ok, "; ".join(lines))


def test_criterion_3_cbc_bound(report):
    worst, ok = 0.0, True
    for alpha, n in itertools.product((2, 4), (17, 31)):
        spec = pde_spod_weights(half_decay(2, 4), alpha, 4)
        vec = cbc_fast(n, 4, spec, alpha)
        for s in range(1, 5):
            for lam in (1 / alpha + 0.1, 1.0):
                z2 = 2 * riemann_zeta(alpha * lam)
                rhs = sum(weight_of_subset(spec, u) ** lam * z2 ** len(u)
                          for k in range(1, s + 1)
                          for u in itertools.combinations(range(s), k)) / (n - 1)
                lhs = vec.step_values[s - 1] ** lam
                worst = max(worst, lhs / rhs)
                ok = ok and lhs <= rhs
    report("criterion 3 (CBC error bound)", ok, f"32 cases, max lhs/rhs {worst:.3f}")


@pytest.mark.slow
def test_criterion_4_cubature_rate(report):
    t0 = time.perf_counter()
    rep = run_cubature_convergence(ExperimentConfig())
    dt = time.perf_counter() - t0
    # with c = 0.1 the errors reach rounding level for large n; c = 1 stays above it
    strong = ExperimentConfig(field={"model": "periodic", "abar": 2.0, "c": 1.0, "beta": 2.0,
                                     "s": 20})
    rep1 = run_cubature_convergence(strong)
    errs = ", ".join(f"{e:.1e}" for e in rep.errors)
    report("criterion 4 (cubature rate, s=20, n<=4001)",
           rep.slope is not None and rep.slope <= -1.8 and rep1.slope <= -1.8,
           f"slope {rep.slope:.3f} (c=0.1, {dt:.0f}s; errors {errs}), "
           f"slope {rep1.slope:.3f} (c=1)")


@pytest.mark.slow
def test_criterion_5_truncation_rate(report):
    rep = run_truncation_study(ExperimentConfig())
    errs = ", ".join(f"{e:.1e}" for e in rep.errors)
    report("criterion 5 (dimension truncation rate)", rep.slope <= -2.5,
           f"slope {rep.slope:.3f}, errors {errs}")


@pytest.mark.slow
def test_criterion_6_fem_rate(report):
    slopes = {p: run_fem_convergence(ExperimentConfig(fem_problem=p)).slope
              for p in ("manufactured", "field")}
    report("criterion 6 (FEM rate in h)", all(1.8 <= v <= 2.2 for v in slopes.values()),
           ", ".join(f"{p} {v:.3f}" for p, v in slopes.items()))


@pytest.mark.slow
def test_criterion_7_moments(report):
    rep = run_field_moments(ExperimentConfig(n_samples=10_000, moment_s=100, moment_grid=3))
    z = rep.meta["variance_difference_z"]
    dev = max(max(abs(r["var_mc"] - r["var_exact"]) / r["var_se"],
                  abs(r["m4_mc"] - r["m4_exact"]) / r["m4_se"]) for r in rep.rows)
    report("criterion 7 (field moments)", not rep.flagged and max(map(abs, z)) <= 4,
           f"{len(rep.rows)} rows, {len(rep.flagged)} flagged, max |dev|/SE {dev:.2f}, "
           f"max |variance difference z| {max(map(abs, z)):.2f}")


def test_criterion_8_regularity_identity(report):
    rng = np.random.default_rng(20240)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 5))
        ups = rng.uniform(0.01, 2.0, d)
        nu = rng.multinomial(int(rng.integers(0, 7)), np.full(d, 1 / d))
        rec, closed = verify_regularity_identity(rng.uniform(0.1, 10), rng.uniform(0.1, 7),
                                                 ups, nu)
        worst = max(worst, abs(rec - closed) / abs(rec))
    report("criterion 8 (regularity identity)", worst <= 1e-12,
           f"200 instances, max rel diff {worst:.2e}")


@pytest.mark.slow
def test_criterion_9_performance(report):
    s, alpha = 100, 2
    spec = pde_spod_weights(b_sequence(FieldSpec(2.0, s, "periodic", 0.1, 2.0)), alpha, s)
    times = {16007: [], 32003: []}
    for _ in range(5):
        for n in times:
            t0 = time.perf_counter()
            cbc_fast(n, s, spec, alpha)
            times[n].append(time.perf_counter() - t0)
    # adjacent runs share the machine's load; the median damps timing noise
    ratio = float(np.median(np.array(times[32003]) / np.array(times[16007])))
    best = {n: min(v) for n, v in times.items()}
    tracemalloc.start()
    cbc_fast(16007, s, spec, alpha)
    peak = tracemalloc.get_traced_memory()[1]
    tracemalloc.stop()
    unit = alpha * s * 16007 * 8  # sigma s n doubles
    report("criterion 9 (fast CBC performance)",
           best[16007] < 60 and ratio <= 2.3 and peak <= 2 * unit,
           f"n=16007 {best[16007]:.2f}s, n=32003 {best[32003]:.2f}s (ratio {ratio:.2f}), "
           f"peak memory {peak / unit:.2f} x sigma*s*n doubles")

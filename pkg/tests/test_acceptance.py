"""Acceptance gate: the twelve criteria at their stated tolerances.

Each experiment runs once per session through the same code path as the
CLI; every criterion test records a one-line PASS/FAIL summary that is
printed at the end of the pytest run.
"""

import time

import pytest

from prandtl_robin.config import from_dict
from prandtl_robin.experiments import RUNNERS, Context

_RUNS = {}


def run(tag, tmp_path_factory, overrides=None):
    if tag not in _RUNS:
        cfg = from_dict(overrides or {}, tag)
        ctx = Context(tmp_path_factory.mktemp(tag.replace("-", "_")), seed=0)
        t0 = time.perf_counter()
        RUNNERS[tag](cfg, ctx)
        _RUNS[tag] = (ctx, time.perf_counter() - t0)
    return _RUNS[tag]


@pytest.fixture(scope="module")
def shear_run(tmp_path_factory):
    # canonical profile: Y = 20 with 400 nodes, 2000 time levels
    return run("shear", tmp_path_factory, {"grid": {"y_max": 20.0}})


@pytest.fixture(scope="module")
def mollify_run(tmp_path_factory):
    return run("mollify", tmp_path_factory)


@pytest.fixture(scope="module")
def linear_run(tmp_path_factory):
    return run("linearized-mms", tmp_path_factory)


@pytest.fixture(scope="module")
def nm_run(tmp_path_factory):
    return run("nash-moser", tmp_path_factory)


@pytest.fixture(scope="module")
def stability_run(tmp_path_factory):
    return run("stability", tmp_path_factory)


@pytest.fixture(scope="module")
def dirichlet_run(tmp_path_factory):
    return run("dirichlet-limit", tmp_path_factory)


def report(lines, number, name, passed, detail):
    line = f"criterion {number:2d} {name:<28s} {'PASS' if passed else 'FAIL'}  {detail}"
    lines[number] = line
    print(line)
    assert passed, line


def test_criterion_01_shear_cross_validation(shear_run, acceptance_lines):
    ctx, _ = shear_run
    c = ctx.checks["shear_cross_validation"]
    runtime = sum(ctx.phases[k] for k in ("fd", "kernel", "fd-coarse"))
    ok = c["linf"] <= 1e-3 and c["richardson_ratio"] >= 3 and runtime < 30
    report(acceptance_lines, 1, "shear cross-validation", ok,
           f"linf={c['linf']:.2e} ratio={c['richardson_ratio']:.2f} runtime={runtime:.1f}s")


def test_criterion_02_monotonicity(shear_run, acceptance_lines):
    ctx, _ = shear_run
    c = ctx.checks["shear_monotonicity"]
    report(acceptance_lines, 2, "monotonicity margins", c["passed"],
           f"betas={c['betas']} max_u_yy={c['concavity_max_u_yy']:.2e}")


def test_criterion_03_alpha_maximum_principle(shear_run, acceptance_lines):
    ctx, _ = shear_run
    c = ctx.checks["alpha_max_principle"]
    worst = max(p["overshoot"] for p in c["profiles"].values())
    report(acceptance_lines, 3, "alpha maximum principle", c["passed"], f"max_overshoot={worst:.2e}")


def test_criterion_04_smoothing_exponents(mollify_run, acceptance_lines):
    ctx, _ = mollify_run
    c = ctx.checks["smoothing_exponents"]
    e = c["exponents"]
    ok = e["gain0"] <= 0.15 and e["gain1"] <= 1.15 and e["approx"] <= -1 + 0.15
    report(acceptance_lines, 4, "smoothing exponents", ok,
           " ".join(f"{k}={v:.3f}" for k, v in e.items()))


def test_criterion_05_structure_preservation(mollify_run, acceptance_lines):
    ctx, _ = mollify_run
    c = ctx.checks["structure_preservation"]
    report(acceptance_lines, 5, "structure preservation", c["passed"],
           f"wall_v={c['max_wall_v']:.1e} richardson={[round(r, 2) for r in c['richardson']]}")


def test_criterion_06_linearized_mms(linear_run, acceptance_lines):
    ctx, _ = linear_run
    c = ctx.checks["linearized_mms"]
    o = c["orders"]
    report(acceptance_lines, 6, "linearized MMS orders", all(v >= 1.8 for v in o.values()),
           " ".join(f"{k}={v:.2f}" for k, v in o.items()))


def test_criterion_07_stability_constant(linear_run, acceptance_lines):
    ctx, _ = linear_run
    c = ctx.checks["linear_stability_constant"]
    report(acceptance_lines, 7, "linear stability constant", c["relative_spread"] < 0.25,
           f"spread={c['relative_spread']:.4f}")


def test_criterion_08_nash_moser_desk_run(nm_run, acceptance_lines):
    ctx, _ = nm_run
    c = ctx.checks["nash_moser_desk_run"]
    runtime = ctx.phases["shear"] + ctx.phases["iteration"]
    ok = c["passed"] and runtime < 300
    report(acceptance_lines, 8, "Nash-Moser desk run", ok,
           f"status={c['status']} reduction={c['reduction']:.3g} monotone={c['monotone_after_2']} "
           f"robin={c['robin_relative']:.2g} audits={c['audit_taylor_ratio']:.1e}/{c['audit_residual_ratio']:.2f} "
           f"runtime={runtime:.0f}s")


def test_criterion_09_rate_shape(nm_run, acceptance_lines):
    ctx, _ = nm_run
    c = ctx.checks["rate_shape_fit"]
    report(acceptance_lines, 9, "rate-shape fit", c["passed"], f"slope={c['slope']:.3f}")


def test_criterion_10_schedule_sums(nm_run, acceptance_lines):
    ctx, _ = nm_run
    c = ctx.checks["schedule_sum_bound"]
    report(acceptance_lines, 10, "schedule-sum bound", c["passed"], f"max_drift={c['max_drift']:.3f}")


def test_criterion_11_uniqueness_stability(stability_run, acceptance_lines):
    ctx, _ = stability_run
    c = ctx.checks["uniqueness_stability"]
    report(acceptance_lines, 11, "uniqueness and stability", c["passed"],
           f"identical={max(c['identical_difference']):.1e} halving={c['halving_ratio_normalized']:.4f}")


def test_criterion_12_dirichlet_limit(dirichlet_run, acceptance_lines):
    ctx, _ = dirichlet_run
    c = ctx.checks["dirichlet_limit_scaling"]
    report(acceptance_lines, 12, "Dirichlet-limit scaling", c["passed"], f"slope={c['slope']:.3f}")


def test_total_runtime_under_ten_minutes(shear_run, mollify_run, linear_run, nm_run, stability_run,
                                         dirichlet_run):
    total = sum(t for _, t in _RUNS.values())
    print(f"total acceptance runtime {total:.0f}s")
    assert total < 600

"""Experiment bodies behind the CLI tags.

Each experiment takes a RunConfig and a Context, writes its result files
through the context and records named checks.  Nothing here touches exit
codes or the manifest; cli.py owns those.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import nash_moser as nm
from .config import RunConfig
from .grid import Field, GridSpec
from .linearized import build_background, solve_vorticity
from .mms import MMSProblem, space_study, time_study
from .norms import index_set, norm_A, norm_boundary_A
from .shear import (ShearInitSpec, check_monotonicity, kernel_profile, shear_from_init, shear_on_strip,
                    solve_alpha_system)
from .smoothing import S_v, measure_operator_exponents, verify_divergence_preservation

log = logging.getLogger(__name__)


def thread_count() -> int:
    raw = os.environ.get("PRANDTL_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring PRANDTL_THREADS=%r (not an integer)", raw)
    return os.cpu_count() or 1


def parallel_map(fn, items):
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


class Context:
    """Output directory, check registry and phase timer for one run."""

    def __init__(self, out_dir, seed: int = 0):
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = seed
        self.files: list[str] = []
        self.checks: dict[str, dict] = {}
        self.phases: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.phases[name] = self.phases.get(name, 0.0) + time.perf_counter() - t0

    def check(self, name: str, passed: bool, **detail):
        self.checks[name] = _plain({"passed": bool(passed), **detail})
        log.info("check %-32s %s", name, "PASS" if passed else "FAIL")
        return passed

    def _register(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def json(self, name: str, obj):
        self._register(name).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header, rows):
        with self._register(name).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])

    def series(self, name: str, x, y, xlabel: str, ylabel: str):
        """Two-column plot data: '# xlabel ylabel' then one 'x y' pair per line."""
        with self._register(name).open("w") as fh:
            fh.write(f"# {xlabel} {ylabel}\n")
            for a, b in zip(x, y):
                fh.write(f"{float(a)!r} {float(b)!r}\n")


# ---- shear ------------------------------------------------------------------

def run_shear(cfg: RunConfig, ctx: Context):
    g, st = cfg.grid, cfg.study
    init = cfg.shear.init("shear")
    y = np.linspace(0.0, g.y_max, g.n_y)
    t = np.linspace(0.0, g.t_max, st.shear_n_t)
    with ctx.phase("fd"):
        prof = shear_from_init(init, y, t, scheme=cfg.shear.scheme)
    with ctx.phase("kernel"):
        ref = kernel_profile(init, [g.t_max], y)
    err = float(np.max(np.abs(prof.u_s[-1] - ref.u_s[-1])))
    yc = np.linspace(0.0, g.y_max, (g.n_y + 1) // 2)
    tc = np.linspace(0.0, g.t_max, (st.shear_n_t + 1) // 2)
    with ctx.phase("fd-coarse"):
        coarse = shear_from_init(init, yc, tc, scheme=cfg.shear.scheme)
        ref_c = kernel_profile(init, [g.t_max], yc)
    err_c = float(np.max(np.abs(coarse.u_s[-1] - ref_c.u_s[-1])))
    ratio = err_c / err if err > 0 else float("inf")
    ctx.check("shear_cross_validation", err <= 1e-3 and ratio >= 3, linf=err, linf_coarse=err_c,
              richardson_ratio=ratio, tol=1e-3, min_ratio=3)

    stride = max(1, (len(t) - 1) // 50)
    rows = [r for i, ti in enumerate(t) if i % stride == 0 or i == len(t) - 1
            for r in ((ti, yj, prof.u_s[i, j], prof.w1[i, j], prof.alpha[i, j]) for j, yj in enumerate(y))]
    ctx.csv("shear_profile.csv", ["t", "y", "u_s", "w1", "alpha"], rows)
    ctx.series("shear_final_profile.dat", y, prof.u_s[-1], "y", "u_s(T,y)")

    margins = {}
    ok = True
    with ctx.phase("monotonicity"):
        for b in st.shear_betas:
            p = shear_from_init(cfg.shear.init("shear", beta=b), y, t, scheme=cfg.shear.scheme)
            rep = check_monotonicity(p)
            margins[f"beta={b:g}"] = rep
            ok &= rep["ok"]
        concave = shear_from_init(ShearInitSpec("tanh", cfg.shear.sigma, cfg.shear.beta), y, t)
        u0yy = float(np.max(concave.u_yy[0, :-1]))
        uyy = float(np.max(concave.u_yy[1:, :-1]))
    conc_ok = u0yy <= 0 and uyy <= 1e-8
    margins["concavity"] = {"initial_max_u_yy": u0yy, "max_u_yy": uyy, "tol": 1e-8, "ok": conc_ok}
    ctx.json("monotonicity_margins.json", margins)
    ctx.check("shear_monotonicity", ok and conc_ok, betas=st.shear_betas, concavity_max_u_yy=uyy)

    alpha_rows = {}
    a_ok = True
    with ctx.phase("alpha"):
        for init_a in (init, ShearInitSpec(init.family, 2.0 * init.sigma, init.beta),
                       ShearInitSpec("tanh", init.sigma, init.beta)):
            p = prof if init_a == init else shear_from_init(init_a, y, t)
            a0 = np.nan_to_num(p.alpha[0], nan=0.0)
            a = solve_alpha_system(a0, init_a.beta, y, t)
            bound = max(float(np.max(a0)), 0.0)
            overshoot = float(np.max(a) - bound)
            delta_s0 = float(np.min(init_a.beta - a0))
            floor = min(init_a.beta, delta_s0)
            margin = float(np.min(init_a.beta - a))
            passed = overshoot <= 1e-6 and margin >= floor - 1e-6
            a_ok &= passed
            alpha_rows[f"{init_a.family}:sigma={init_a.sigma:g}"] = {
                "max_alpha0": float(np.max(a0)), "max_alpha": float(np.max(a)), "overshoot": overshoot,
                "margin": margin, "floor": floor, "ok": passed}
    ctx.json("alpha_max_principle.json", alpha_rows)
    ctx.check("alpha_max_principle", a_ok, profiles=alpha_rows)


# ---- smoothing ----------------------------------------------------------------

def exponent_family(spec: GridSpec):
    """Test fields for the exponent fits: x-modes under a smooth y-envelope.

    The gain fits mix t-profiles 1 and t^2; the approximation fit uses
    t^2 only, so the fields vanish to second order at t = 0 where the
    past-shifted kernel reaches outside the slab.
    """
    t, x, y = spec.mesh()
    yenv = np.sin(np.pi * y / spec.y_max) ** 4
    modes = [0, 1, 2, 4, 8, 16]
    gain = [np.broadcast_to(yenv * np.cos(2 * np.pi * k * x / spec.x_len) * te, spec.shape)
            for k in modes for te in (np.ones_like(t), t**2)]
    approx = [np.broadcast_to(yenv * np.cos(2 * np.pi * k * x / spec.x_len) * t**2, spec.shape) for k in modes]
    return gain, approx


def divergence_pair(spec: GridSpec):
    t, x, y = spec.mesh()
    k = 2 * np.pi / spec.x_len
    u = np.broadcast_to(np.cos(k * x) * np.exp(-y), spec.shape)
    v = np.broadcast_to(k * np.sin(k * x) * (1 - np.exp(-y)), spec.shape)
    return u, v


def run_mollify(cfg: RunConfig, ctx: Context):
    st = cfg.study
    spec = GridSpec(129, 64, 129, 2.0, 1.0, 4.0)
    gain, approx = exponent_family(spec)
    rows = {}
    ok = True
    with ctx.phase("exponents"):
        for label, s, a, mode, fam, target in (("gain0", 0, 0, "smooth", gain, 0.0),
                                               ("gain1", 1, 0, "smooth", gain, 1.0),
                                               ("approx", 0, 1, "approx", approx, -1.0)):
            r = measure_operator_exponents(fam, spec, s, a, st.exponent_thetas, mode)
            passed = r["exponent"] <= target + 0.15
            ok &= passed
            rows[label] = {**r, "target": target, "ok": passed}
            ctx.series(f"exponent_{label}.dat", np.log(r["thetas"]), np.log(r["ratios"]), "log_theta", "log_ratio")
    ctx.json("smoothing_exponents.json", rows)
    ctx.check("smoothing_exponents", ok, exponents={k: v["exponent"] for k, v in rows.items()})

    levels = []
    with ctx.phase("divergence"):
        for n in (1, 2, 4):
            sp = GridSpec(9, 32 * n, 64 * n + 1, 0.5, 2 * np.pi, 8.0)
            u, v = divergence_pair(sp)
            res = verify_divergence_preservation(u, v, sp, st.mollify_theta)
            wall = float(np.max(np.abs(S_v(v, sp, st.mollify_theta)[..., 0])))
            levels.append({"n_x": sp.n_x, "n_y": sp.n_y, "residual": res, "bound": 5 * (sp.dx**2 + sp.dy**2),
                           "wall_v": wall})
    ratios = [a["residual"] / b["residual"] for a, b in zip(levels[:-1], levels[1:])]
    d_ok = (all(r["residual"] <= r["bound"] for r in levels) and all(q >= 3 for q in ratios)
            and all(r["wall_v"] <= 1e-12 for r in levels))
    ctx.json("divergence_preservation.json", {"levels": levels, "richardson": ratios})
    ctx.series("divergence_residual.dat", [r["n_y"] for r in levels], [r["residual"] for r in levels],
               "n_y", "divergence_residual")
    ctx.check("structure_preservation", d_ok, richardson=ratios, max_wall_v=max(r["wall_v"] for r in levels))


# ---- linearized -----------------------------------------------------------------

def random_forcing(spec: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """Smooth forcing with random modes, phases and y-bumps; zero at t = 0."""
    t, x, y = spec.mesh()
    out = np.zeros(np.broadcast_shapes(t.shape, x.shape, y.shape))
    for k in (1, 2, 3):
        a, ph = rng.normal(), rng.uniform(0, 2 * np.pi)
        c, w = rng.uniform(0.5, 2.0), rng.uniform(0.5, 1.0)
        out = out + a * np.sin(2 * np.pi * k * x / spec.x_len + ph) * np.exp(-((y - c) / w) ** 2)
    return np.broadcast_to(t * out, spec.shape).copy()


def stability_ratios(cfg: RunConfig, seed: int, levels: int, n_forcings: int) -> list[dict]:
    """max over forcings of |w| / |f~| in the A^0_ell norm at each grid level."""
    init = cfg.shear.init("linearized-mms")
    ell = cfg.iteration.ell
    rng = np.random.default_rng(seed)
    params = [rng.integers(0, 2**32) for _ in range(n_forcings)]
    out = []
    for lev in range(levels):
        m = 2**lev
        spec = GridSpec(10 * m + 1, 8 * m, 40 * m + 1, 0.5, 2 * np.pi, 8.0)
        shear = shear_on_strip(init, spec.y, spec.t)
        us = np.broadcast_to(shear.u_s[:, None, :], spec.shape)
        bg = build_background(Field(spec, us), Field(spec, np.zeros(spec.shape)), shear, init.beta,
                              perturbation=np.zeros(spec.shape))

        def one(p):
            ft = random_forcing(spec, np.random.default_rng(p))
            sol = solve_vorticity(bg, f_tilde=ft, record_energy=False, ell=ell)
            return norm_A(Field(spec, sol.w), 0, ell) / norm_A(Field(spec, ft), 0, ell)

        ratios = parallel_map(one, params)
        out.append({"n_t": spec.n_t, "n_x": spec.n_x, "n_y": spec.n_y, "ratios": ratios, "max_ratio": max(ratios)})
    return out


def run_linearized(cfg: RunConfig, ctx: Context):
    st = cfg.study
    prob = MMSProblem(beta=cfg.shear.beta)
    with ctx.phase("mms-space"):
        sp = space_study(prob, GridSpec(201, 8, 33, 0.5, 2 * np.pi, 8.0), levels=st.mms_levels, n_t=201)
    with ctx.phase("mms-time"):
        tm = time_study(prob, GridSpec(11, 16, 65, 0.5, 2 * np.pi, 8.0), levels=st.mms_levels)
    orders = {"w": sp["order_w"][-1], "u": sp["order_u"][-1], "v": sp["order_v"][-1], "time": tm["order"][-1]}
    ctx.json("mms.json", {"space": sp, "time": tm, "finest_orders": orders})
    ctx.csv("mms_space.csv", ["n_x", "n_y", "err_w", "err_u", "err_v"],
            [(r["n_x"], r["n_y"], r["w"], r["u"], r["v"]) for r in sp["levels"]])
    ctx.series("mms_space_w.dat", [r["n_y"] for r in sp["levels"]], [r["w"] for r in sp["levels"]], "n_y", "max_err_w")
    ctx.series("mms_time.dat", tm["n_t"][1:], tm["differences"], "n_t", "successive_difference")
    ctx.check("linearized_mms", all(v >= 1.8 for v in orders.values()), orders=orders, min_order=1.8)

    with ctx.phase("stability-constant"):
        lv = stability_ratios(cfg, ctx.seed, st.stability_levels, st.stability_forcings)
    maxes = [r["max_ratio"] for r in lv]
    spread = (max(maxes) - min(maxes)) / max(maxes)
    ctx.json("linear_stability.json", {"levels": lv, "relative_spread": spread})
    ctx.series("stability_constant.dat", [r["n_y"] for r in lv], maxes, "n_y", "max_ratio")
    ctx.check("linear_stability_constant", spread < 0.25, relative_spread=spread, max_ratios=maxes)


# ---- Nash-Moser -------------------------------------------------------------------

def _shear_for(cfg: RunConfig, spec: GridSpec, experiment: str, beta: float | None = None):
    init = cfg.shear.init(experiment, beta=beta)
    return shear_on_strip(init, spec.y, spec.t, scheme=cfg.shear.scheme)


def run_nash_moser(cfg: RunConfig, ctx: Context):
    spec = cfg.grid.spec()
    it = cfg.iteration.build()
    with ctx.phase("shear"):
        shear = _shear_for(cfg, spec, "nash-moser")
    with ctx.phase("iteration"):
        rep = nm.run(it, shear, spec, nm.unit_perturbation(spec, shear.beta))
    recs = rep.records
    d = rep.to_dict()
    ctx.json("convergence.json", d)
    keys = ["n", "theta", "dtheta", "residual", "residual_inner", "du_norm", "dv_norm", "e_norm", "f_norm",
            "wall_margin", "min_u_y", "audit_taylor", "audit_taylor_scale", "audit_residual",
            "audit_residual_exact", "defect_norm", "telescoping", "reconstruction", "robin_increment"]
    ctx.csv("convergence.csv", keys, [[r[k] for k in keys] for r in recs])
    ns = [0] + [r["n"] + 1 for r in recs]
    ctx.series("residual_vs_n.dat", ns, [rep.initial_residual] + [r["residual"] for r in recs], "n", "residual")
    ctx.series("margin_vs_n.dat", [r["n"] for r in recs], [r["wall_margin"] for r in recs], "n", "beta_minus_eta")
    fit_rows = [r for r in recs if r["n"] >= 2]
    ctx.series("rate_fit.dat", [np.log(r["theta"] ** (3 - it.k_tilde) * r["dtheta"]) for r in fit_rows],
               [np.log(r["du_norm"]) for r in fit_rows], "log_theta_pow_dtheta", "log_du")

    res = [rep.initial_residual] + [r["residual"] for r in recs]
    monotone = rep.monotone_after
    reached = rep.reduction <= 1e-4
    audit45 = max((r["audit_taylor"] / max(r["audit_taylor_scale"], 1e-300) for r in recs), default=0.0)
    audit412 = max((r["audit_residual"] / max(r["defect_norm"], 1e-300) for r in recs), default=0.0)
    audits_ok = audit45 <= 10 and audit412 <= 10
    robin_ok = rep.robin_relative <= 1e-6
    ctx.check("nash_moser_desk_run", monotone and reached and robin_ok and audits_ok and rep.status != "guard",
              status=rep.status, epsilon=rep.epsilon, monotone_after_2=monotone, reduction=rep.reduction,
              robin_relative=rep.robin_relative,
              robin_relative_full=rep.robin_relative_full, audit_taylor_ratio=audit45, audit_residual_ratio=audit412,
              residuals=res)
    slope = rep.rate_slope
    ctx.check("rate_shape_fit", slope is not None and abs(slope - 1) <= 0.5, slope=slope, window=rep.rate_window)

    sums = nm.schedule_sum_check(it.theta0, it.k_tilde, cfg.study.schedule_j_max)
    for k, v in sums.items():
        ctx.series(f"schedule_ratio_k{k}.dat", range(1, len(v["ratios"]) + 1), v["ratios"], "j", "ratio")
    ctx.json("schedule_sums.json", {str(k): {kk: vv for kk, vv in v.items() if kk != "ratios"} for k, v in sums.items()})
    drift = max(abs(v["drift"]) for v in sums.values())
    ctx.check("schedule_sum_bound", drift < 0.10, max_drift=drift,
              drifts={str(k): v["drift"] for k, v in sums.items()})


def run_stability(cfg: RunConfig, ctx: Context):
    spec = cfg.grid.spec()
    it = cfg.iteration.build()
    it.max_iters = min(it.max_iters, cfg.study.stability_iters)
    with ctx.phase("shear"):
        shear = _shear_for(cfg, spec, "stability")
    with ctx.phase("runs"):
        rep = nm.stability_experiment(it, shear, spec, nm.unit_perturbation(spec, shear.beta),
                                      gaps=tuple(cfg.study.stability_gaps))
    ctx.json("stability.json", rep.to_dict())
    ctx.csv("stability.csv", ["gap", "direct", "linear", "w0_norm", "w0_trace", "constant"],
            [(r.gap, r.direct_difference, r.linear_difference, r.data_norm, r.data_trace_norm, r.constant)
             for r in rep.rows])
    ctx.series("difference_vs_gap.dat", [r.gap for r in rep.rows], [r.direct_difference for r in rep.rows],
               "gap", "difference")
    zero = [r for r in rep.rows if r.gap == 0.0]
    nonzero = [r for r in rep.rows if r.gap > 0]
    same_ok = all(r.direct_difference <= 1e-10 for r in zero)
    half = None
    if len(nonzero) >= 2:
        a, b = nonzero[0], nonzero[1]
        half = (b.direct_difference / a.direct_difference) / (b.gap / a.gap)
    half_ok = half is not None and abs(half - 1) <= 0.2
    ctx.check("uniqueness_stability", same_ok and half_ok, identical_difference=[r.direct_difference for r in zero],
              halving_ratio_normalized=half)


def run_dirichlet(cfg: RunConfig, ctx: Context):
    spec = cfg.grid.spec()
    st = cfg.study
    it = cfg.iteration.build()
    it.max_iters = min(it.max_iters, st.dirichlet_iters)
    it.k0 = st.dirichlet_k0
    it.max_backoff = st.dirichlet_max_backoff
    with ctx.phase("sweep"):
        out = nm.dirichlet_limit_sweep(it, spec, st.dirichlet_betas, lambda b: _shear_for(cfg, spec, "dirichlet-limit", b))
    ctx.json("dirichlet_limit.json", out)
    ctx.series("trace_vs_beta.dat", np.log([r["beta"] for r in out["rows"]]),
               np.log([r["trace_per_eps"] for r in out["rows"]]), "log_beta", "log_trace_per_eps")
    ctx.check("dirichlet_limit_scaling", abs(out["slope"] + 0.5) <= 0.1, slope=out["slope"])


# ---- norms audit ----------------------------------------------------------------------

def norm_oracles(spec: GridSpec):
    """(label, computed, oracle) triples; oracles use adaptive quadrature on the exact integrands."""
    from scipy import integrate

    T, L, Y = spec.t_max, spec.x_len, spec.y_max
    out = []
    f = Field.from_function(spec, lambda t, x, y: np.broadcast_to(1.0 / (1 + y**2), np.broadcast_shapes(t.shape, x.shape, y.shape)))
    oracle = np.sqrt(T * L * integrate.quad(lambda y: (1 + y**2) ** -2 * (1 + y**2), 0, Y, epsabs=1e-13)[0])
    out.append(("jy^-2,k=0,l=1", norm_A(f, 0, 1.0), oracle))

    k = 2 * np.pi / L
    g = Field.from_function(spec, lambda t, x, y: (1 + t) * np.sin(k * x) * np.exp(-y))
    pairs = index_set(1)
    # every derivative keeps the e^{-y} and sin/cos factors, so each term is
    # (t-integral) * (x-average 1/2) * L * int e^{-2y}; d_t of (1+t) is 1
    base = integrate.quad(lambda y: np.exp(-2 * y), 0, Y, epsabs=1e-14)[0] * L / 2
    t2 = ((1 + T) ** 3 - 1) / 3
    comps = {(0, 0): t2, (1, 0): t2 * k**2 + T, (0, 1): t2, (0, 2): t2}
    total = sum(comps[p] for p in pairs if p in comps) * base
    out.append(("(1+t)sin(kx)e^-y,k=1,l=0", norm_A(g, 1, 0.0), np.sqrt(total)))

    tr = Field(spec, np.broadcast_to((1 + spec.t)[:, None, None] * np.sin(k * spec.x)[None, :, None],
                                     (spec.n_t, spec.n_x, 1)).copy(), "boundary")
    out.append(("trace (1+t)sin(kx),k=0", norm_boundary_A(tr, 0), np.sqrt(t2 * L / 2)))
    return out, pairs


def run_norms(cfg: RunConfig, ctx: Context):
    spec = GridSpec(101, 128, 801, cfg.grid.t_max, 2 * np.pi, 20.0)
    tables = {str(k): [list(p) for p in index_set(k)] for k in range(4)}
    ctx.json("index_sets.json", tables)
    with ctx.phase("oracles"):
        rows, pairs = norm_oracles(spec)
    out = []
    ok = True
    for label, comp, ref in rows:
        rel = abs(comp - ref) / abs(ref)
        ok &= rel <= 1e-3
        out.append({"case": label, "computed": comp, "oracle": ref, "relative_error": rel})
    ctx.json("norm_oracles.json", {"cases": out, "k1_pairs": [list(p) for p in pairs], "tol": 1e-3})
    ctx.csv("norm_oracles.csv", ["case", "computed", "oracle", "relative_error"],
            [(r["case"], r["computed"], r["oracle"], r["relative_error"]) for r in out])
    ctx.check("norms_audit", ok, cases=out)


RUNNERS = {
    "shear": run_shear,
    "mollify": run_mollify,
    "linearized-mms": run_linearized,
    "nash-moser": run_nash_moser,
    "stability": run_stability,
    "dirichlet-limit": run_dirichlet,
    "norms-audit": run_norms,
}

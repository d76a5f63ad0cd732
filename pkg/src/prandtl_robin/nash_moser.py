"""Nash-Moser iteration for the Prandtl system with a Robin wall.

Unknowns are perturbations of the shear: u = u^s + P, v = V.  Each step
mollifies the current iterate, solves the linearized problem around it with
the force f^n from the telescoping recursion, and records the quadratic and
smoothing errors

    e_n = e_n^(1) + e_n^(2),
    e_n^(1) = du du_x + dv du_y,
    e_n^(2) = r du_x + du r_x + q du_y + dv r_y,   r = (1 - S^u) P, q = (1 - S^v) V,

so that P(u + du) - P(u) - P'_{u_theta}(du) = e_n holds exactly at the
discrete level (e^(2) is the product-rule expansion of the flux form).
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from math import comb, factorial

import numpy as np

from . import operators as ops
from .errors import ConfigError, GridError, MonotonicityError
from .grid import Field, GridSpec, cumulative_from_zero, diff1, diff_high, diff_periodic
from .linearized import build_background, initial_from_u, solve_case_I, solve_case_II
from .norms import norm_A, norm_boundary_A
from .shear import ShearProfile, compatible_profile
from .smoothing import Mollifier, S, S_u, S_v

log = logging.getLogger(__name__)


def theta_schedule(theta0: float, n) -> np.ndarray:
    return np.sqrt(theta0**2 + np.asarray(n, dtype=float))


def delta_theta(theta0: float, n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    return theta_schedule(theta0, n + 1) - theta_schedule(theta0, n)


@dataclass
class IterationConfig:
    theta0: float = 10.0
    k_tilde: int = 7
    k0: int = 2
    epsilon: float = 1e-2
    delta: float = 0.05
    max_iters: int = 30
    residual_tol: float = 1e-4
    norm_k: int = 0
    ell: float = 1.0
    shift_t: int = -1
    stall_window: int = 5
    max_backoff: int = 3

    def validate(self, spec: GridSpec | None = None, resolve: bool = True):
        if self.theta0 < 3:
            raise ConfigError(f"iteration.theta0 = {self.theta0} is below the admissible band (theta0 >= 3)")
        if self.k0 < 0 or self.k_tilde < 0 or self.norm_k < 0:
            raise ConfigError("iteration.k0, k_tilde and norm_k must be non-negative")
        if not self.epsilon > 0:
            raise ConfigError("iteration.epsilon must be positive")
        if self.max_iters < 1:
            raise ConfigError("iteration.max_iters must be at least 1")
        if self.shift_t not in (-1, 0, 1):
            raise ConfigError("iteration.shift_t must be -1, 0 or 1")
        if spec is None:
            return
        if spec.n_y < 2 * self.k0 + 4:
            raise GridError(f"n_y = {spec.n_y} cannot resolve the 2*k0 = {2 * self.k0} y-derivatives "
                            f"of the zeroth-order solution (need n_y >= {2 * self.k0 + 4})")
        if not resolve:
            return
        worst = max(spec.dt, spec.dx, spec.dy)
        last = float(theta_schedule(self.theta0, self.max_iters))
        if 1.0 / last < 2 * worst - 1e-12:
            raise ConfigError(f"theta_{self.max_iters} = {last:.4g} is not resolved: 1/theta must be at least "
                              f"twice the largest spacing {worst:.4g}")


# ---- zeroth-order approximate solution ------------------------------------

def zeroth_order(shear: ShearProfile, p0: np.ndarray, k0: int, spec: GridSpec):
    """Taylor polynomial in t of the perturbation, its v, and f^a = P(u^0, v^0).

    Time derivatives at t = 0 come from the equation itself (Leibniz rule),
    with d_t^m u^s = d_y^{2m} u^s_0.  y-derivatives use wide high-order
    stencils: the second-order wall stencil applied twice leaves O(1)
    node-to-node noise at the wall, which would land in f^a.  x-derivatives
    use the same periodic stencil as the residual.  Coefficients of order
    j >= 1 are tapered to zero over the top half of the strip, where the
    truncated shear is not smooth and its derivatives are pure noise.
    """
    if spec.n_y < 2 * k0 + 4:
        raise GridError(f"n_y = {spec.n_y} too small for 2*k0 = {2 * k0} y-derivatives")
    p0 = np.asarray(p0, dtype=float).reshape(spec.n_x, spec.n_y)
    dx, dy = spec.dx, spec.dy
    us = [shear.u_s[0][None, :]]
    for _ in range(k0):
        us.append(diff_high(us[-1], dy, 2))
    us_y = [diff_high(a, dy, 1) for a in us]

    def vel(p):
        return -cumulative_from_zero(diff_periodic(p, dx, axis=0), dy, axis=1)

    taper = far_field_taper(spec.y)[None, :]
    P = [p0]
    V = [vel(p0)]
    for j in range(1, k0 + 1):
        acc = diff_high(P[j - 1], dy, 2)
        for m in range(j):
            c = comb(j - 1, m)
            Um = us[m] + P[m]
            acc = acc - c * (Um * diff_periodic(P[j - 1 - m], dx, axis=0)
                             + V[m] * (us_y[j - 1 - m] + diff_high(P[j - 1 - m], dy, 1)))
        acc = acc * taper
        P.append(acc)
        V.append(vel(acc))
    tt = spec.t[:, None, None]
    u0 = sum(tt**j / factorial(j) * P[j][None] for j in range(k0 + 1))
    v0 = sum(tt**j / factorial(j) * V[j][None] for j in range(k0 + 1))
    fa = ops.prandtl_residual(u0, v0, shear, spec)
    return u0, v0, fa, P


def far_field_taper(y, start: float = 0.5, stop: float = 0.9) -> np.ndarray:
    """Smooth step: 1 below start*Y_max, 0 above stop*Y_max."""
    y = np.asarray(y, dtype=float)
    s = np.clip((y / y[-1] - start) / (stop - start), 0.0, 1.0)
    a = np.where(s < 1, np.exp(-1.0 / np.maximum(1 - s, 1e-300)), 0.0)
    b = np.where(s > 0, np.exp(-1.0 / np.maximum(s, 1e-300)), 0.0)
    return a / (a + b)


def initial_perturbation(spec: GridSpec, beta: float, epsilon: float, width: float = 1.0, mode: int = 1):
    """eps * cos(2 pi mode x / L) * b(y) with b Robin-compatible to every order."""
    b = compatible_profile(spec.y, beta, width)
    a = np.cos(2 * np.pi * mode * spec.x / spec.x_len)
    return epsilon * a[:, None] * b[None, :]


# ---- iteration ------------------------------------------------------------

@dataclass
class IterationState:
    n: int
    theta_n: float
    spec: GridSpec
    shear: ShearProfile
    p: np.ndarray          # accumulated perturbation u^n - u^s
    v: np.ndarray
    f_a: np.ndarray
    u0_pert: np.ndarray
    v0: np.ndarray
    delta_u: np.ndarray | None = None
    delta_v: np.ndarray | None = None
    e_history: list = field(default_factory=list)
    f_history: list = field(default_factory=list)
    du_sum: np.ndarray | None = None
    defect_sum: np.ndarray | None = None
    residual_history: list = field(default_factory=list)
    norm_history: list = field(default_factory=list)

    def reconstruction_error(self) -> float:
        """|u^n - (u^s + u~^0 + sum du^j)|, zero up to round-off."""
        ref = self.u0_pert + (self.du_sum if self.du_sum is not None else 0.0)
        return float(np.max(np.abs(self.p - ref)))


def mollify_background(state: IterationState, theta: float, shift_t: int = -1):
    """(S^u P, S^v V): the smoothed perturbation and smoothed v."""
    Mollifier(theta).check_resolvable(state.spec)
    return S_u(state.p, state.spec, theta, shift_t), S_v(state.v, state.spec, theta, shift_t)


def force_update(state: IterationState, theta_n: float, theta_prev: float | None, shift_t: int = -1) -> np.ndarray:
    """f^n from the telescoping recursion (n = 0, 1 and n >= 2 share one formula)."""
    spec, n = state.spec, state.n
    if n == 0:
        return -S(state.f_a, spec, theta_n, shift_t)
    e = state.e_history
    older = sum(e[:-1]) if n >= 2 else np.zeros(spec.shape)
    d_older = S(older, spec, theta_prev, shift_t) - S(older, spec, theta_n, shift_t) if n >= 2 else 0.0
    d_fa = S(state.f_a, spec, theta_prev, shift_t) - S(state.f_a, spec, theta_n, shift_t)
    return d_older - S(e[-1], spec, theta_n, shift_t) + d_fa


def _norm(a, spec, ell, k=0):
    return norm_A(Field(spec, a), k, ell)


def _robin(a, spec, beta):
    """Wall Robin residual of a with a third-order one-sided derivative."""
    a_y = (-11 * a[..., 0] + 18 * a[..., 1] - 9 * a[..., 2] + 2 * a[..., 3]) / (6 * spec.dy)
    return a_y - beta * a[..., 0]


def iterate_once(state: IterationState, cfg: IterationConfig) -> dict:
    """One Nash-Moser step; mutates state and returns the step record."""
    spec, shear, beta = state.spec, state.shear, state.shear.beta
    n = state.n
    theta = float(theta_schedule(cfg.theta0, n))
    theta_prev = float(theta_schedule(cfg.theta0, n - 1)) if n >= 1 else None
    pth, vth = mollify_background(state, theta, cfg.shift_t)
    us = shear.u_s[:, None, :]
    bg = build_background(Field(spec, us + pth), Field(spec, vth), shear, beta,
                          perturbation=pth, delta_floor=cfg.delta)
    fn = force_update(state, theta, theta_prev, cfg.shift_t)
    sol = solve_case_I(bg, fn, record_energy=False, ell=cfg.ell)
    du, dv = sol.u, sol.v

    lin_bg = ops.background(pth, vth, shear, spec)
    lin = ops.linearized_operator(du, dv, lin_bg, spec)
    r = state.p - pth
    q = state.v - vth
    du_t, du_x, du_y, _ = ops.derivs(du, spec)
    r_x = diff_periodic(r, spec.dx, axis=1)
    r_y = diff1(r, spec.dy, axis=2)
    e1 = du * du_x + dv * du_y
    e2 = r * du_x + du * r_x + q * du_y + dv * r_y
    e = e1 + e2

    res_old = ops.prandtl_residual(state.p, state.v, shear, spec)
    e_before = list(state.e_history)
    state.p = state.p + du
    state.v = state.v + dv
    state.du_sum = du if state.du_sum is None else state.du_sum + du
    defect = lin - fn
    state.defect_sum = defect if state.defect_sum is None else state.defect_sum + defect
    state.delta_u, state.delta_v = du, dv
    state.e_history.append(e)
    state.f_history.append(fn)
    res_new = ops.prandtl_residual(state.p, state.v, shear, spec)

    ell = cfg.ell
    audit45 = _norm(res_new - res_old - lin - e, spec, ell)
    smoothed = state.f_a + (sum(e_before) if e_before else 0.0)
    pred = e + smoothed - S(smoothed, spec, theta, cfg.shift_t)
    audit412 = _norm(res_new - pred, spec, ell)
    defect_norm = _norm(state.defect_sum, spec, ell)
    audit412_exact = _norm(res_new - pred - state.defect_sum, spec, ell)
    tele = sum(state.f_history) + S(smoothed, spec, theta, cfg.shift_t)
    res_norm = _norm(res_new, spec, ell, cfg.norm_k)
    inner = np.s_[:, :, 2:]
    rec = {
        "n": n, "theta": theta, "dtheta": float(delta_theta(cfg.theta0, n)),
        "du_norm": _norm(du, spec, ell), "dv_norm": _norm(dv, spec, ell),
        "e_norm": _norm(e, spec, ell), "e1_norm": _norm(e1, spec, ell), "e2_norm": _norm(e2, spec, ell),
        "f_norm": _norm(fn, spec, ell),
        "residual": res_norm,
        "residual_inner": float(np.sqrt(np.sum(res_new[inner] ** 2) * spec.dt * spec.dx * spec.dy)),
        "defect_norm": defect_norm,
        "audit_taylor": audit45, "audit_taylor_scale": _norm(defect, spec, ell),
        "audit_residual": audit412, "audit_residual_exact": audit412_exact,
        "telescoping": float(np.max(np.abs(tele))),
        "wall_margin": bg.delta, "min_u_y": bg.min_u_y,
        "robin_increment": float(np.max(np.abs(_robin(du, spec, beta)))),
        "reconstruction": state.reconstruction_error(),
    }
    state.residual_history.append(res_norm)
    state.norm_history.append(rec)
    state.n += 1
    state.theta_n = float(theta_schedule(cfg.theta0, state.n))
    return rec


@dataclass
class ConvergenceReport:
    status: str
    epsilon: float
    initial_residual: float
    records: list
    final_residual: float
    robin_relative: float      # wall Robin residual of u - u^s over max |u - u^s|
    robin_relative_full: float  # the same over max |beta u| at the wall
    rate_slope: float | None = None
    rate_window: tuple | None = None
    message: str = ""
    elapsed: float = 0.0
    state: IterationState | None = field(default=None, repr=False)

    @property
    def reduction(self) -> float:
        return self.final_residual / self.initial_residual if self.initial_residual > 0 else 0.0

    @property
    def monotone_after(self) -> bool:
        """Residual strictly decreasing from n = 2 on."""
        r = [self.initial_residual] + [rec["residual"] for rec in self.records]
        tail = r[2:]
        return all(b < a for a, b in zip(tail[:-1], tail[1:]))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "state"}
        d["reduction"] = self.reduction
        d["monotone_after_2"] = self.monotone_after
        return d


def rate_fit(records, k_tilde: int, start: int = 2):
    """Slope of log |du^n| against log(theta_n^(3 - k~) dtheta_n) over n >= start."""
    rows = [r for r in records if r["n"] >= start and r["du_norm"] > 0]
    if len(rows) < 3:
        return None, None
    xs = np.log([r["theta"] ** (3 - k_tilde) * r["dtheta"] for r in rows])
    ys = np.log([r["du_norm"] for r in rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    return slope, (rows[0]["n"], rows[-1]["n"])


def start_state(cfg: IterationConfig, shear: ShearProfile, spec: GridSpec, p0: np.ndarray) -> IterationState:
    u0, v0, fa, _ = zeroth_order(shear, p0, cfg.k0, spec)
    return IterationState(n=0, theta_n=cfg.theta0, spec=spec, shear=shear, p=u0.copy(), v=v0.copy(),
                          f_a=fa, u0_pert=u0, v0=v0)


def run(cfg: IterationConfig, shear: ShearProfile, spec: GridSpec, p0_unit: np.ndarray) -> ConvergenceReport:
    """Iterate from u^s_0 + eps * p0_unit; halves eps if the guard fails at n = 0."""
    cfg.validate(spec)
    eps = cfg.epsilon
    for attempt in range(cfg.max_backoff + 1):
        try:
            return _run(cfg, shear, spec, eps * np.asarray(p0_unit), eps)
        except MonotonicityError as exc:
            if getattr(exc, "_at_start", False) and attempt < cfg.max_backoff:
                log.warning("guard failed at n = 0 with eps = %.3g; halving", eps)
                eps /= 2
                continue
            raise
    raise AssertionError("unreachable")


def _run(cfg, shear, spec, p0, eps) -> ConvergenceReport:
    t0 = time.perf_counter()
    state = start_state(cfg, shear, spec, p0)
    res0 = _norm(state.f_a, spec, cfg.ell, cfg.norm_k)
    records = []
    status, message = "max_iters", ""
    if res0 == 0.0:
        status = "converged"
    else:
        rising = 0
        for _ in range(cfg.max_iters):
            try:
                rec = iterate_once(state, cfg)
            except MonotonicityError as exc:
                if state.n == 0:
                    exc._at_start = True
                    raise
                status, message = "guard", str(exc)
                break
            records.append(rec)
            log.info("n=%d theta=%.4f residual=%.3e |du|=%.3e margin=%.3g", rec["n"], rec["theta"],
                     rec["residual"], rec["du_norm"], rec["wall_margin"])
            prev = records[-2]["residual"] if len(records) > 1 else res0
            rising = rising + 1 if rec["residual"] >= prev else 0
            if rec["residual"] < cfg.residual_tol * res0:
                status = "converged"
                break
            if rising >= cfg.stall_window:
                status, message = "stalled", f"residual did not decrease for {rising} consecutive steps"
                break
    final = records[-1]["residual"] if records else res0
    total = state.p
    scale = float(np.max(np.abs(total))) or 1.0
    robin_abs = float(np.max(np.abs(_robin(total, spec, shear.beta))))
    robin_rel = robin_abs / scale
    full_scale = float(np.max(np.abs(shear.beta * (shear.u_s[:, None, 0] + total[:, :, 0])))) or 1.0
    slope, window = rate_fit(records, cfg.k_tilde)
    return ConvergenceReport(status=status, epsilon=eps, initial_residual=res0, records=records,
                             final_residual=final, robin_relative=robin_rel,
                             robin_relative_full=robin_abs / full_scale, rate_slope=slope,
                             rate_window=window, message=message, elapsed=time.perf_counter() - t0,
                             state=state)


# ---- schedule sums --------------------------------------------------------

def schedule_sum_check(theta0: float, k_tilde: int, j_max: int = 200, delta_theta_exp: float = 0.1) -> dict:
    """sum_{m<j} theta_m^(k-k~) dtheta_m / theta_j^max(k+1-k~+d, 0) for k = k~-3 .. k~+1.

    The bound constant is the running supremum C_j of the ratio; drift
    compares C at j_max and j_max / 2.
    """
    out = {}
    m = np.arange(j_max)
    th = theta_schedule(theta0, m)
    dth = delta_theta(theta0, m)
    j = np.arange(1, j_max + 1)
    thj = theta_schedule(theta0, j)
    for k in range(k_tilde - 3, k_tilde + 2):
        sums = np.cumsum(th ** (k - k_tilde) * dth)
        ratio = sums / thj ** max(k + 1 - k_tilde + delta_theta_exp, 0.0)
        sup = np.maximum.accumulate(ratio)
        half = sup[j_max // 2 - 1]
        drift = float((sup[-1] - half) / sup[-1])
        out[k] = {"ratio_last": float(ratio[-1]), "sup": float(sup[-1]), "sup_half": float(half),
                  "drift": drift, "ratios": ratio.tolist()}
    return out


# ---- stability of the solution map -----------------------------------------

@dataclass
class StabilityRow:
    gap: float
    direct_difference: float   # |u^1 - u^2| in the A^0_ell norm, from two full runs
    linear_difference: float   # Case II solution of the difference system around the midpoint
    data_norm: float           # L^2 norm of w_0
    data_trace_norm: float     # L^2 norm of w_0 at the wall
    constant: float            # direct / (data_norm + data_trace_norm)


@dataclass
class StabilityReport:
    epsilon: float
    rows: list
    runs: dict

    def ratio(self, a: int = 0, b: int = 1) -> float:
        """direct difference of row b over row a."""
        da, db = self.rows[a].direct_difference, self.rows[b].direct_difference
        return db / da if da > 0 else float("nan")

    def to_dict(self):
        return {"epsilon": self.epsilon, "rows": [asdict(r) for r in self.rows], "runs": self.runs}


def _difference_row(cfg, shear, spec, s1: IterationState, s2: IterationState, gap: float) -> StabilityRow:
    diff = s1.p - s2.p
    direct = _norm(diff, spec, cfg.ell)
    if gap == 0.0:
        return StabilityRow(0.0, direct, 0.0, 0.0, 0.0, 0.0)
    mid_p = 0.5 * (s1.p + s2.p)
    mid_v = 0.5 * (s1.v + s2.v)
    us = shear.u_s[:, None, :]
    bg = build_background(Field(spec, us + mid_p), Field(spec, mid_v), shear, shear.beta,
                          perturbation=mid_p, delta_floor=0.0)
    w0, wtop0 = initial_from_u(diff[0], bg)
    sol = solve_case_II(bg, w0, w_top0=wtop0, record_energy=False, ell=cfg.ell)
    lin = _norm(sol.u, spec, cfg.ell)
    w0_norm = float(np.sqrt(np.sum(w0**2) * spec.dx * spec.dy))
    trace = float(np.sqrt(np.sum(w0[:, 0] ** 2) * spec.dx))
    return StabilityRow(gap, direct, lin, w0_norm, trace, direct / (w0_norm + trace))


def stability_experiment(cfg: IterationConfig, shear: ShearProfile, spec: GridSpec, p_unit: np.ndarray,
                         gaps=(0.0, 2e-3, 1e-3)) -> StabilityReport:
    """Runs from u^s_0 + eps p_unit and u^s_0 + (eps + g) p_unit for each gap g.

    The base run is shared.  Each difference is also compared with the Case II
    solution of the difference system linearized around the midpoint, whose
    initial vorticity is 2 d_y((u^1 - u^2) / d_y(u^1 + u^2)).
    """
    cfg.validate(spec)
    eps = cfg.epsilon
    p_unit = np.asarray(p_unit, dtype=float)
    base = _run(cfg, shear, spec, eps * p_unit, eps)
    runs = {"base": base.to_dict()}
    rows = []
    for g in gaps:
        other = base if g == 0.0 else _run(cfg, shear, spec, (eps + g) * p_unit, eps + g)
        if g != 0.0:
            runs[f"gap={g:g}"] = other.to_dict()
        rows.append(_difference_row(cfg, shear, spec, other.state, base.state, float(g)))
    return StabilityReport(eps, rows, runs)


# ---- Dirichlet limit --------------------------------------------------------

def wall_trace_norm(state: IterationState) -> float:
    """A^0 norm of (u - u^s) at y = 0."""
    return norm_boundary_A(Field(state.spec, state.p[:, :, :1], "boundary"), 0)


def unit_perturbation(spec: GridSpec, beta: float, width: float = 1.0, mode: int = 1) -> np.ndarray:
    """Robin-compatible perturbation scaled to unit maximum."""
    p = initial_perturbation(spec, beta, 1.0, width, mode)
    return p / np.max(np.abs(p))


def dirichlet_limit_sweep(cfg: IterationConfig, spec: GridSpec, betas, shear_factory) -> dict:
    """Wall trace of u - u^s after the iteration, for each beta.

    shear_factory(beta) returns a ShearProfile on spec.  Data are the unit
    compatible perturbation for that beta, scaled by eps.  The guard forces
    eps down as beta grows (u^s at the wall is O(1/beta) while the even
    extension moves the mollified trace by O(eps/theta)), so the fitted
    quantity is the trace per unit eps.
    """
    rows = []
    for beta in betas:
        shear = shear_factory(beta)
        rep = run(cfg, shear, spec, unit_perturbation(spec, beta))
        tr = wall_trace_norm(rep.state)
        rows.append({"beta": float(beta), "trace_norm": tr, "trace_per_eps": tr / rep.epsilon,
                     "status": rep.status,
                     "epsilon": rep.epsilon, "iterations": len(rep.records),
                     "final_residual": rep.final_residual})
        log.info("beta=%g trace=%.4e status=%s", beta, rows[-1]["trace_norm"], rep.status)
    b = np.log([r["beta"] for r in rows])
    tr = np.log([r["trace_per_eps"] for r in rows])
    slope = float(np.polyfit(b, tr, 1)[0]) if len(rows) >= 2 else float("nan")
    return {"rows": rows, "slope": slope}

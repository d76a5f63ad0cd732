"""Linearized Prandtl problem in vorticity-like variables.

With w = (u / u~_y)_y the linearized equation around (u~, v~) loses the
v-coupling and becomes a scalar parabolic equation for w with a nonlocal
term and a dynamic (Wentzell-type) wall condition:

  interior:  w_t + (u~ w)_x + (v~ w)_y - 2 (eta w)_y - (zeta W)_y - w_yy = (f~)_y
  wall:      w_t + (u~ w)_x - g (w_y + 2 eta w + zeta W + f~) + w zeta~ / g = 0

where W = -u / u~_y, g = beta - eta at y = 0, eta = u~_yy / u~_y,
zeta = ((d_t + u~ d_x + v~ d_y - d_yy) u~_y) / u~_y, zeta~ = eta_t + u~ eta_x
at the wall, and f~ = f / u~_y.  The velocity is recovered by
u = -u~_y W and v = -int_0^y u_x.

On the truncated strip W is not int_y^Y w: v does not vanish at Y_max, so
u / u~_y tends to a function of (t, x) rather than to zero.  We write
W = int_y^Y w + W_top(t, x) and evolve W_top with the undifferentiated
equation at y = Y_max (where w = 0):

  W_top_t + (u~ W_top)_x + zeta W_top = v(Y_max) - w_y - f~.

Without this closure the y-derivative of the equation holds but the
equation itself is off by a y-independent function.

Time stepping is IMEX: every local term is implicit (BDF2, first step
backward Euler).  The nonlocal term (zeta W)_y is extrapolated explicitly;
the top row, whose v(Y_max) coupling is a single integral per column, is
implicit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import splu

from .errors import ConfigError, GridError, MonotonicityError, NumericalError
from .grid import (Field, GridSpec, cumulative_from_zero, cumulative_tail, diff1, diff2, diff3,
                   diff_periodic, trapezoid_weights)
from .norms import japanese

log = logging.getLogger(__name__)


@dataclass
class BackgroundState:
    spec: GridSpec
    beta: float
    u_tilde: Field
    v_tilde: Field
    u_y: np.ndarray
    u_yy: np.ndarray
    eta: Field
    eta_bar: Field
    zeta: Field
    zeta_tilde: Field
    zeta1_tilde: Field
    zeta2_tilde: Field
    delta: float
    c_eta: float
    min_u: float = 0.0
    min_u_y: float = 0.0

    @property
    def wall_gap(self) -> np.ndarray:
        """beta - eta at y = 0, shape (n_t, n_x)."""
        return self.beta - self.eta.values[:, :, 0]


def build_background(u_tilde, v_tilde, shear, beta: float, *, perturbation=None,
                     delta_floor: float = 0.0, exact_shear: bool = True) -> BackgroundState:
    """Coefficient fields of the transformed problem around (u~, v~).

    u~ is split as u^s + p.  Pass p as ``perturbation`` to keep the
    far-field precision; otherwise it is formed as u~ - u^s.  With
    shear=None there is no split and zeta~_1 is zero.  With
    exact_shear the shear's own heat residual (zero analytically) is left
    out of zeta.  Raises MonotonicityError when u~ or u~_y is not positive
    or when beta - eta at the wall drops below delta_floor.
    """
    ut = u_tilde.values if isinstance(u_tilde, Field) else np.asarray(u_tilde, dtype=float)
    vt = v_tilde.values if isinstance(v_tilde, Field) else np.asarray(v_tilde, dtype=float)
    spec = u_tilde.spec if isinstance(u_tilde, Field) else None
    if spec is None:
        raise GridError("u_tilde must be a Field")
    if shear is None:
        # no shear split: every derivative of u~ comes from stencils
        zeros = np.zeros((spec.n_t, 1, spec.n_y))
        us = sh_y = sh_yy = sh_yt = sh_yyt = zeros
        p = ut
    else:
        if shear.deficit.shape != (spec.n_t, spec.n_y):
            raise GridError("shear profile is not sampled on the background grid")
        us, sh_y, sh_yy = shear.u_s[:, None, :], shear.u_y[:, None, :], shear.u_yy[:, None, :]
        sh_yt, sh_yyt = shear.u_yt[:, None, :], shear.u_yyt[:, None, :]
        p = ut - us if perturbation is None else np.asarray(perturbation, dtype=float)
    dt, dx, dy = spec.dt, spec.dx, spec.dy

    p_y = _diff1_sharp_ends(p, dy)
    p_yy = diff2(p, dy, axis=2)
    uy = sh_y + p_y
    uyy = sh_yy + p_yy
    u_full = np.broadcast_to(us, spec.shape) + p
    min_u_y = float(np.min(uy))
    if min_u_y <= 0:
        node = np.unravel_index(np.argmin(uy), uy.shape)
        raise MonotonicityError(f"u~_y is not positive at node {node} (value {min_u_y:.3e})", node, min_u_y)
    min_u = float(np.min(u_full[:, :, 0]))
    if min_u <= 0:
        raise MonotonicityError(f"u~ is not positive at the wall (min {min_u:.3e})", None, min_u)

    eta = uyy / uy
    eta_bar = sh_yy / uy

    # (d_t + u d_x + v d_y - d_yy) u_y
    p_yt = diff1(p_y, dt, axis=0)
    p_yyy = diff3(p, dy, axis=2)
    num = p_yt - p_yyy + u_full * diff_periodic(p_y, dx, axis=1) + vt * uyy
    if shear is not None and not exact_shear:
        num = num + sh_yt - diff1(sh_yy, dy, axis=2)  # wall row reuses the ghost-consistent u_yy
    zeta = num / uy

    # wall coefficient zeta~ = (u_yyt + u u_yyx - eta (u_yt + u u_yx)) / u_y at y = 0
    uy0, uyy0, u0, eta0 = uy[:, :, 0], uyy[:, :, 0], u_full[:, :, 0], eta[:, :, 0]
    uyt0 = diff1(uy0, dt, axis=0)
    uyyt0 = diff1(uyy0, dt, axis=0)
    uyx0 = diff_periodic(uy0, dx, axis=1)
    uyyx0 = diff_periodic(uyy0, dx, axis=1)
    zt = (uyyt0 + u0 * uyyx0 - eta0 * (uyt0 + u0 * uyx0)) / uy0
    eb0 = eta_bar[:, :, 0]
    zt1 = (sh_yyt[:, :, 0] - eb0 * sh_yt[:, :, 0]) / uy0
    zt2 = zt - zt1

    gap = beta - eta0
    delta = float(np.min(gap))
    if delta < delta_floor:
        node = np.unravel_index(np.argmin(gap), gap.shape)
        raise MonotonicityError(
            f"wall margin beta - eta = {delta:.4g} below floor {delta_floor:.4g} at (t, x) index {node}",
            node, delta)

    def bnd(a):
        return Field(spec, a[:, :, None], "boundary")

    return BackgroundState(
        spec=spec, beta=float(beta),
        u_tilde=Field(spec, u_full), v_tilde=Field(spec, vt),
        u_y=uy, u_yy=uyy,
        eta=Field(spec, eta), eta_bar=Field(spec, eta_bar), zeta=Field(spec, zeta),
        zeta_tilde=bnd(zt), zeta1_tilde=bnd(zt1), zeta2_tilde=bnd(zt2),
        delta=delta, c_eta=float(np.max(np.abs(eta))), min_u=min_u, min_u_y=min_u_y,
    )


def _diff1_sharp_ends(a: np.ndarray, h: float) -> np.ndarray:
    """d/dy with third-order one-sided end stencils.

    u = -u~_y W puts the wall error of u~_y straight into u; an O(h^2) end
    error would become O(1) under the second difference at the next node.
    """
    out = diff1(a, h, axis=2)
    out[..., 0] = (-11 * a[..., 0] + 18 * a[..., 1] - 9 * a[..., 2] + 2 * a[..., 3]) / (6 * h)
    out[..., -1] = (11 * a[..., -1] - 18 * a[..., -2] + 9 * a[..., -3] - 2 * a[..., -4]) / (6 * h)
    return out


@dataclass
class VorticitySolution:
    spec: GridSpec
    w: np.ndarray
    w_top: np.ndarray  # (n_t, n_x), W at y = Y_max
    u: np.ndarray
    v: np.ndarray
    energy_log: list = field(default_factory=list)

    @property
    def w_boundary(self) -> Field:
        return Field(self.spec, self.w[:, :, :1], "boundary")

    def fields(self):
        return Field(self.spec, self.w), Field(self.spec, self.u), Field(self.spec, self.v)


def potential(w: np.ndarray, spec: GridSpec, w_top=None) -> np.ndarray:
    """W = int_y^Y w + W_top."""
    W = cumulative_tail(np.asarray(w, dtype=float), spec.dy, axis=-1)
    if w_top is not None:
        W = W + np.asarray(w_top)[..., None]
    return W


def recover_u(w: np.ndarray, bg: BackgroundState, w_top=None) -> np.ndarray:
    """u = -u~_y W."""
    return -bg.u_y * potential(w, bg.spec, w_top)


def recover_v(u: np.ndarray, spec: GridSpec) -> np.ndarray:
    """v = -int_0^y u_x, so v = 0 at the wall exactly."""
    return -cumulative_from_zero(diff_periodic(np.asarray(u, dtype=float), spec.dx, axis=1), spec.dy, axis=2)


def trace_identity_residual(u: np.ndarray, w: np.ndarray, bg: BackgroundState) -> float:
    """max |u - u~_y w / (beta - eta)| at the wall."""
    pred = bg.u_y[:, :, 0] * w[:, :, 0] / bg.wall_gap
    return float(np.max(np.abs(u[:, :, 0] - pred)))


def initial_from_u(u0: np.ndarray, bg: BackgroundState):
    """(w0, W_top0) for initial velocity u0 on the first time slice."""
    s = bg.spec
    phi = np.asarray(u0, dtype=float) / bg.u_y[0]
    w0 = diff1(phi, s.dy, axis=-1)
    w0[:, -1] = 0.0
    return w0, -phi[:, -1]


class _Operator:
    """Local part of the w-system at one time level.

    Unknowns: w at nodes 0..n_y-2 of every column (w = 0 at Y_max), then
    W_top for every column.
    """

    def __init__(self, bg: BackgroundState):
        s = bg.spec
        self.bg = bg
        self.nx, self.m = s.n_x, s.n_y - 1
        self.idx = (np.arange(self.nx)[:, None] * self.m + np.arange(self.m)[None, :])
        self.top = self.nx * self.m + np.arange(self.nx)
        self.size = self.nx * (self.m + 1)
        self.quad = trapezoid_weights(s.n_y, s.dy)

    def matrix(self, n: int):
        bg, s = self.bg, self.bg.spec
        dx, dy = s.dx, s.dy
        m, idx, top = self.m, self.idx, self.top
        ut = bg.u_tilde.values[n, :, :m]
        vt = bg.v_tilde.values[n, :, :m]
        eta = bg.eta.values[n, :, :m]
        g = bg.beta - eta[:, 0]
        zt = bg.zeta_tilde.values[n, :, 0]
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c = np.broadcast_arrays(r, c)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(np.broadcast_to(v, r.shape).ravel())

        # -(u w)_x on every node, periodic
        add(idx, np.roll(idx, -1, axis=0), -np.roll(ut, -1, axis=0) / (2 * dx))
        add(idx, np.roll(idx, 1, axis=0), np.roll(ut, 1, axis=0) / (2 * dx))
        # interior nodes 1..m-1: w_yy - (v w)_y + 2 (eta w)_y
        r = idx[:, 1:]
        add(r, r, np.full(r.shape, -2.0 / dy**2))
        add(idx[:, 1:-1], idx[:, 2:], 1 / dy**2 + (-vt[:, 2:] + 2 * eta[:, 2:]) / (2 * dy))
        add(r, idx[:, :-1], 1 / dy**2 + (vt[:, :-1] - 2 * eta[:, :-1]) / (2 * dy))
        # wall: g (w_y + 2 eta w) - zeta~ w / g, one-sided w_y
        w0 = idx[:, 0]
        add(w0, w0, g * (-3 / (2 * dy)) + 2 * g * eta[:, 0] - zt / g)
        add(w0, idx[:, 1], g * (4 / (2 * dy)))
        add(w0, idx[:, 2], g * (-1 / (2 * dy)))

        # top row: -(u W_top)_x - zeta W_top + v(Y_max) - w_y(Y_max)
        u_top = bg.u_tilde.values[n, :, -1]
        add(top, np.roll(top, -1), -np.roll(u_top, -1) / (2 * dx))
        add(top, np.roll(top, 1), np.roll(u_top, 1) / (2 * dx))
        add(top, top, -bg.zeta.values[n, :, -1])
        add(top, idx[:, m - 1], np.full(self.nx, 4 / (2 * dy)))
        add(top, idx[:, m - 2], np.full(self.nx, -1 / (2 * dy)))
        # v(Y_max) = sum_j q_j D_x(u~_y W)_j with W_j = sum_k T_jk w_k + W_top
        a = self.quad[None, :] * bg.u_y[n]
        c = dy * (np.cumsum(a, axis=1) - 0.5 * a)[:, :m]
        A = a.sum(axis=1)
        for sgn, shift in ((1.0, -1), (-1.0, 1)):
            add(top[:, None], np.roll(idx, shift, axis=0), sgn * np.roll(c, shift, axis=0) / (2 * dx))
            add(top, np.roll(top, shift), sgn * np.roll(A, shift) / (2 * dx))
        return coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size)).tocsc()

    def explicit(self, n: int, w: np.ndarray, w_top: np.ndarray) -> np.ndarray:
        """Nonlocal term at level n: (zeta W)_y inside, g zeta W at the wall."""
        bg, s = self.bg, self.bg.spec
        zW = bg.zeta.values[n] * potential(w, s, w_top)
        out = diff1(zW, s.dy, axis=1)[:, :self.m].copy()
        g = bg.beta - bg.eta.values[n, :, 0]
        out[:, 0] = g * zW[:, 0]
        return np.concatenate([out.ravel(), np.zeros(self.nx)])

    def pack(self, w, w_top):
        return np.concatenate([w[:, :self.m].ravel(), w_top])

    def unpack(self, vec):
        w = np.zeros((self.nx, self.m + 1))
        w[:, :self.m] = vec[:self.nx * self.m].reshape(self.nx, self.m)
        return w, vec[self.nx * self.m:].copy()


def solve_vorticity(bg: BackgroundState, f_tilde=None, w0=None, source=None, boundary_source=None,
                    top_source=None, *, w_top0=None, record_energy: bool = True,
                    ell: float = 1.0) -> VorticitySolution:
    """Advance the w-system on the background grid.

    f_tilde: (t, x, y) array, enters as (f~)_y inside, g f~ at the wall and
    -f~ in the top row.  w0, w_top0: initial data (default zero).  source,
    boundary_source and top_source are extra right-hand sides for the
    interior, wall and top rows (manufactured solutions use them).
    """
    s = bg.spec
    nt, nx, ny = s.shape
    dt = s.dt
    zmax = float(np.max(np.abs(bg.zeta.values)))
    if dt * zmax > 2.0:
        raise ConfigError(f"time step too large for the explicit nonlocal term: dt*max|zeta| = {dt * zmax:.3g}")
    log.debug("x-advection cell number |u|dx = %.3g", float(np.max(np.abs(bg.u_tilde.values))) * s.dx)

    op = _Operator(bg)
    m = op.m
    forcing = np.zeros((nt, nx, m))
    ftop = np.zeros((nt, nx))
    if f_tilde is not None:
        ft = np.asarray(f_tilde, dtype=float)
        forcing += diff1(ft, s.dy, axis=2)[:, :, :m]
        forcing[:, :, 0] = bg.wall_gap * ft[:, :, 0]
        ftop -= ft[:, :, -1]
    if source is not None:
        forcing[:, :, 1:] += np.asarray(source, dtype=float)[:, :, 1:m]
    if boundary_source is not None:
        forcing[:, :, 0] += np.asarray(boundary_source, dtype=float).reshape(nt, nx)
    if top_source is not None:
        ftop += np.asarray(top_source, dtype=float).reshape(nt, nx)
    rhs_f = np.concatenate([forcing.reshape(nt, -1), ftop], axis=1)

    w = np.zeros(s.shape)
    w_top = np.zeros((nt, nx))
    if w0 is not None:
        w[0] = np.asarray(w0, dtype=float).reshape(nx, ny)
        w[0, :, -1] = 0.0
    if w_top0 is not None:
        w_top[0] = np.asarray(w_top0, dtype=float).reshape(nx)
    eye = identity(op.size, format="csc")
    energy = [_energy(w[0], bg, 0, ell)] if record_energy else []
    x_prev = op.pack(w[0], w_top[0])
    x_cur = x_prev
    expl_prev = None
    expl = op.explicit(0, w[0], w_top[0])
    for n in range(nt - 1):
        L = op.matrix(n + 1)
        if n == 0:
            A = eye - dt * L
            rhs = x_cur + dt * (expl + rhs_f[1])
        else:
            A = 1.5 * eye - dt * L
            rhs = 2 * x_cur - 0.5 * x_prev + dt * (2 * expl - expl_prev + rhs_f[n + 1])
        sol = _block_solve(A, rhs, op.nx * m)
        if not np.all(np.isfinite(sol)):
            raise NumericalError(f"non-finite vorticity at step {n + 1}")
        x_prev, x_cur = x_cur, sol
        w[n + 1], w_top[n + 1] = op.unpack(sol)
        expl_prev, expl = expl, op.explicit(n + 1, w[n + 1], w_top[n + 1])
        if record_energy:
            energy.append(_energy(w[n + 1], bg, n + 1, ell))
    u = recover_u(w, bg, w_top)
    v = recover_v(u, s)
    return VorticitySolution(s, w, w_top, u, v, energy)


def _block_solve(A, rhs, k: int) -> np.ndarray:
    """Solve with the block lower-triangular structure: w rows never see W_top."""
    A = A.tocsr()
    head = splu(A[:k, :k].tocsc()).solve(rhs[:k])
    low = A[k:, :k] @ head
    tail = splu(A[k:, k:].tocsc()).solve(rhs[k:] - low)
    return np.concatenate([head, tail])


def _energy(w_slice: np.ndarray, bg: BackgroundState, n: int, ell: float) -> dict:
    """Weighted interior L2 of w plus the wall term sum w^2 / (beta - eta)."""
    s = bg.spec
    wy = trapezoid_weights(s.n_y, s.dy) * japanese(s.y) ** (2 * ell)
    interior = float(np.sum(w_slice**2 * wy[None, :]) * s.dx)
    wall = float(np.sum(w_slice[:, 0] ** 2 / bg.wall_gap[n]) * s.dx)
    return {"t": float(s.t[n]), "interior": interior, "wall": wall}


def solve_case_I(bg: BackgroundState, f, **kw) -> VorticitySolution:
    """Zero initial data, force f (velocity level); f~ = f / u~_y."""
    f = np.asarray(f.values if isinstance(f, Field) else f, dtype=float)
    return solve_vorticity(bg, f_tilde=f / bg.u_y, **kw)


def solve_case_II(bg: BackgroundState, w0, w_top0=None, **kw) -> VorticitySolution:
    """Zero force, initial data w0 at t = 0; the wall value is the trace of w0."""
    w0 = np.asarray(w0.values[0] if isinstance(w0, Field) else w0, dtype=float)
    return solve_vorticity(bg, f_tilde=None, w0=w0, w_top0=w_top0, **kw)

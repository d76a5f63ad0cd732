"""Manufactured solutions for the linearized vorticity system.

The background is u~ = 1 - c(t, x) exp(-a(t, x) y) with v~ chosen so that
u~_x + v~_y = 0 and v~ = 0 at the wall.  The manufactured potential is
W* = g(t) sin(kx) (1 + y) exp(-y^2/2), so w* = -W*_y has a nonzero wall
trace.  Sources for the interior, wall and top rows are derived
symbolically; the v(Y_max) integral in the top row is done by Gauss
quadrature.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from .grid import Field, GridSpec
from .linearized import build_background, solve_vorticity

log = logging.getLogger(__name__)

t, x, y = sp.symbols("t x y", real=True)


@dataclass(frozen=True)
class MMSProblem:
    beta: float = 1.0
    k: int = 1
    omega: float = 3.0

    @cached_property
    def exprs(self) -> dict:
        c = sp.Rational(1, 2) + sp.sin(x - t) / 10
        a = 1 + sp.cos(x) / 5 + t / 10
        E = sp.exp(-a * y)
        U = 1 - c * E
        # v~ = -int_0^y u~_x, written out: u~_x = -(c_x - c a_x y) e^{-a y}
        cx, ax = sp.diff(c, x), sp.diff(a, x)
        V = cx * (1 - E) / a - c * ax * (1 - E * (1 + a * y)) / a**2
        Uy = sp.diff(U, y)
        eta = sp.diff(U, y, 2) / Uy
        zeta = (sp.diff(Uy, t) + U * sp.diff(Uy, x) + V * sp.diff(Uy, y) - sp.diff(Uy, y, 2)) / Uy
        g = sp.sin(self.omega * t)
        W = g * sp.sin(self.k * x) * (1 + y) * sp.exp(-y**2 / 2)
        w = -sp.diff(W, y)
        gap = self.beta - eta
        interior = (sp.diff(w, t) + sp.diff(U * w, x) + sp.diff(V * w, y) - 2 * sp.diff(eta * w, y)
                    - sp.diff(zeta * W, y) - sp.diff(w, y, 2))
        zt = sp.diff(eta, t) + U * sp.diff(eta, x)
        wall = sp.diff(w, t) + sp.diff(U * w, x) - gap * (sp.diff(w, y) + 2 * eta * w + zeta * W) + zt * w / gap
        # top row without the v(Y_max) part
        top = sp.diff(W, t) + sp.diff(U * W, x) + zeta * W + sp.diff(w, y)
        flux_x = sp.diff(Uy * W, x)  # v(Y) = int_0^Y (u~_y W)_x
        return dict(U=U, V=V, Uy=Uy, eta=eta, zeta=zeta, W=W, w=w, interior=interior,
                    wall=wall.subs(y, 0), top=top, flux_x=flux_x, u=-Uy * W)

    def _fn(self, name):
        return sp.lambdify((t, x, y), self.exprs[name], "numpy")

    def sample(self, name: str, spec: GridSpec) -> np.ndarray:
        tt, xx, yy = spec.mesh()
        return np.broadcast_to(self._fn(name)(tt, xx, yy), spec.shape).astype(float)

    def v_exact(self, spec: GridSpec, n: int, n_gauss: int = 48) -> np.ndarray:
        """v* = int_0^y (u~_y W*)_x at time index n, by Gauss-Legendre on every [0, y_j]."""
        nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
        fx = self._fn("flux_x")
        yj = spec.y[None, :, None]
        s = 0.5 * yj * (nodes[None, None, :] + 1)
        vals = np.broadcast_to(fx(spec.t[n], spec.x[:, None, None], s), (spec.n_x, spec.n_y, n_gauss))
        return 0.5 * spec.y[None, :] * np.tensordot(vals, weights, axes=([2], [0]))

    def top_source(self, spec: GridSpec, n_gauss: int = 200) -> np.ndarray:
        nodes, weights = np.polynomial.legendre.leggauss(n_gauss)
        Y = spec.y_max
        s = 0.5 * Y * (nodes + 1)
        fx = self._fn("flux_x")(spec.t[:, None, None], spec.x[None, :, None], s[None, None, :])
        v_top = 0.5 * Y * np.tensordot(np.broadcast_to(fx, (spec.n_t, spec.n_x, n_gauss)), weights, axes=([2], [0]))
        top = self._fn("top")(spec.t[:, None], spec.x[None, :], Y)
        return np.broadcast_to(top, v_top.shape) - v_top

    def solve(self, spec: GridSpec):
        """Run the solver with manufactured sources; returns (solution, background)."""
        bg = build_background(Field(spec, self.sample("U", spec)), Field(spec, self.sample("V", spec)),
                              None, self.beta)
        tt, xx = spec.t[:, None], spec.x[None, :]
        wall = np.broadcast_to(self._fn("wall")(tt, xx, 0.0), (spec.n_t, spec.n_x))
        w0 = self.sample("w", spec)[0]
        W0 = self.sample("W", spec)[0, :, -1]
        sol = solve_vorticity(bg, source=self.sample("interior", spec), boundary_source=wall,
                              top_source=self.top_source(spec), w0=w0, w_top0=W0, record_energy=False)
        return sol, bg

    def errors(self, spec: GridSpec) -> dict:
        sol, _ = self.solve(spec)
        w_err = float(np.max(np.abs(sol.w - self.sample("w", spec))))
        u_err = float(np.max(np.abs(sol.u - self.sample("u", spec))))
        v_err = float(np.max(np.abs(sol.v[-1] - self.v_exact(spec, spec.n_t - 1))))
        return {"w": w_err, "u": u_err, "v": v_err, "solution": sol}


def observed_orders(errors, ratio: float = 2.0) -> list[float]:
    e = np.asarray(errors, dtype=float)
    return list(np.log(e[:-1] / e[1:]) / np.log(ratio))


def space_study(problem: MMSProblem, base: GridSpec, levels: int = 3, n_t: int = 401) -> dict:
    """Refine x and y together at fixed small dt; errors against the exact solution."""
    rows = []
    spec = GridSpec(n_t, base.n_x, base.n_y, base.t_max, base.x_len, base.y_max)
    for _ in range(levels):
        e = problem.errors(spec)
        rows.append({"n_x": spec.n_x, "n_y": spec.n_y, "w": e["w"], "u": e["u"], "v": e["v"]})
        log.info("space level n_x=%d n_y=%d: |w err| %.3e", spec.n_x, spec.n_y, e["w"])
        spec = spec.refined(2, t=False)
    return {"levels": rows, "order_w": observed_orders([r["w"] for r in rows]),
            "order_u": observed_orders([r["u"] for r in rows]),
            "order_v": observed_orders([r["v"] for r in rows])}


def time_study(problem: MMSProblem, base: GridSpec, levels: int = 3) -> dict:
    """Refine dt at fixed space grid; error against the exact w includes a fixed space part,
    so the order comes from successive differences (self-convergence)."""
    sols = []
    spec = base
    for _ in range(levels):
        sol, _ = problem.solve(spec)
        sols.append((spec, sol.w))
        spec = spec.refined(2, x=False, y=False)
    diffs = []
    for (s0, w0), (s1, w1) in zip(sols[:-1], sols[1:]):
        r = (s1.n_t - 1) // (s0.n_t - 1)
        diffs.append(float(np.max(np.abs(w1[::r] - w0))))
    order = observed_orders(diffs)
    return {"n_t": [s.n_t for s, _ in sols], "differences": diffs, "order": order}

"""Discrete Prandtl residual and its linearization.

Fields are split as u = u^s + p with the shear u^s(t, y) known.  The shear
part of the residual, u^s_t - u^s_yy, vanishes identically and is dropped,
so the residual below only sees the perturbation p.  All products are
pointwise and every derivative is a plain grid stencil, which makes the
Taylor expansion of the residual exact at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, diff1, diff2, diff_periodic


@dataclass
class Background:
    """u = u^s + p, v, with the derivatives the operators need."""

    u: np.ndarray
    u_x: np.ndarray
    u_y: np.ndarray
    v: np.ndarray


def derivs(a: np.ndarray, spec: GridSpec):
    """(a_t, a_x, a_y, a_yy) on the grid."""
    return (diff1(a, spec.dt, axis=0), diff_periodic(a, spec.dx, axis=1),
            diff1(a, spec.dy, axis=2), diff2(a, spec.dy, axis=2))


def shear_arrays(shear, spec: GridSpec):
    """u^s, u^s_y, u^s_yy broadcast to (t, x, y)."""
    us = shear.u_s[:, None, :]
    return (np.broadcast_to(us, spec.shape), np.broadcast_to(shear.u_y[:, None, :], spec.shape),
            np.broadcast_to(shear.u_yy[:, None, :], spec.shape))


def background(p: np.ndarray, v: np.ndarray, shear, spec: GridSpec) -> Background:
    us, us_y, _ = shear_arrays(shear, spec)
    return Background(us + p, diff_periodic(p, spec.dx, axis=1), us_y + diff1(p, spec.dy, axis=2), v)


def prandtl_residual(p: np.ndarray, v: np.ndarray, shear, spec: GridSpec) -> np.ndarray:
    """u_t + u u_x + v u_y - u_yy for u = u^s + p (shear part dropped)."""
    us, us_y, _ = shear_arrays(shear, spec)
    p_t, p_x, p_y, p_yy = derivs(p, spec)
    return p_t + (us + p) * p_x + v * (us_y + p_y) - p_yy


def linearized_operator(du: np.ndarray, dv: np.ndarray, bg: Background, spec: GridSpec) -> np.ndarray:
    """du_t + u du_x + v du_y + du u_x + dv u_y - du_yy around bg."""
    d_t, d_x, d_y, d_yy = derivs(du, spec)
    return d_t + bg.u * d_x + bg.v * d_y + du * bg.u_x + dv * bg.u_y - d_yy


def robin_residual(a: np.ndarray, spec: GridSpec, beta: float) -> np.ndarray:
    """(a_y - beta a) at y = 0 with the one-sided second-order stencil."""
    a_y0 = (-3 * a[..., 0] + 4 * a[..., 1] - a[..., 2]) / (2 * spec.dy)
    return a_y0 - beta * a[..., 0]

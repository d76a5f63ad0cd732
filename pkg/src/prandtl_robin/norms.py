"""Weighted Sobolev-type norms on sampled fields and the coefficient-size bundle.

Derivatives come from the grid stencils, integrals from the trapezoid rule
in t and y and the rectangle rule in the periodic x direction.  The weight
is <y> = sqrt(1 + y^2).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, GridError, GridSpec, diff1, diff2, diff_periodic, trapezoid_weights


def index_set(k: int) -> list[tuple[int, int]]:
    """Pairs (k1, k2) with k1 + floor((k2 + 1) / 2) <= k."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return [(k1, k2) for k1 in range(k + 1) for k2 in range(2 * k + 1)
            if k1 + (k2 + 1) // 2 <= k]


def japanese(y) -> np.ndarray:
    return np.sqrt(1.0 + np.asarray(y) ** 2)


class _Derivs:
    """Memoised mixed derivatives d_t^a d_x^b d_y^q of one array."""

    def __init__(self, values: np.ndarray, spec: GridSpec):
        self.spec = spec
        self.cache = {(0, 0, 0): np.asarray(values, dtype=float)}

    def get(self, a: int, b: int, q: int) -> np.ndarray:
        key = (a, b, q)
        if key in self.cache:
            return self.cache[key]
        s = self.spec
        if q > 0:
            if q >= 2:
                out = diff2(self.get(a, b, q - 2), s.dy, axis=2)
            else:
                out = diff1(self.get(a, b, 0), s.dy, axis=2)
        elif b > 0:
            out = diff_periodic(self.get(a, b - 1, 0), s.dx, axis=1)
        else:
            out = diff1(self.get(a - 1, 0, 0), s.dt, axis=0)
        self.cache[key] = out
        return out

    def tangential(self, k1: int, q: int):
        """All mixed t/x derivatives of total order k1, then q y-derivatives."""
        for a in range(k1 + 1):
            yield self.get(a, k1 - a, q)


def _check_resolution(spec: GridSpec, pairs, n_y: int):
    for k1, k2 in pairs:
        if n_y < k2 + 4:
            raise GridError(f"n_y={n_y} cannot resolve derivative pair (k1={k1}, k2={k2})")
        if k1 and (spec.n_t < 3 + k1):
            raise GridError(f"n_t={spec.n_t} cannot resolve derivative pair (k1={k1}, k2={k2})")


def _l2_sq(arr: np.ndarray, spec: GridSpec, weight_y=None, weight_t=None) -> float:
    a2 = arr**2
    wt = trapezoid_weights(spec.n_t, spec.dt)
    if weight_t is not None:
        wt = wt * weight_t**2
    if arr.shape[2] == 1:
        return float(np.einsum("t,txy->", wt, a2) * spec.dx)
    wy = trapezoid_weights(spec.n_y, spec.dy)
    if weight_y is not None:
        wy = wy * weight_y**2
    return float(np.einsum("t,txy,y->", wt, a2, wy) * spec.dx)


def norm_A(f: Field, k: int, ell: float, homogeneous: bool = False) -> float:
    """The weighted L^2-based norm over the index set of k."""
    if f.kind == "boundary":
        raise GridError("norm_A needs an interior field")
    spec = f.spec
    pairs = [p for p in index_set(k) if not homogeneous or sum((p[0], (p[1] + 1) // 2)) >= 1]
    _check_resolution(spec, pairs, spec.n_y)
    wy = japanese(spec.y) ** ell
    d = _Derivs(f.full(), spec)
    total = 0.0
    for k1, k2 in pairs:
        for arr in d.tangential(k1, k2):
            total += _l2_sq(arr, spec, wy)
    return float(np.sqrt(total))


def norm_boundary_A(tr: Field, k: int, homogeneous: bool = False) -> float:
    """L^2_{t,x} norm of a wall trace and its tangential derivatives up to order k."""
    if tr.kind != "boundary":
        raise GridError("norm_boundary_A needs a boundary-trace field")
    spec = tr.spec
    d = _Derivs(tr.values, spec)
    total = 0.0
    for m in range(1 if homogeneous else 0, k + 1):
        for arr in d.tangential(m, 0):
            total += _l2_sq(arr, spec)
    return float(np.sqrt(total))


def norm_B(f: Field, lam: float, ell: float, k1: int, k2: int, sup_t: bool = False) -> float:
    """e^{-lam t} <y>^ell weighted norm over the rectangle m <= k1, q <= k2.

    With sup_t the time integral is replaced by a maximum over time slices.
    """
    spec = f.spec
    pairs = [(m, q) for m in range(k1 + 1) for q in range(k2 + 1)]
    _check_resolution(spec, pairs, spec.n_y)
    wy = japanese(spec.y) ** ell
    et = np.exp(-lam * spec.t)
    d = _Derivs(f.full(), spec)
    total = 0.0
    for m, q in pairs:
        for arr in d.tangential(m, q):
            if sup_t:
                slices = np.einsum("txy,y->t", (arr * et[:, None, None]) ** 2,
                                   trapezoid_weights(spec.n_y, spec.dy) * wy**2) * spec.dx
                total += float(slices.max())
            else:
                total += _l2_sq(arr, spec, wy, et)
    return float(np.sqrt(total))


def _l2y_linf(arr: np.ndarray, spec: GridSpec, wy) -> float:
    prof = np.max(np.abs(arr), axis=(0, 1)) * wy
    return float(np.sqrt(np.sum(trapezoid_weights(spec.n_y, spec.dy) * prof**2)))


def _linfy_l2(arr: np.ndarray, spec: GridSpec, wy) -> float:
    prof = np.einsum("t,txy->y", trapezoid_weights(spec.n_t, spec.dt), arr**2) * spec.dx
    return float(np.max(np.sqrt(prof) * wy))


def norm_mixed(f: Field, family: str, k: int = 0, ell: float = 0.0, lam: float = 0.0,
               k1: int = 0, k2: int = 0, homogeneous: bool = False) -> float:
    """Mixed-norm families.

    C: sum over the index set of L^2_y(L^inf_{t,x});
    D: sum over the index set of L^inf_y(L^2_{t,x});
    B: see norm_B (uses lam, ell, k1, k2); Bt: the sup-in-time variant.
    """
    if family == "B":
        return norm_B(f, lam, ell, k1, k2)
    if family == "Bt":
        return norm_B(f, lam, ell, k1, k2, sup_t=True)
    if family not in ("C", "D"):
        raise ValueError(f"unknown norm family {family!r}")
    spec = f.spec
    pairs = [p for p in index_set(k) if not homogeneous or p[0] + (p[1] + 1) // 2 >= 1]
    _check_resolution(spec, pairs, spec.n_y)
    wy = japanese(spec.y) ** ell
    d = _Derivs(f.full(), spec)
    one = _l2y_linf if family == "C" else _linfy_l2
    return float(sum(one(arr, spec, wy) for k1_, k2_ in pairs for arr in d.tangential(k1_, k2_)))


@dataclass
class NormReport:
    a_norm: dict = field(default_factory=dict)
    boundary_a_norm: dict = field(default_factory=dict)
    b_norm: dict = field(default_factory=dict)
    c_norm: dict = field(default_factory=dict)
    d_norm: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {}
        for (k, ell), v in self.a_norm.items():
            out[f"A:k={k},l={ell}"] = v
        for k, v in self.boundary_a_norm.items():
            out[f"Ab:k={k}"] = v
        for (lam, ell, k1, k2), v in self.b_norm.items():
            out[f"B:lam={lam},l={ell},k1={k1},k2={k2}"] = v
        for (k, ell), v in self.c_norm.items():
            out[f"C:k={k},l={ell}"] = v
        for (k, ell), v in self.d_norm.items():
            out[f"D:k={k},l={ell}"] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def norm_report(f: Field, ks=(0, 1), ells=(0, 1), lam: float = 0.0) -> NormReport:
    rep = NormReport()
    for k in ks:
        for ell in ells:
            rep.a_norm[(k, ell)] = norm_A(f, k, ell)
            rep.c_norm[(k, ell)] = norm_mixed(f, "C", k, ell)
            rep.d_norm[(k, ell)] = norm_mixed(f, "D", k, ell)
            rep.b_norm[(lam, ell, k, k)] = norm_B(f, lam, ell, k, k)
        rep.boundary_a_norm[k] = norm_boundary_A(Field(f.spec, f.full()[:, :, :1], "boundary"), k)
    return rep


@dataclass
class LambdaReport:
    lambda_interior: dict = field(default_factory=dict)
    lambda_boundary: dict = field(default_factory=dict)
    lambda_total: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {f"lambda:k1={a},k2={b}": v for (a, b), v in self.lambda_interior.items()}
        out.update({f"lambda_wall:k1={a}": v for a, v in self.lambda_boundary.items()})
        out.update({f"lambda_total:k={a}": v for a, v in self.lambda_total.items()})
        return out


def _sup_trace_derivs(tr: np.ndarray, spec: GridSpec, k1: int, t_only: bool = False) -> float:
    d = _Derivs(tr, spec)
    total = 0.0
    for m in range(k1 + 1):
        if t_only:
            total += float(np.max(np.abs(d.get(m, 0, 0))))
        else:
            total += sum(float(np.max(np.abs(a))) for a in d.tangential(m, 0))
    return total


def lambda_diagnostics(bg, shear, k: int, ell: float = 1.0) -> LambdaReport:
    """Coefficient-size sums for a background state.

    bg is a BackgroundState and shear a ShearProfile sampled on the same grid.
    """
    spec = bg.spec
    us = Field(spec, shear.u_s[:, None, :], "profile")
    ut = bg.u_tilde
    diff = ut - us.full()
    ut_x = Field(spec, diff_periodic(ut.values, spec.dx, axis=1))
    eta_gap = bg.eta - bg.eta_bar.values

    def wall(f: Field) -> Field:
        return Field(spec, f.full()[:, :, :1], "boundary")

    rep = LambdaReport()
    us_d = _Derivs(us.values, spec)
    wy0 = np.ones(spec.n_y)
    for k1, k2 in index_set(k):
        val = norm_B(diff, 0, 0, k1, k2) + norm_B(ut_x, 0, 0, k1, k2)
        val += norm_B(eta_gap, 0, 0, k1, k2) + norm_B(bg.zeta, 0, ell, k1, k2)
        vd = _Derivs(bg.v_tilde.values, spec)
        ed = _Derivs(bg.eta_bar.full(), spec)
        if (k1, k2) == (0, 0):
            val += _linfy_l2(bg.v_tilde.values, spec, wy0) + _l2y_linf(bg.eta_bar.full(), spec, wy0)
        else:
            for m in range(k1 + 1):
                for q in range(k2 + 1):
                    # the shear is x-independent, so only pure t-derivatives survive
                    val += _l2y_linf(us_d.get(m, 0, q), spec, wy0)
                    val += sum(_linfy_l2(a, spec, wy0) for a in vd.tangential(m, q))
                    val += sum(_l2y_linf(a, spec, wy0) for a in ed.tangential(m, q))
        rep.lambda_interior[(k1, k2)] = val
    for k1 in range(k + 1):
        val = norm_boundary_A(wall(diff), k1) + norm_boundary_A(wall(ut_x), k1)
        val += _sup_trace_derivs(us.full()[:, :, 0:1], spec, k1, t_only=True)
        val += _sup_trace_derivs(bg.zeta1_tilde.values, spec, k1)
        val += norm_boundary_A(bg.zeta2_tilde, k1)
        val += _sup_trace_derivs(bg.eta_bar.full()[:, :, :1], spec, k1)
        val += norm_boundary_A(wall(eta_gap), k1)
        rep.lambda_boundary[k1] = val
    for kk in range(k + 1):
        rep.lambda_total[kk] = (sum(rep.lambda_interior[p] for p in index_set(kk))
                                + sum(rep.lambda_boundary[j] for j in range(kk + 1)))
    return rep

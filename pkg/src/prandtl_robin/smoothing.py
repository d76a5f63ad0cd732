"""Mollifiers with reflection extensions across the wall.

Three smoothers act on fields sampled on the (t, x, y) grid:

* ``S``   zero extension, shifted in t and in y (samples larger y only);
* ``S_u`` even reflection across y = 0 inside a band of width 1/theta;
* ``S_v`` odd reflection in the same band.

The kernel is the tensor product of a scaled bump rho_theta(s) = theta *
rho(theta s), rho(s) = c exp(-1 / (1 - s^2)).  The time shift defaults to the
past (-1/theta) so that fields vanishing for t <= 0 stay zero there; the
opposite sign is available through ``shift_t=+1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Field, GridError, GridSpec, diff1, diff_periodic

EXTENSIONS = ("zero", "even", "odd")


def bump(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@dataclass(frozen=True)
class Mollifier:
    theta: float
    shift_t: int = -1  # in units of 1/theta
    shift_y: int = 0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if self.shift_t not in (-1, 0, 1) or self.shift_y not in (-1, 0, 1):
            raise ValueError("shifts are -1, 0 or +1 (units of 1/theta)")

    def taps(self, h: float, shift: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Offsets m and weights w_m with (S f)_i = sum_m w_m f_{i-m}.

        Weights sample rho_theta(m h + shift/theta) and carry unit discrete mass.
        """
        reach = int(np.ceil((1.0 + abs(shift)) / (self.theta * h))) + 1
        m = np.arange(-reach, reach + 1)
        w = bump(self.theta * (m * h) + shift)
        total = w.sum()
        if total <= 0:
            raise GridError(f"mollifier at theta={self.theta} is not resolved by spacing {h}")
        return m, w / total

    def check_resolvable(self, spec: GridSpec, axes=("t", "x", "y")):
        spacing = {"t": spec.dt, "x": spec.dx, "y": spec.dy}
        worst = max(spacing[a] for a in axes)
        if 1.0 / self.theta < 2 * worst - 1e-12:
            raise GridError(
                f"1/theta = {1 / self.theta:.4g} is below twice the grid spacing {worst:.4g}")


def _centered(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    reach = int(np.max(np.abs(m)))
    full = np.zeros(2 * reach + 1)
    full[m + reach] = w
    return full


def extend(values: np.ndarray, spec: GridSpec, kind: str, theta: float, pad_top: int = 0):
    """Extend along y below the wall (and above Y_max by pad_top nodes).

    Returns (array, n_below).  even/odd reflect inside -1/theta < y < 0 and are
    zero beyond; zero extends by zero.  Above Y_max, zero keeps zero while the
    reflections continue the top value.
    """
    if kind not in EXTENSIONS:
        raise ValueError(f"unknown extension {kind!r}")
    dy = spec.dy
    n_below = int(np.ceil(1.0 / (theta * dy))) + 1
    if n_below >= spec.n_y:
        raise GridError("reflection band exceeds the y grid")
    a = np.asarray(values, dtype=float)
    j = np.arange(n_below, 0, -1)  # mirror partners of y = -j dy
    in_band = (j * dy) < 1.0 / theta
    below = np.zeros(a.shape[:2] + (n_below,))
    if kind != "zero":
        sign = 1.0 if kind == "even" else -1.0
        below[..., in_band] = sign * a[..., j[in_band]]
    if kind == "zero":
        top = np.zeros(a.shape[:2] + (pad_top,))
    else:
        top = np.repeat(a[..., -1:], pad_top, axis=2)
    return np.concatenate([below, a, top], axis=2), n_below


def smooth_array(values: np.ndarray, spec: GridSpec, mol: Mollifier, kind: str) -> np.ndarray:
    """Discrete tensor-product convolution of the extended field."""
    a = np.asarray(values, dtype=float)
    mt, wt = mol.taps(spec.dt, mol.shift_t)
    a = ndimage.convolve1d(a, _centered(mt, wt), axis=0, mode="constant", cval=0.0)
    mx, wx = mol.taps(spec.dx, 0)
    a = ndimage.convolve1d(a, _centered(mx, wx), axis=1, mode="wrap")
    my, wy = mol.taps(spec.dy, mol.shift_y)
    reach = int(np.max(np.abs(my)))
    ext, n_below = extend(a, spec, kind, mol.theta, pad_top=reach + 1)
    if reach > n_below and kind != "zero":
        raise GridError("kernel reach exceeds the reflection band")
    mode = "constant" if kind == "zero" else "nearest"
    ext = ndimage.convolve1d(ext, _centered(my, wy), axis=2, mode=mode, cval=0.0)
    return ext[..., n_below:n_below + spec.n_y]


def smooth(f: Field, mol: Mollifier, kind: str) -> Field:
    if f.kind != "interior":
        raise GridError("smoothing acts on interior fields")
    return f.with_values(smooth_array(f.values, f.spec, mol, kind))


def S(values, spec: GridSpec, theta: float, shift_t: int = -1) -> np.ndarray:
    """Zero-extension smoother, shifted in t and towards larger y."""
    return smooth_array(values, spec, Mollifier(theta, shift_t, +1), "zero")


def S_u(values, spec: GridSpec, theta: float, shift_t: int = -1) -> np.ndarray:
    return smooth_array(values, spec, Mollifier(theta, shift_t, 0), "even")


def S_v(values, spec: GridSpec, theta: float, shift_t: int = -1) -> np.ndarray:
    return smooth_array(values, spec, Mollifier(theta, shift_t, 0), "odd")


def divergence(u: np.ndarray, v: np.ndarray, spec: GridSpec) -> np.ndarray:
    return diff_periodic(u, spec.dx, axis=1) + diff1(v, spec.dy, axis=2)


def verify_divergence_preservation(u: np.ndarray, v: np.ndarray, spec: GridSpec, theta: float,
                                   tol: float | None = None, shift_t: int = -1) -> float:
    """Max |(S_u u)_x + (S_v v)_y| for a divergence-free pair with v = 0 at the wall."""
    tol = 10 * (spec.dx**2 + spec.dy**2) if tol is None else tol
    incoming = float(np.max(np.abs(divergence(u, v, spec))))
    wall = float(np.max(np.abs(np.asarray(v)[..., 0])))
    if incoming > tol or wall > 1e-12:
        raise ValueError(f"input pair is not admissible: divergence {incoming:.3e}, wall v {wall:.3e}")
    su = S_u(u, spec, theta, shift_t)
    sv = S_v(v, spec, theta, shift_t)
    return float(np.max(np.abs(divergence(su, sv, spec))))


def fit_exponent(thetas, ratios) -> tuple[float, float]:
    """Least-squares slope of log(ratio) against log(theta), and the rms fit residual."""
    thetas = np.asarray(thetas, dtype=float)
    ratios = np.asarray(ratios, dtype=float)
    if len(thetas) < 3:
        raise ValueError("need at least 3 theta samples for an exponent fit")
    x, y = np.log(thetas), np.log(ratios)
    slope, icept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return float(slope), resid


def measure_operator_exponents(fields, spec: GridSpec, s: int, alpha: int, thetas, mode: str = "smooth",
                               ell: float = 0.0, shift_t: int = -1) -> dict:
    """Fit the growth of sup_f ||T_theta f||_s / ||f||_alpha in theta.

    mode="smooth" uses T = S, mode="approx" uses T = 1 - S.  The supremum runs
    over the supplied family of fields (arrays on spec).
    """
    from .norms import norm_A

    thetas = list(thetas)
    if len(thetas) < 3:
        raise ValueError("need at least 3 theta samples")
    fields = [np.asarray(f, dtype=float) for f in fields]
    base = [norm_A(Field(spec, f), alpha, ell) for f in fields]
    ratios = []
    for th in thetas:
        Mollifier(th).check_resolvable(spec)
        best = 0.0
        for f, nb in zip(fields, base):
            sf = S(f, spec, th, shift_t)
            g = sf if mode == "smooth" else f - sf
            best = max(best, norm_A(Field(spec, g), s, ell) / nb)
        ratios.append(best)
    slope, resid = fit_exponent(thetas, ratios)
    return {"thetas": thetas, "ratios": ratios, "exponent": slope, "fit_residual": resid}


def telescoping_constants(f: np.ndarray, spec: GridSpec, s: int, alpha: int, theta0: float, ns,
                          ell: float = 0.0) -> list[float]:
    """C_n = ||(S_{theta_n} - S_{theta_{n-1}}) f||_s / (theta_n^{s-alpha} dtheta_n ||f||_alpha)."""
    from .norms import norm_A

    base = norm_A(Field(spec, f), alpha, ell)
    out = []
    for n in ns:
        tn, tp = np.sqrt(theta0**2 + n), np.sqrt(theta0**2 + n - 1)
        diff = S(f, spec, tn) - S(f, spec, tp)
        out.append(norm_A(Field(spec, diff), s, ell) / (tn ** (s - alpha) * (tn - tp) * base))
    return out


def commutator_norm(f: np.ndarray, weight: np.ndarray, spec: GridSpec, theta: float, k: int = 0,
                    ell: float = 0.0) -> float:
    """A-norm of S(f / weight) - S(f) / weight, a diagnostic of the commutator [1/weight, S]."""
    from .norms import norm_A

    a = S(f / weight, spec, theta)
    b = S(f, spec, theta) / weight
    return norm_A(Field(spec, a - b), k, ell)

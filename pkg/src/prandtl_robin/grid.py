"""Grid, sampled fields and finite-difference operators.

Fields live on [0, T] x [0, L_x) x [0, Y_max] and are stored as arrays
indexed (t, x, y).  x is periodic; t and y use one-sided second-order
stencils at their end points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, NumericalError

log = logging.getLogger(__name__)

KINDS = ("interior", "boundary", "profile")


@dataclass(frozen=True)
class GridSpec:
    n_t: int
    n_x: int
    n_y: int
    t_max: float = 0.5
    x_len: float = 2 * np.pi
    y_max: float = 20.0

    def __post_init__(self):
        for name in ("n_t", "n_x", "n_y"):
            if int(getattr(self, name)) < 4:
                raise GridError(f"{name} must be at least 4, got {getattr(self, name)}")
        for name in ("t_max", "x_len", "y_max"):
            if not getattr(self, name) > 0:
                raise GridError(f"{name} must be positive")

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_t - 1)

    @property
    def dx(self) -> float:
        return self.x_len / self.n_x

    @property
    def dy(self) -> float:
        return self.y_max / (self.n_y - 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_t)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.n_y)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_t, self.n_x, self.n_y)

    def mesh(self):
        """Broadcastable (t, x, y) coordinate arrays."""
        return (self.t[:, None, None], self.x[None, :, None], self.y[None, None, :])

    def refined(self, factor: int = 2, *, t: bool = True, x: bool = True, y: bool = True) -> "GridSpec":
        """Nested refinement: every coarse node is also a fine node."""
        return GridSpec(
            n_t=(self.n_t - 1) * factor + 1 if t else self.n_t,
            n_x=self.n_x * factor if x else self.n_x,
            n_y=(self.n_y - 1) * factor + 1 if y else self.n_y,
            t_max=self.t_max,
            x_len=self.x_len,
            y_max=self.y_max,
        )


@dataclass(frozen=True)
class Field:
    spec: GridSpec
    values: np.ndarray = field(repr=False)
    kind: str = "interior"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GridError(f"unknown field kind {self.kind!r}")
        vals = np.array(self.values, dtype=float)
        s = self.spec
        expected = {
            "interior": (s.n_t, s.n_x, s.n_y),
            "boundary": (s.n_t, s.n_x, 1),
            "profile": (s.n_t, 1, s.n_y),
        }[self.kind]
        if vals.shape != expected:
            raise GridError(f"{self.kind} field has shape {vals.shape}, expected {expected}")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("field contains NaN or Inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "Field":
        t, x, y = spec.mesh()
        return cls(spec, np.broadcast_to(fn(t, x, y), spec.shape))

    @classmethod
    def zeros(cls, spec: GridSpec, kind: str = "interior") -> "Field":
        shape = {"interior": spec.shape, "boundary": (spec.n_t, spec.n_x, 1),
                 "profile": (spec.n_t, 1, spec.n_y)}[kind]
        return cls(spec, np.zeros(shape), kind)

    def full(self) -> np.ndarray:
        """Values broadcast to the full (t, x, y) shape (profiles gain an x axis)."""
        if self.kind == "boundary":
            return self.values
        return np.broadcast_to(self.values, self.spec.shape)

    def with_values(self, values) -> "Field":
        return Field(self.spec, values, self.kind)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _vals(obj):
    return obj.values if isinstance(obj, Field) else obj


# ---- array-level stencils -------------------------------------------------

def diff1(a: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """First derivative: central inside, one-sided second order at the ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    if a.shape[-1] < 3:
        raise GridError("need at least 3 nodes for a first derivative")
    out = np.empty_like(a)
    out[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / (2 * h)
    out[..., 0] = (-3 * a[..., 0] + 4 * a[..., 1] - a[..., 2]) / (2 * h)
    out[..., -1] = (3 * a[..., -1] - 4 * a[..., -2] + a[..., -3]) / (2 * h)
    return np.moveaxis(out, -1, axis)


def diff2(a: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Second derivative: three-point inside, four-point one-sided at the ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    if a.shape[-1] < 4:
        raise GridError("need at least 4 nodes for a second derivative")
    out = np.empty_like(a)
    out[..., 1:-1] = (a[..., 2:] - 2 * a[..., 1:-1] + a[..., :-2]) / h**2
    out[..., 0] = (2 * a[..., 0] - 5 * a[..., 1] + 4 * a[..., 2] - a[..., 3]) / h**2
    out[..., -1] = (2 * a[..., -1] - 5 * a[..., -2] + 4 * a[..., -3] - a[..., -4]) / h**2
    return np.moveaxis(out, -1, axis)


def diff3(a: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Third derivative, second order: five-point central inside, five-point one-sided near the ends."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    if a.shape[-1] < 5:
        raise GridError("need at least 5 nodes for a third derivative")
    out = np.empty_like(a)
    c = 2 * h**3
    out[..., 2:-2] = (a[..., 4:] - 2 * a[..., 3:-1] + 2 * a[..., 1:-3] - a[..., :-4]) / c
    for j, sgn, idx in ((0, 1, slice(0, 5)), (-1, -1, slice(-5, None))):
        seg = a[..., idx] if sgn > 0 else a[..., idx][..., ::-1]
        out[..., j] = sgn * (-5 * seg[..., 0] + 18 * seg[..., 1] - 24 * seg[..., 2] + 14 * seg[..., 3] - 3 * seg[..., 4]) / c
    for j, sgn, idx in ((1, 1, slice(0, 5)), (-2, -1, slice(-5, None))):
        seg = a[..., idx] if sgn > 0 else a[..., idx][..., ::-1]
        out[..., j] = sgn * (-3 * seg[..., 0] + 10 * seg[..., 1] - 12 * seg[..., 2] + 6 * seg[..., 3] - seg[..., 4]) / c
    return np.moveaxis(out, -1, axis)


def fd_weights(order: int, offsets) -> np.ndarray:
    """Weights for the order-th derivative at 0 from unit-spaced samples at offsets."""
    offsets = np.asarray(offsets, dtype=float)
    A = np.vander(offsets, len(offsets), increasing=True).T
    rhs = np.zeros(len(offsets))
    rhs[order] = float(np.prod(np.arange(1, order + 1)))
    return np.linalg.solve(A, rhs)


def diff_high(a: np.ndarray, h: float, order: int = 1, width: int = 9, axis: int = -1) -> np.ndarray:
    """order-th derivative from width-point stencils, shifted inward near the ends.

    Accuracy is width - order everywhere, so repeated application does not
    pile up wall-localized errors the way the second-order stencils do.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    n = a.shape[-1]
    if n < width:
        raise GridError(f"need at least {width} nodes for a {width}-point stencil")
    half = width // 2
    out = np.empty_like(a)
    for j in range(n):
        lo = min(max(j - half, 0), n - width)
        w = fd_weights(order, np.arange(lo, lo + width) - j) if j < half or j >= n - half else None
        if w is None:
            continue
        out[..., j] = a[..., lo:lo + width] @ w / h**order
    w = fd_weights(order, np.arange(-half, width - half))
    inner = sum(w[i] * a[..., i:n - width + 1 + i] for i in range(width))
    out[..., half:n - width + 1 + half] = inner / h**order
    return np.moveaxis(out, -1, axis)


def diff_periodic(a: np.ndarray, h: float, axis: int = 1, order: int = 1) -> np.ndarray:
    if order == 1:
        return (np.roll(a, -1, axis) - np.roll(a, 1, axis)) / (2 * h)
    if order == 2:
        return (np.roll(a, -1, axis) - 2 * a + np.roll(a, 1, axis)) / h**2
    raise GridError(f"unsupported derivative order {order}")


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return w


def cumulative_from_zero(a: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Trapezoid value of the integral from the first node to each node."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    out = np.zeros_like(a)
    out[..., 1:] = np.cumsum(0.5 * h * (a[..., 1:] + a[..., :-1]), axis=-1)
    return np.moveaxis(out, -1, axis)


def cumulative_tail(a: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Trapezoid value of the integral from each node to the last node."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    seg = 0.5 * h * (a[..., 1:] + a[..., :-1])
    out = np.zeros_like(a)
    out[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
    return np.moveaxis(out, -1, axis)


# ---- field-level operations -----------------------------------------------

def _require(f: Field, *kinds):
    if f.kind not in kinds:
        raise GridError(f"expected a field of kind {kinds}, got {f.kind!r}")


def d_x(f: Field, order: int = 1) -> Field:
    _require(f, "interior", "boundary", "profile")
    if f.kind == "profile":
        return f.with_values(np.zeros_like(f.values))
    return f.with_values(diff_periodic(f.values, f.spec.dx, axis=1, order=order))


def d_y(f: Field, order: int = 1) -> Field:
    _require(f, "interior", "profile")
    if f.spec.n_y < 4:
        raise GridError("d_y needs n_y >= 4")
    if order == 1:
        return f.with_values(diff1(f.values, f.spec.dy, axis=2))
    if order == 2:
        return f.with_values(diff2(f.values, f.spec.dy, axis=2))
    raise GridError(f"unsupported derivative order {order}")


def d_t(f: Field, order: int = 1) -> Field:
    if order == 1:
        return f.with_values(diff1(f.values, f.spec.dt, axis=0))
    if order == 2:
        return f.with_values(diff2(f.values, f.spec.dt, axis=0))
    raise GridError(f"unsupported derivative order {order}")


def trace(f: Field) -> Field:
    """Restriction to y = 0."""
    _require(f, "interior", "profile")
    return Field(f.spec, f.full()[:, :, :1], "boundary")


def tail_integral(w: Field, y_index: int | None = None, tail_tol: float = 1e-6) -> Field:
    """Integral of w from y to Y_max, for every y (or for the single row y_index).

    The tail beyond Y_max is taken to be zero; if |w| at Y_max exceeds
    tail_tol a warning is logged.
    """
    _require(w, "interior", "profile")
    top = np.max(np.abs(w.values[..., -1]))
    if top > tail_tol:
        log.warning("tail_integral: |w| = %.3e at Y_max exceeds tail tolerance %.1e", top, tail_tol)
    tail = cumulative_tail(w.values, w.spec.dy, axis=2)
    if y_index is None:
        return w.with_values(tail)
    if w.kind == "profile":
        return Field(w.spec, np.broadcast_to(tail[:, :, y_index:y_index + 1], (w.spec.n_t, w.spec.n_x, 1)), "boundary")
    return Field(w.spec, tail[:, :, y_index:y_index + 1], "boundary")


def integral_from_zero(f: Field) -> Field:
    _require(f, "interior", "profile")
    return f.with_values(cumulative_from_zero(f.values, f.spec.dy, axis=2))

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prandtl_robin.errors import GridError
from prandtl_robin.grid import Field, GridSpec
from prandtl_robin.smoothing import (S, Mollifier, S_u, S_v, bump, extend, fit_exponent, smooth,
                                     telescoping_constants, verify_divergence_preservation)

SPEC = GridSpec(41, 32, 161, 1.0, 2 * np.pi, 8.0)
thetas = st.sampled_from([2.0, 3.0, 4.0, 5.0])


def test_bump_support_and_peak():
    assert bump(np.array([-1.0, 1.0, 1.5]))[...].tolist() == [0.0, 0.0, 0.0]
    assert bump(np.array([0.0]))[0] == pytest.approx(np.exp(-1.0))


@given(thetas, st.sampled_from([-1, 0, 1]))
def test_taps_have_unit_mass(theta, shift):
    m, w = Mollifier(theta).taps(0.05, shift)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(w >= 0)


@given(thetas, st.floats(-3, 3))
def test_constants_preserved_away_from_edges(theta, c):
    out = S_u(np.full(SPEC.shape, c), SPEC, theta)
    nt = int(np.ceil(2 / (theta * SPEC.dt))) + 1
    assert np.allclose(out[nt:, :, :], c, atol=1e-12 * (1 + abs(c)))


@given(thetas)
def test_odd_smoother_vanishes_at_wall(theta):
    rng = np.random.default_rng(int(theta * 10))
    v = rng.normal(size=SPEC.shape)
    v[..., 0] = 0.0
    assert np.max(np.abs(S_v(v, SPEC, theta)[..., 0])) <= 1e-12


@given(thetas)
def test_past_shift_preserves_zero_initial_layer(theta):
    t = SPEC.t[:, None, None]
    f = np.broadcast_to(np.where(t > 0.5, (t - 0.5) ** 2, 0.0) * np.cos(SPEC.x)[None, :, None],
                        SPEC.shape).copy()
    for op in (S, S_u, S_v):
        assert np.max(np.abs(op(f, SPEC, theta)[SPEC.t <= 0.5])) == 0.0


@given(thetas, st.integers(0, 1000))
def test_smoothers_are_linear(theta, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(2,) + SPEC.shape)
    for op in (S, S_u, S_v):
        assert np.allclose(op(2 * a - b, SPEC, theta), 2 * op(a, SPEC, theta) - op(b, SPEC, theta), atol=1e-12)


def test_smoothing_is_an_average_bound():
    rng = np.random.default_rng(0)
    f = rng.uniform(-1, 1, SPEC.shape)
    for op in (S, S_u, S_v):
        assert np.max(np.abs(op(f, SPEC, 3.0))) <= 1.0 + 1e-12


def test_extensions():
    s = GridSpec(4, 4, 41, 0.5, 1.0, 4.0)
    a = np.broadcast_to(s.y + 1.0, s.shape)
    ext, nb = extend(a, s, "even", 2.0)
    assert np.allclose(ext[0, 0, nb - 1], a[0, 0, 1])
    ext, nb = extend(a, s, "odd", 2.0)
    assert np.allclose(ext[0, 0, nb - 1], -a[0, 0, 1])
    ext, nb = extend(a, s, "zero", 2.0)
    assert np.all(ext[..., :nb] == 0)
    with pytest.raises(ValueError):
        extend(a, s, "periodic", 2.0)


def test_unresolved_theta_is_structural_error():
    with pytest.raises(GridError):
        Mollifier(100.0).check_resolvable(SPEC)
    with pytest.raises(ValueError):
        Mollifier(-1.0)


def test_divergence_preserved_to_second_order():
    res = []
    for n in (1, 2):
        sp = GridSpec(9, 32 * n, 64 * n + 1, 0.5, 2 * np.pi, 8.0)
        t, x, y = sp.mesh()
        u = np.broadcast_to(np.cos(x) * np.exp(-y), sp.shape)
        v = np.broadcast_to(np.sin(x) * (1 - np.exp(-y)), sp.shape)
        res.append(verify_divergence_preservation(u, v, sp, 2.0))
    assert res[0] / res[1] > 3.5
    with pytest.raises(ValueError):
        verify_divergence_preservation(u, v + 1.0, sp, 2.0)


def test_fit_exponent_recovers_power_law():
    th = np.array([4.0, 8.0, 16.0])
    slope, resid = fit_exponent(th, 3 * th**1.5)
    assert slope == pytest.approx(1.5)
    assert resid < 1e-12
    with pytest.raises(ValueError):
        fit_exponent(th[:2], th[:2])


def test_smooth_field_wrapper_and_telescoping():
    f = Field.from_function(SPEC, lambda t, x, y: t**2 * np.cos(x) * np.exp(-y))
    g = smooth(f, Mollifier(3.0), "even")
    assert g.values.shape == SPEC.shape
    c = telescoping_constants(f.values, SPEC, 0, 0, 3.0, [1, 2, 3])
    assert all(np.isfinite(c)) and max(c) < 10


def test_extension_examples():
    s = GridSpec(4, 4, 101, 0.5, 1.0, 4.0)
    theta = 2.0
    lin = np.broadcast_to(s.y, s.shape)
    ext, nb = extend(lin, s, "odd", theta)
    ybelow = -(np.arange(nb, 0, -1)) * s.dy
    want = np.where(-ybelow < 1 / theta, ybelow, 0.0)
    assert np.allclose(ext[0, 0, :nb], want)
    ext, nb = extend(np.broadcast_to(s.y**2, s.shape), s, "even", theta)
    assert ext[0, 0, nb - 1] == pytest.approx(s.dy**2)


def test_unit_and_zero_fields():
    one = np.ones(SPEC.shape)
    nt = int(np.ceil(2 / (3.0 * SPEC.dt))) + 1
    assert np.allclose(S_u(one, SPEC, 3.0)[nt:, :, 0], 1.0, atol=1e-13)
    for op in (S, S_u, S_v):
        assert np.all(op(np.zeros(SPEC.shape), SPEC, 3.0) == 0)
    v = np.broadcast_to(SPEC.y, SPEC.shape)
    assert np.max(np.abs(S_v(v, SPEC, 3.0)[..., 0])) <= 1e-14


def test_divergence_pair_examples():
    sp = GridSpec(9, 64, 129, 0.5, 2 * np.pi, 8.0)
    z = np.zeros(sp.shape)
    assert verify_divergence_preservation(z, z, sp, 2.0) == 0.0
    t, x, y = sp.mesh()
    u = np.broadcast_to(np.cos(x) * np.exp(-y), sp.shape)
    v = np.broadcast_to(np.sin(x) * (1 - np.exp(-y)), sp.shape)
    assert verify_divergence_preservation(u, v, sp, 2.0) <= 5 * (sp.dx**2 + sp.dy**2)

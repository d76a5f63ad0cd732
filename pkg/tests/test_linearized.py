import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prandtl_robin import operators as ops
from prandtl_robin.errors import ConfigError, MonotonicityError
from prandtl_robin.grid import Field, GridSpec
from prandtl_robin.linearized import (build_background, initial_from_u, recover_u, recover_v, solve_case_I,
                                      solve_case_II, solve_vorticity, trace_identity_residual)
from prandtl_robin.shear import ShearInitSpec, shear_on_strip

SPEC = GridSpec(11, 8, 41, 0.5, 2 * np.pi, 8.0)


@pytest.fixture(scope="module")
def shear():
    return shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), SPEC.y, SPEC.t)


@pytest.fixture(scope="module")
def bg(shear):
    us = np.broadcast_to(shear.u_s[:, None, :], SPEC.shape)
    return build_background(Field(SPEC, us), Field(SPEC, np.zeros(SPEC.shape)), shear, 1.0,
                            perturbation=np.zeros(SPEC.shape))


def forcing(seed):
    rng = np.random.default_rng(seed)
    t, x, y = SPEC.mesh()
    return np.broadcast_to(t * np.sin(x + rng.uniform(0, 6)) * np.exp(-(y - rng.uniform(0.5, 2)) ** 2),
                           SPEC.shape).copy()


def test_shear_background_coefficients(bg, shear):
    assert bg.min_u_y > 0
    assert np.allclose(bg.eta.values[:, 0, :], shear.u_yy / shear.u_y)
    assert bg.delta > 0


def test_zero_forcing_gives_zero_solution(bg):
    sol = solve_case_I(bg, np.zeros(SPEC.shape), record_energy=False)
    assert np.max(np.abs(sol.w)) == 0.0 and np.max(np.abs(sol.u)) == 0.0


@settings(max_examples=5)
@given(st.integers(0, 1000), st.integers(0, 1000), st.floats(-2, 2))
def test_solution_map_is_linear(bg, a, b, c):
    fa, fb = forcing(a), forcing(b)
    s1 = solve_vorticity(bg, f_tilde=fa, record_energy=False)
    s2 = solve_vorticity(bg, f_tilde=fb, record_energy=False)
    s3 = solve_vorticity(bg, f_tilde=fa + c * fb, record_energy=False)
    assert np.allclose(s3.u, s1.u + c * s2.u, atol=1e-12)


def test_velocity_recovery_properties(bg):
    sol = solve_case_I(bg, forcing(1) * bg.u_y, record_energy=True)
    assert np.max(np.abs(sol.v[..., 0])) == 0.0
    assert np.allclose(sol.v, recover_v(sol.u, SPEC))
    assert trace_identity_residual(sol.u, sol.w, bg) < 0.05 * np.max(np.abs(sol.u))
    assert len(sol.energy_log) == SPEC.n_t


def test_case_II_initial_data_round_trip_converges():
    errs = []
    for ny in (41, 81, 161):
        s = GridSpec(11, 8, ny, 0.5, 2 * np.pi, 8.0)
        sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), s.y, s.t)
        b = build_background(Field(s, np.broadcast_to(sh.u_s[:, None, :], s.shape)),
                             Field(s, np.zeros(s.shape)), sh, 1.0, perturbation=np.zeros(s.shape))
        # u0 = u_y phi with phi decaying, so u0 / u_y stays bounded up to the top
        u0 = b.u_y[0] * np.cos(s.x)[:, None] * s.y * np.exp(-s.y)
        w0, wtop = initial_from_u(u0, b)
        sol = solve_case_II(b, w0, w_top0=wtop, record_energy=False)
        errs.append(np.max(np.abs(sol.u[0] - u0)))
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_large_time_step_rejected(shear):
    # p = c t (1 - e^{-y}) keeps u_y positive while zeta ~ c
    s = GridSpec(4, 8, 41, 0.5, 2 * np.pi, 8.0)
    sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), s.y, s.t)
    t, x, y = s.mesh()
    p = np.broadcast_to(50.0 * t * (1 - np.exp(-y)), s.shape).copy()
    us = sh.u_s[:, None, :] + p
    b = build_background(Field(s, us), Field(s, np.zeros(s.shape)), sh, 1.0, perturbation=p)
    with pytest.raises(ConfigError):
        solve_vorticity(b, f_tilde=np.zeros(s.shape))


def test_monotonicity_guard(shear):
    p = np.broadcast_to(-5.0 * SPEC.y * np.exp(-SPEC.y), SPEC.shape)
    with pytest.raises(MonotonicityError):
        build_background(Field(SPEC, shear.u_s[:, None, :] + p), Field(SPEC, np.zeros(SPEC.shape)), shear, 1.0,
                         perturbation=p)


@given(st.integers(0, 10**6))
def test_taylor_identity_is_exact(seed):
    # P(p + du) - P(p) - P'(du) = du du_x + dv du_y with no discretization error
    sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), SPEC.y, SPEC.t)
    rng = np.random.default_rng(seed)
    p, v, du, dv = 0.1 * rng.normal(size=(4,) + SPEC.shape)
    lin = ops.linearized_operator(du, dv, ops.background(p, v, sh, SPEC), SPEC)
    lhs = ops.prandtl_residual(p + du, v + dv, sh, SPEC) - ops.prandtl_residual(p, v, sh, SPEC) - lin
    _, du_x, du_y, _ = ops.derivs(du, SPEC)
    assert np.allclose(lhs, du * du_x + dv * du_y, atol=1e-10)


def test_robin_residual_of_exponential():
    s = GridSpec(4, 4, 401, 0.5, 1.0, 4.0)
    a = np.broadcast_to(np.exp(2.0 * s.y), s.shape)
    assert np.max(np.abs(ops.robin_residual(a, s, 2.0))) < 1e-3


def _strip(m, exact=True):
    s = GridSpec(10 * m + 1, 8, 40 * m + 1, 0.5, 2 * np.pi, 8.0)
    sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), s.y, s.t)
    z = np.zeros(s.shape)
    b = build_background(Field(s, np.broadcast_to(sh.u_s[:, None, :], s.shape)), Field(s, z), sh, 1.0,
                         perturbation=z, exact_shear=exact)
    return s, b


def test_pure_shear_background_has_no_residual_terms(bg):
    assert np.max(np.abs(bg.zeta2_tilde.values)) == 0.0
    assert np.max(np.abs(bg.eta.values - bg.eta_bar.values)) == 0.0
    assert np.max(np.abs(bg.zeta.values)) == 0.0


def test_discrete_zeta_on_pure_shear_is_small_near_wall():
    # without the exact shear shortcut zeta is a discretization residual
    s, b = _strip(2, exact=False)
    assert np.max(np.abs(b.zeta.values[:, 0, 1:int(4 / s.dy)])) < 0.1


def test_zero_initial_vorticity_stays_zero(bg):
    sol = solve_case_II(bg, np.zeros((SPEC.n_x, SPEC.n_y)), w_top0=np.zeros(SPEC.n_x), record_energy=False)
    assert np.max(np.abs(sol.w)) == 0.0


@settings(max_examples=5)
@given(st.floats(-3, 3))
def test_case_II_scales_with_data(bg, c):
    u0 = bg.u_y[0] * np.cos(SPEC.x)[:, None] * SPEC.y * np.exp(-SPEC.y)
    w0, wtop = initial_from_u(u0, bg)
    s1 = solve_case_II(bg, w0, w_top0=wtop, record_energy=False)
    s2 = solve_case_II(bg, c * w0, w_top0=c * wtop, record_energy=False)
    assert np.allclose(s2.w, c * s1.w, atol=1e-12)


def test_case_II_energy_nonincreasing_up_to_step_size(bg):
    u0 = bg.u_y[0] * np.cos(SPEC.x)[:, None] * SPEC.y * np.exp(-SPEC.y)
    w0, wtop = initial_from_u(u0, bg)
    sol = solve_case_II(bg, w0, w_top0=wtop, record_energy=True)
    e = np.array([r["interior"] + r["wall"] for r in sol.energy_log])
    assert e[-1] < e[0]
    assert np.max(np.diff(e)) <= SPEC.dt * e[0]


def test_recover_u_of_exponential(bg):
    w = np.broadcast_to(np.exp(-SPEC.y), SPEC.shape)
    expected = -bg.u_y * (np.exp(-SPEC.y) - np.exp(-SPEC.y_max))
    assert np.max(np.abs(recover_u(w, bg) - expected)) < 5 * SPEC.dy**2


def test_recover_v_of_x_independent_u_is_zero():
    u = np.broadcast_to(SPEC.y * np.exp(-SPEC.y), SPEC.shape)
    assert np.max(np.abs(recover_v(u, SPEC))) < 1e-12


def test_solution_divergence_is_second_order_small(bg):
    sol = solve_case_I(bg, forcing(2) * bg.u_y, record_energy=False)
    u_x = ops.derivs(sol.u, SPEC)[1]
    v_y = np.gradient(sol.v, SPEC.dy, axis=2, edge_order=2)
    assert np.max(np.abs(u_x + v_y)) <= 5 * (SPEC.dx**2 + SPEC.dy**2)


def test_trace_identity_second_order_on_compatible_runs():
    res = []
    for m in (1, 2, 4):
        s, b = _strip(m)
        t, x, y = s.mesh()
        f = np.broadcast_to(t * np.sin(x) * np.exp(-(y - 1) ** 2), s.shape)
        sol = solve_case_I(b, f, record_energy=False)
        res.append(trace_identity_residual(sol.u, sol.w, b))
        assert res[-1] <= 5 * s.dy**2
    assert res[0] / res[1] > 3 and res[1] / res[2] > 3

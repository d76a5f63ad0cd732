import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from prandtl_robin import nash_moser as nm
from prandtl_robin.errors import ConfigError, GridError
from prandtl_robin.grid import GridSpec
from prandtl_robin.shear import ShearInitSpec, shear_on_strip

SMALL = GridSpec(21, 12, 121, 0.5, 1.0, 8.0)


@pytest.fixture(scope="module")
def shear():
    return shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), SMALL.y, SMALL.t)


@pytest.fixture(scope="module")
def report(shear):
    cfg = nm.IterationConfig(theta0=4, max_iters=3, epsilon=1e-2)
    return nm.run(cfg, shear, SMALL, nm.unit_perturbation(SMALL, 1.0))


def test_schedule_values():
    assert nm.theta_schedule(10, 5) == pytest.approx(np.sqrt(105))
    assert nm.theta_schedule(10, 0) == 10
    assert nm.delta_theta(10, 0) == pytest.approx(np.sqrt(101) - 10)


@given(st.floats(3, 50), st.integers(0, 10**4))
def test_schedule_increment_bounds(theta0, n):
    # sqrt(a + 1) - sqrt(a) lies between 1/(2 sqrt(a + 1)) and 1/(2 sqrt(a))
    th, th1 = nm.theta_schedule(theta0, n), nm.theta_schedule(theta0, n + 1)
    d = nm.delta_theta(theta0, n)
    assert 1 / (2 * th1) <= d <= 1 / (2 * th) + 1e-15


def test_validation_errors():
    with pytest.raises(ConfigError):
        nm.IterationConfig(theta0=1).validate()
    with pytest.raises(GridError):
        nm.IterationConfig(k0=3).validate(GridSpec(21, 12, 8, 0.5, 1.0, 8.0))
    with pytest.raises(ConfigError):
        nm.IterationConfig(theta0=10).validate(SMALL)


def test_far_field_taper_endpoints():
    y = np.linspace(0, 10, 101)
    w = nm.far_field_taper(y)
    assert np.all(w[y <= 5] == 1) and np.all(w[y >= 9] == 0)
    assert np.all(np.diff(w) <= 0)


def test_zero_data_is_already_converged(shear):
    cfg = nm.IterationConfig(theta0=4, max_iters=3)
    rep = nm.run(cfg, shear, SMALL, np.zeros((SMALL.n_x, SMALL.n_y)))
    assert rep.status == "converged" and rep.records == []
    assert rep.initial_residual == 0.0


def test_zero_errors_give_zero_force(shear):
    st_ = nm.start_state(nm.IterationConfig(theta0=4), shear, SMALL, np.zeros((SMALL.n_x, SMALL.n_y)))
    assert np.max(np.abs(st_.f_a)) == 0.0
    st_.n = 2
    st_.e_history = [np.zeros(SMALL.shape), np.zeros(SMALL.shape)]
    assert np.max(np.abs(nm.force_update(st_, 4.2, 4.1))) == 0.0


@pytest.mark.parametrize("k0", [1, 2])
def test_zeroth_order_residual_vanishes_to_order_k0(k0):
    s = GridSpec(61, 24, 400, 0.5, 1.0, 10.0)
    sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), s.y, s.t)
    _, _, fa, _ = nm.zeroth_order(sh, 1e-2 * nm.unit_perturbation(s, 1.0), k0, s)
    # the t = 0 slice is the discretization floor; the growth above it is t^k0
    m = np.max(np.abs(fa - fa[:1]), axis=(1, 2))
    slope = np.polyfit(np.log(s.t[1:11]), np.log(m[1:11]), 1)[0]
    assert slope >= k0 - 0.3


def test_iteration_identities_hold_to_roundoff(report):
    assert report.records
    for r in report.records:
        assert r["audit_taylor"] <= 1e-10 * max(r["audit_taylor_scale"], 1e-300) + 1e-14
        assert r["audit_residual_exact"] <= 1e-12
        assert r["telescoping"] <= 1e-12
        assert r["reconstruction"] <= 1e-12


def test_residual_decreases_and_report_serializes(report):
    res = [report.initial_residual] + [r["residual"] for r in report.records]
    assert all(b < a for a, b in zip(res[:-1], res[1:]))
    d = report.to_dict()
    assert "state" not in d and d["monotone_after_2"] in (True, False)


def test_compatible_perturbation_satisfies_robin():
    s = GridSpec(5, 8, 801, 0.5, 1.0, 8.0)
    p = nm.unit_perturbation(s, 2.0)
    assert np.max(np.abs(p)) == pytest.approx(1.0)
    assert np.max(np.abs(nm._robin(p, s, 2.0))) < 1e-4


def test_rate_fit_on_exact_power_law():
    recs = []
    for n in range(2, 10):
        th, d = float(nm.theta_schedule(10, n)), float(nm.delta_theta(10, n))
        recs.append({"n": n, "theta": th, "dtheta": d, "du_norm": 3 * th ** (3 - 7) * d})
    slope, window = nm.rate_fit(recs, 7)
    assert slope == pytest.approx(1.0) and window == (2, 9)
    assert nm.rate_fit(recs[:2], 7) == (None, None)


def test_schedule_sums_match_direct_loop():
    out = nm.schedule_sum_check(10.0, 7, j_max=40)
    for k, v in out.items():
        acc = 0.0
        for m in range(40):
            acc += nm.theta_schedule(10, m) ** (k - 7) * nm.delta_theta(10, m)
        ref = acc / nm.theta_schedule(10, 40) ** max(k + 1 - 7 + 0.1, 0.0)
        assert v["ratio_last"] == pytest.approx(float(ref), rel=1e-12)


def test_identical_data_give_zero_difference(shear):
    cfg = nm.IterationConfig(theta0=4, max_iters=2, epsilon=1e-2)
    rep = nm.stability_experiment(cfg, shear, SMALL, nm.unit_perturbation(SMALL, 1.0), gaps=(0.0,))
    assert rep.rows[0].direct_difference == 0.0


def test_first_taylor_coefficient_inherits_robin():
    res = []
    for ny in (121, 241, 481):
        s = GridSpec(5, 12, ny, 0.5, 1.0, 8.0)
        sh = shear_on_strip(ShearInitSpec("tanh", 1.0, 1.0), s.y, s.t)
        P = nm.zeroth_order(sh, 1e-2 * nm.unit_perturbation(s, 1.0), 2, s)[3]
        res.append(float(np.max(np.abs(nm._robin(P[1], s, 1.0)))))
    assert res[-1] < 1e-4 * np.max(np.abs(P[1]))
    assert res[0] / res[1] > 4 and res[1] / res[2] > 4


def test_mollified_zero_background_is_zero(shear):
    st0 = nm.start_state(nm.IterationConfig(theta0=4), shear, SMALL, np.zeros((SMALL.n_x, SMALL.n_y)))
    pth, vth = nm.mollify_background(st0, 4.0)
    assert np.max(np.abs(pth)) == 0.0 and np.max(np.abs(vth)) == 0.0


def test_mollified_v_vanishes_at_wall(shear):
    st0 = nm.start_state(nm.IterationConfig(theta0=4), shear, SMALL, 1e-2 * nm.unit_perturbation(SMALL, 1.0))
    _, vth = nm.mollify_background(st0, 4.0)
    assert np.max(np.abs(vth[..., 0])) < 1e-14


def test_first_force_is_minus_smoothed_zeroth_error(shear):
    from prandtl_robin.smoothing import S
    st0 = nm.start_state(nm.IterationConfig(theta0=4), shear, SMALL, 1e-2 * nm.unit_perturbation(SMALL, 1.0))
    assert np.array_equal(nm.force_update(st0, 4.0, None), -S(st0.f_a, SMALL, 4.0))


def test_zero_force_gives_zero_increment(shear):
    st0 = nm.start_state(nm.IterationConfig(theta0=4), shear, SMALL, np.zeros((SMALL.n_x, SMALL.n_y)))
    rec = nm.iterate_once(st0, nm.IterationConfig(theta0=4))
    assert rec["du_norm"] == 0.0 and np.max(np.abs(st0.delta_u)) == 0.0

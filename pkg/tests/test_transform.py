from __future__ import annotations

import math

import numpy as np
import pytest

from stickysim.engine import NoiseStream, SimGrid, UndelayedPath, simulate_undelayed
from stickysim.errors import DomainError, SpecificationError
from stickysim.model import PiecewiseFn, ProcessSpec, validate_process_spec
from stickysim.transform import (TestFunction, build_time_change, delayed_ensemble, delayed_path,
                                 dynkin_check, dynkin_ensemble, generator_image,
                                 girsanov_reweight, girsanov_weights, invert_time_change,
                                 occupation_identity_report, sde_residual_check, simulate_delayed,
                                 tilted_spec)

pw = PiecewiseFn.from_expression


def sticky(alpha=1.0, p_plus=0.5):
    return validate_process_spec(ProcessSpec.sticky_bm(alpha, p_plus))


def bm_spec():
    return validate_process_spec(ProcessSpec(pw("0"), pw("1"), (), 1.0))


# ---------------------------------------------------------------------------
# time change


def test_time_change_examples():
    s = np.linspace(0, 1, 11)
    ident = build_time_change((s, np.c_[s]), 0.0)
    np.testing.assert_array_equal(ident.r, s)
    double = build_time_change((s, np.c_[s]), 1.0)
    np.testing.assert_allclose(double.r, 2 * s)
    ell = np.maximum(s - 0.5, 0.0)
    late = build_time_change((s, np.c_[ell]), 2.0)
    assert late.r[-1] == pytest.approx(2.0)
    with pytest.raises(SpecificationError):
        build_time_change((s, np.c_[s]), -1.0)


def test_invert_time_change():
    s = np.linspace(0, 1, 11)
    ident = build_time_change((s, np.c_[s]), 0.0)
    assert invert_time_change(ident, 0.37) == pytest.approx(0.37)
    double = build_time_change((s, np.c_[s]), 1.0)
    assert invert_time_change(double, 1.0) == pytest.approx(0.5)
    for k in range(11):
        assert invert_time_change(double, double.r[k]) == s[k]
    t = np.linspace(0, 2, 57)
    assert np.all(np.diff(invert_time_change(double, t)) >= 0)
    with pytest.raises(DomainError):
        invert_time_change(double, 2.5)


# ---------------------------------------------------------------------------
# delayed paths


def test_zero_delay_reproduces_undelayed_path():
    spec = sticky(0.0)
    grid = SimGrid(1.0, 1e-3)
    up = simulate_undelayed(spec, grid, NoiseStream(1, 0))
    dp = delayed_path(up, build_time_change(up, spec.alphas), grid)
    np.testing.assert_array_equal(dp.values, up.values)
    np.testing.assert_array_equal(dp.local_time, up.local_time)
    assert np.all(dp.occupation == 0.0)
    assert np.all(occupation_identity_report(dp) == 0.0)


def _synthetic(n=64, dt=2.0 ** -6):
    # dyadic steps keep every clock value exact, so dwell boundaries do not tie
    s = np.arange(n + 1) * dt
    up = UndelayedPath(s, np.zeros(n + 1), np.c_[s], np.zeros(n), np.array([0.0]))
    return up, build_time_change(up, 1.0)


def test_synthetic_sticky_path():
    up, table = _synthetic()
    dt = 2.0 ** -6
    dp = delayed_path(up, table, SimGrid(2.0, dt))
    assert np.all(dp.values == 0.0)
    even = np.arange(0, dp.times.size, 2)
    # exact on the undelayed grid, within one half step between its nodes
    np.testing.assert_allclose(dp.local_time[even, 0], dp.times[even] / 2, atol=1e-12)
    assert np.all(np.abs(dp.local_time[:, 0] - dp.times / 2) <= dt / 2 + 1e-12)
    np.testing.assert_allclose(dp.occupation[even, 0], dp.times[even] / 2, atol=1e-12)
    assert np.all(np.abs(dp.occupation[:, 0] - dp.times / 2) <= dt + 1e-12)
    assert occupation_identity_report(dp)[0] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        delayed_path(up, table, SimGrid(2.5, dt))


def test_kernel_ensemble_matches_numpy_construction():
    spec = sticky(1.0, 0.3)
    T, dt = 0.5, 1e-3
    ens = delayed_ensemble(spec, T, dt, 8, 77, times=[0.1, 0.25, 0.5])
    for i in range(8):
        dp, _ = simulate_delayed(spec, SimGrid(T, dt), NoiseStream(77, i))
        for q, t in enumerate(ens.times):
            j = int(round(t / dt))
            assert ens.x[i, q] == dp.values[j]
            assert ens.at_point[i, q] == dp.at_point[j]
            assert ens.local_time[i, q, 0] == pytest.approx(dp.local_time[j, 0], abs=1e-13)
            assert ens.occupation[i, q, 0] == pytest.approx(dp.occupation[j, 0], abs=1e-12)


def test_delayed_path_invariants():
    spec = sticky(1.0)
    for i in range(30):
        dp, _ = simulate_delayed(spec, SimGrid(1.0, 1e-3), NoiseStream(3, i))
        L = dp.local_time[:, 0]
        assert np.all(np.diff(L) >= 0)
        assert np.all(1.0 * L <= dp.times + 1e-12)
        flagged = dp.at_point == 0
        assert np.all(dp.values[flagged] == 0.0)
        # occupation equals alpha L up to one output step per dwell boundary
        assert abs(dp.occupation[-1, 0] - L[-1]) <= 2e-3


def test_occupation_is_monotone_in_alpha():
    dt = 1e-3
    for i in range(20):
        occ = []
        for a in (0.25, 0.5, 1.0, 2.0):
            dp, _ = simulate_delayed(sticky(a), SimGrid(1.0, dt), NoiseStream(8, i))
            occ.append(dp.occupation[-1, 0])
        assert np.all(np.diff(occ) >= -dt)


def test_ensemble_independent_of_threads():
    spec = sticky(1.0)
    a = delayed_ensemble(spec, 0.5, 1e-3, 40, 5, threads=1)
    b = delayed_ensemble(spec, 0.5, 1e-3, 40, 5, threads=3)
    for name in ("x", "local_time", "occupation", "at_point", "steps"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_ensemble_time_validation():
    with pytest.raises(SpecificationError):
        delayed_ensemble(sticky(), 1.0, 1e-3, 2, 0, times=[0.12345])
    with pytest.raises(SpecificationError):
        delayed_ensemble(sticky(), 1.0, 1e-3, 0, 0)


# ---------------------------------------------------------------------------
# SDE pair


def test_sde_residual_vanishes_without_points():
    spec = bm_spec()
    dp, up = simulate_delayed(spec, SimGrid(1.0, 1e-3), NoiseStream(2, 0))
    res = sde_residual_check(dp, spec, up)
    assert res.sup_residual <= 1e-12
    with pytest.raises(SpecificationError):
        sde_residual_check(dp, spec, up, up.dW[:-1])


def test_sde_residual_reflected_case():
    spec = sticky(0.0, 1.0)
    dp, up = simulate_delayed(spec, SimGrid(1.0, 1e-3), NoiseStream(2, 1))
    res = sde_residual_check(dp, spec, up)
    assert res.sup_residual <= np.diff(up.local_time[:, 0]).max() + 1e-12


def test_quadratic_variation_matches_moving_time():
    spec = sticky(1.0)
    errs = []
    for i in range(2000):
        dp, up = simulate_delayed(spec, SimGrid(1.0, 1e-4), NoiseStream(4, i))
        res = sde_residual_check(dp, spec, up)
        errs.append(res.quadratic_variation - res.qv_target)
    assert abs(np.mean(errs)) <= 0.02


# ---------------------------------------------------------------------------
# Dynkin


def test_dynkin_constant_function_is_exact():
    spec = sticky(1.0)
    tf = TestFunction.from_piecewise("1", [0.0])
    ens = dynkin_ensemble(spec, tf, 0.5, 1e-3, 50, 1)
    mc = dynkin_check(ens, tf, spec)
    assert mc.mean == 0.0 and mc.se == 0.0


def test_dynkin_martingale_and_domain_functions():
    spec = sticky(1.0)
    for text in ("x", "x^2 + abs(x)", "x^2"):
        tf = TestFunction.from_piecewise(text, [0.0])
        ens = dynkin_ensemble(spec, tf, 1.0, 1e-3, 4000, 12)
        mc = dynkin_check(ens, tf, spec)
        assert abs(mc.mean) <= 3 * mc.se + 1e-12, text


def test_generator_image_of_domain_function():
    spec = sticky(1.0)
    Lf, at = generator_image(TestFunction.from_piecewise("x^2 + abs(x)", [0.0]), spec)
    assert at[0] == pytest.approx(1.0)
    assert Lf(0.7) == pytest.approx(1.0)


def test_invalid_test_function():
    with pytest.raises(SpecificationError, match="invalid test function"):
        TestFunction.from_piecewise("x | 0: x + 1", [0.0])


# ---------------------------------------------------------------------------
# Girsanov


def test_single_step_weight():
    assert girsanov_weights([1.0], [0.1], 0.01) == pytest.approx(math.exp(0.1 - 0.005))


def test_zero_tilt_gives_unit_weights():
    spec = sticky(1.0)
    ens = delayed_ensemble(spec, 0.5, 1e-3, 200, 3, tilt=PiecewiseFn.constant(0.0))
    assert np.all(ens.log_weight == 0.0)
    est = girsanov_reweight(ens, lambda x: x)
    assert est.estimate == pytest.approx(ens.x[:, -1].mean(), abs=1e-15)


def test_reweighting_matches_drifted_simulation():
    spec = sticky(1.0)
    tilt = PiecewiseFn.constant(0.5)
    ens = delayed_ensemble(spec, 1.0, 1e-3, 4000, 13, tilt=tilt)
    w = girsanov_reweight(ens, lambda x: x)
    direct = delayed_ensemble(tilted_spec(spec, tilt), 1.0, 1e-3, 4000, 14)
    d = direct.x[:, -1]
    se = math.hypot(w.se, d.std(ddof=1) / math.sqrt(d.size))
    assert abs(w.estimate - d.mean()) <= 3 * se
    assert w.ess > 0.5 * w.n


def test_degenerate_weights_warn():
    spec = sticky(1.0)
    ens = delayed_ensemble(spec, 1.0, 1e-3, 200, 3, tilt=PiecewiseFn.constant(6.0))
    with pytest.warns(RuntimeWarning, match="effective sample size"):
        est = girsanov_reweight(ens, lambda x: x)
    assert est.warning is not None


def test_tilted_spec_shifts_drift_only():
    spec = sticky(1.0, 0.3)
    t = tilted_spec(spec, PiecewiseFn.constant(0.5))
    assert t.b(1.0) == 0.5 and t.b(-1.0) == 0.5
    assert t.sticky_points == spec.sticky_points

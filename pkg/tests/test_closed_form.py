from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stickysim import closed_form as cf
from stickysim.errors import DomainError

# Frozen after computing each value with mpmath at 30 digits (see the oracle
# test below, which recomputes them independently).
GOLDEN = {
    "normal_cdf(2)": 0.977249868051820792,
    "bm_tail(1,1)": 0.317310507862914103,
    "sticky_tail(1,0.5,1)": 0.479500122186953462,
    "point_mass(1,1)": 0.336204002446341213,
    "point_mass(0.25,1)": 0.523156583730246743,
    "point_mass(1,0.5)": 0.188821282603937873,
    "point_mass(0.25,0.5)": 0.336204002446341213,
    "expected_occupation(1,1)": 0.465986562026035962,
    "char_fn(1,1,1)": 0.783781145237070442,
}


def _mp_pm(t, a):
    z = mp.sqrt(2 * t) / a
    return mp.exp(z * z) * mp.erfc(z)


def _mp_oracle():
    mp.mp.dps = 30
    tail = lambda t, y, a: mp.erfc((y / a) / mp.sqrt(2 * (t - y)))  # noqa: E731
    return {
        "normal_cdf(2)": mp.ncdf(2),
        "bm_tail(1,1)": mp.erfc(1 / mp.sqrt(2)),
        "sticky_tail(1,0.5,1)": tail(mp.mpf(1), mp.mpf("0.5"), 1),
        "point_mass(1,1)": _mp_pm(1, 1),
        "point_mass(0.25,1)": _mp_pm(mp.mpf("0.25"), 1),
        "point_mass(1,0.5)": _mp_pm(1, mp.mpf("0.5")),
        "point_mass(0.25,0.5)": _mp_pm(mp.mpf("0.25"), mp.mpf("0.5")),
        "expected_occupation(1,1)": mp.quad(lambda y: tail(1, y, 1), [0, mp.mpf("0.9"), 1]),
        # phi = exp(-t/2) + (1/2) int_0^1 exp(-(1-s)/2) P(X(s)=0) ds at lambda = 1
        "char_fn(1,1,1)": mp.exp(-mp.mpf(1) / 2)
        + mp.quad(lambda s: mp.exp(-(1 - s) / 2) * _mp_pm(s, 1), [0, 1]) / 2,
    }


def test_golden_values_match_independent_oracle():
    ref = _mp_oracle()
    for key, frozen in GOLDEN.items():
        assert abs(float(ref[key]) - frozen) < 1e-15, key


def test_library_matches_golden_values():
    got = {
        "normal_cdf(2)": cf.normal_cdf(2.0),
        "bm_tail(1,1)": cf.bm_local_time_tail(1.0, 1.0),
        "sticky_tail(1,0.5,1)": cf.sticky_local_time_tail(1.0, 0.5, 1.0),
        "point_mass(1,1)": cf.point_mass(1.0, 1.0),
        "point_mass(0.25,1)": cf.point_mass(0.25, 1.0),
        "point_mass(1,0.5)": cf.point_mass(1.0, 0.5),
        "point_mass(0.25,0.5)": cf.point_mass(0.25, 0.5),
        "expected_occupation(1,1)": cf.expected_occupation(1.0, 1.0),
        "char_fn(1,1,1)": cf.char_fn(1.0, 1.0, 1.0),
    }
    for key, v in got.items():
        tol = 1e-7 if key.startswith(("expected", "char")) else 1e-12
        assert v == pytest.approx(GOLDEN[key], abs=tol), key


# ---------------------------------------------------------------------------
# normal CDF


def test_normal_cdf_examples():
    assert cf.normal_cdf(0.0) == 0.5
    assert abs(cf.normal_cdf(40.0) - 1.0) <= 1e-15


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30))
def test_normal_cdf_against_mpmath(x):
    mp.mp.dps = 30
    assert abs(cf.normal_cdf(x) - float(mp.ncdf(x))) <= 1e-10


# ---------------------------------------------------------------------------
# local time tails


def test_bm_local_time_tail_examples():
    assert cf.bm_local_time_tail(1.0, 0.0) == 1.0
    assert cf.bm_local_time_tail(1.0, 1.0) == pytest.approx(0.31731, abs=5e-6)
    assert cf.bm_local_time_tail(1.0, 50.0) == 0.0
    with pytest.raises(DomainError):
        cf.bm_local_time_tail(0.0, 1.0)


def test_sticky_local_time_tail_examples():
    assert cf.sticky_local_time_tail(1.0, 0.0, 1.0) == 1.0
    assert cf.sticky_local_time_tail(1.0, 0.5, 1.0) == pytest.approx(0.47950, abs=5e-6)
    assert cf.sticky_local_time_tail(1.0, 1.0 - 1e-12, 1.0) <= 1e-6
    with pytest.raises(DomainError):
        cf.sticky_local_time_tail(1.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        cf.sticky_local_time_tail(1.0, 0.2, 1.0, p_plus=0.7)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0), st.floats(0.0, 0.999))
def test_sticky_tail_is_shifted_bm_tail(t, a, frac):
    y = frac * t
    assert cf.sticky_local_time_tail(t, y, a) == pytest.approx(
        cf.bm_local_time_tail(t - y, y / a), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.05, 5.0))
def test_sticky_tail_is_a_survival_function(t, a):
    ys = np.linspace(0.0, t, 200, endpoint=False)
    vals = np.array([cf.sticky_local_time_tail(t, y, a) for y in ys])
    assert vals[0] == 1.0
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.all((vals >= 0) & (vals <= 1))


# ---------------------------------------------------------------------------
# expected occupation and point mass


def test_expected_occupation_examples():
    assert cf.expected_occupation(0.0, 1.0) == 0.0
    assert cf.expected_occupation(1.0, 1e-8) <= 1e-4
    assert cf.expected_occupation(1.0, 1.0) == pytest.approx(0.466, abs=5e-4)


def test_point_mass_examples():
    assert cf.point_mass(0.0, 1.0) == 1.0
    assert cf.point_mass(1.0, 1.0) == pytest.approx(0.33620, abs=5e-6)
    assert cf.point_mass(1.0, 1e-6) <= 1e-5


def test_point_mass_large_argument_uses_scaled_form():
    # exp(2t/alpha^2) overflows here; the scaled form stays finite and matches
    # the asymptote sqrt(2/pi)/x with x = 2 sqrt(t)/alpha
    v = cf.point_mass(1.0, 1e-3)
    assert math.isfinite(v)
    assert v == pytest.approx(math.sqrt(2 / math.pi) / 2000.0, rel=1e-6)
    mp.mp.dps = 30
    for t, a in [(1.0, 0.3), (2.0, 0.1), (0.5, 2.0)]:
        assert cf.point_mass(t, a) == pytest.approx(float(_mp_pm(t, a)), rel=1e-13)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_occupation_integrates_point_mass(t, a):
    assert abs(cf.expected_occupation(t, a) - cf.occupation_from_point_mass(t, a)) <= 1e-6
    h = 1e-4
    fd = (cf.expected_occupation(t + h, a) - cf.expected_occupation(t - h, a)) / (2 * h)
    assert abs(fd - cf.point_mass(t, a)) <= 1e-4


# ---------------------------------------------------------------------------
# characteristic function


def test_char_fn_examples():
    assert cf.char_fn(0.0, 1.0, 1.0) == 1.0
    for lam in np.arange(-5, 6):
        assert abs(cf.char_fn(lam, 1.0, 1e-8) - math.exp(-lam * lam / 2)) <= 1e-5


def test_char_fn_two_resolution_crosscheck():
    coarse = cf.char_fn(1.0, 1.0, 1.0)
    # independent composite Simpson rule with halved step
    def simpson(n):
        s = np.linspace(0.0, 1.0, n + 1)
        f = np.exp(-(1 - s) / 2) * np.array([cf.point_mass(v, 1.0) for v in s])
        return (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum()) / (3 * n)
    fine = math.exp(-0.5) + 0.5 * simpson(4096)
    finer = math.exp(-0.5) + 0.5 * simpson(8192)
    assert abs(fine - finer) <= 1e-7
    assert abs(coarse - finer) <= 1e-7


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 5.0])
@pytest.mark.parametrize("t", [0.3, 1.0])
def test_char_fn_solves_its_ode(lam, t):
    assert cf.char_fn_ode_residual(lam, t, 1.0) <= 1e-5


def test_char_fn_even_real_bounded():
    for lam in np.linspace(-20, 20, 41):
        v = cf.char_fn(lam, 1.0, 1.0)
        assert abs(v) <= 1.0
        assert v == pytest.approx(cf.char_fn(-lam, 1.0, 1.0), abs=1e-15)


def test_closed_forms_reject_skew():
    for fn, args in [(cf.point_mass, (1.0, 1.0)), (cf.expected_occupation, (1.0, 1.0)),
                     (cf.char_fn, (1.0, 1.0, 1.0))]:
        with pytest.raises(DomainError):
            fn(*args, p_plus=0.25)


def test_occupation_cdf_vectorised_matches_scalar():
    ys = np.array([-0.1, 0.0, 0.2, 0.5, 0.99, 1.0, 2.0])
    vec = cf.sticky_occupation_cdf_vec(1.0, ys, 1.0)
    sca = [cf.sticky_occupation_cdf(1.0, y, 1.0) for y in ys]
    np.testing.assert_allclose(vec, sca, atol=1e-15)

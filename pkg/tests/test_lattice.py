from __future__ import annotations

import math

import numpy as np
import pytest

from stickysim.closed_form import sticky_occupation_cdf
from stickysim.engine import NoiseStream
from stickysim.errors import SpecificationError
from stickysim.lattice import (LatticeParams, lattice_delay_coefficient, lattice_exit_probability,
                               oracle_distribution, oracle_ensemble, oracle_simulate)
from stickysim.stats import ks_two_sample
from stickysim.transform import delayed_ensemble

from conftest import SEED, sticky_bm


def test_params_validation():
    p = LatticeParams(0.01, 0.3)
    assert p.p_minus == pytest.approx(0.7)
    with pytest.raises(SpecificationError, match="p_\\+\\+p_-≠1"):
        LatticeParams(0.01, 0.6, 0.6)
    for bad in (dict(delta=0.0), dict(delta=0.1, alpha=-1.0), dict(delta=0.1, T=0.0),
                dict(delta=0.1, p_plus=1.5)):
        with pytest.raises(SpecificationError):
            LatticeParams(**bad)


def test_holding_time_at_the_point():
    p = LatticeParams(0.01, alpha=1.0)
    assert p.hold0 == pytest.approx(0.0101, abs=1e-15)
    path = oracle_simulate(p, 3)
    dt = np.diff(path.times)
    at0 = path.positions[:-1] == 0.0
    np.testing.assert_allclose(dt[at0], 0.0101, rtol=0, atol=1e-12)
    np.testing.assert_allclose(dt[~at0], 1e-4, rtol=0, atol=1e-12)


def test_symmetric_walk_without_delay():
    p = LatticeParams(0.05)
    path = oracle_simulate(p, 1)
    steps = np.diff(path.positions)
    np.testing.assert_allclose(np.abs(steps), 0.05, atol=1e-12)
    np.testing.assert_allclose(np.diff(path.times), 0.0025, atol=1e-12)
    assert path.times[-1] <= p.T < path.times[-1] + 0.0025 + 1e-12
    # unit variance per unit time in the limit
    x = oracle_ensemble(p, 20_000, 5).x[:, -1]
    assert abs(x.var() - 1.0) <= 4 * math.sqrt(2.0 / x.size)


def test_total_reflection_never_negative():
    p = LatticeParams(0.02, 1.0, alpha=0.5)
    for i in range(50):
        assert oracle_simulate(p, 9, i).positions.min() >= 0.0
    assert oracle_ensemble(p, 500, 9).x.min() >= 0.0


def test_event_path_and_ensemble_agree():
    p = LatticeParams(0.02, 0.7, alpha=0.8)
    times = [0.1, 0.37, 0.5, 1.0]
    ens = oracle_ensemble(p, 25, 42, times)
    for i in range(25):
        x, L, occ = oracle_simulate(p, NoiseStream(42, i)).sample(times)
        np.testing.assert_array_equal(ens.x[i], x)
        np.testing.assert_allclose(ens.local_time[i], L, rtol=0, atol=1e-13)
        np.testing.assert_allclose(ens.occupation[i], occ, rtol=0, atol=1e-12)
    assert oracle_simulate(p, 42, 3).position(0.5) == ens.x[3, 2]


def test_rng_forms_are_equivalent():
    p = LatticeParams(0.05, alpha=1.0)
    a = oracle_simulate(p, 7, 2)
    b = oracle_simulate(p, NoiseStream(7, 2))
    c = oracle_simulate(p, NoiseStream(7, 2).generator())
    for other in (b, c):
        assert a.times.tobytes() == other.times.tobytes()
        assert a.positions.tobytes() == other.positions.tobytes()


def test_occupation_local_time_identity_is_exact():
    p = LatticeParams(0.01, alpha=1.0)
    ens = oracle_ensemble(p, 2000, 11, [0.3, 1.0])
    # completed holding time is (alpha + delta) times local time, path by path
    assert np.allclose(ens.holding, (p.alpha + p.delta) * ens.local_time, rtol=1e-12, atol=0)
    # off the point there is no partial holding, so the identity holds for the occupation itself
    off = ens.x != 0.0
    assert np.allclose(ens.occupation[off], (p.alpha + p.delta) * ens.local_time[off],
                       rtol=1e-12, atol=1e-15)
    on = ~off
    partial = ens.occupation[on] - ens.holding[on]
    assert np.all((partial >= -1e-12) & (partial <= p.hold0 + 1e-12))
    ratio = ens.holding[ens.departures > 0] / ens.local_time[ens.departures > 0]
    np.testing.assert_allclose(ratio, 1.01, rtol=1e-12)


def test_no_delay_occupation_is_negligible():
    p = LatticeParams(0.005)
    cdf = oracle_distribution(p, 2000, "occupation_at_0", 1.0, 4)
    assert cdf.quantiles([0.99])[0] <= 0.02
    with pytest.raises(SpecificationError):
        oracle_distribution(p, 10, "speed", 1.0)
    with pytest.raises(SpecificationError):
        oracle_ensemble(p, 0, 1)


def test_exit_statistics_by_construction():
    p = LatticeParams(0.01, 0.75, alpha=1.0)
    est = lattice_exit_probability(p, 0.01, 4000, 1)
    assert est.covers(0.75)
    d = lattice_delay_coefficient(LatticeParams(0.01, alpha=1.0), 0.01, 100, 1)
    assert d.estimate == pytest.approx(1.01, abs=1e-12)
    with pytest.raises(SpecificationError):
        lattice_exit_probability(p, 0.015, 10)


def test_occupation_tail_matches_closed_form(lattice_alpha1):
    occ = lattice_alpha1.quantity("occupation_at_0", 1.0)
    expect = 1.0 - sticky_occupation_cdf(1.0, 0.3, 1.0)
    assert abs(np.mean(occ > 0.3) - expect) <= 0.02


@pytest.mark.slow
def test_position_law_converges_as_spacing_halves():
    sim = delayed_ensemble(sticky_bm(1.0), 1.0, 1e-4, 40_000, SEED + 10, times=[1.0]).x[:, -1]
    ks = []
    for delta in (0.02, 0.01, 0.005):
        lat = oracle_ensemble(LatticeParams(delta, alpha=1.0), 40_000, SEED + 11)
        ks.append(ks_two_sample(lat.quantity("position"), sim).ks)
    assert all(b <= a + 0.005 for a, b in zip(ks, ks[1:])), ks
    assert ks[-1] <= 0.02

"""Shared large ensembles, simulated once per session."""

from __future__ import annotations

import time

import pytest

from stickysim.lattice import LatticeParams, oracle_ensemble
from stickysim.model import ProcessSpec, validate_process_spec
from stickysim.transform import delayed_ensemble

BIG = 100_000
DT = 1e-4
SEED = 20240601


def sticky_bm(alpha: float):
    return validate_process_spec(ProcessSpec.sticky_bm(alpha, 0.5))


@pytest.fixture(scope="session")
def ens_alpha1():
    """Sticky BM, alpha = 1, 1e5 paths, dt = 1e-4, recorded at t = 0.25 and 1."""
    start = time.perf_counter()
    ens = delayed_ensemble(sticky_bm(1.0), 1.0, DT, BIG, SEED, times=[0.25, 1.0])
    return ens, time.perf_counter() - start


@pytest.fixture(scope="session")
def ens_alpha_half():
    """Sticky BM, alpha = 1/2, 1e5 paths, dt = 1e-4, recorded at t = 0.25 and 1."""
    return delayed_ensemble(sticky_bm(0.5), 1.0, DT, BIG, SEED + 1, times=[0.25, 1.0])


@pytest.fixture(scope="session")
def lattice_alpha1():
    """Lattice walk, delta = 0.005, alpha = 1, 1e5 paths, recorded at t = 1."""
    return oracle_ensemble(LatticeParams(0.005, 0.5, None, 1.0, 1.0), BIG, SEED + 2)

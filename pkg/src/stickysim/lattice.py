"""Sticky skew random walk on a lattice, used as an independent reference.

Off the sticky site 0 the walk moves ``+-delta`` with probability 1/2 and each
move takes ``delta**2``.  A visit to 0 lasts ``alpha*delta + delta**2`` and
ends with a move up with probability ``p_plus``.  Local time at 0 is
``delta`` times the number of completed departures from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .engine import NoiseStream, map_paths
from .errors import SpecificationError
from .stats import EmpiricalCDF, ExitSample, delay_coefficient_from, exit_probability_from

LATTICE_QUANTITIES = ("position", "occupation_at_0", "local_time_at_0")


@dataclass(frozen=True)
class LatticeParams:
    """Spacing, exit probabilities, delay and horizon of the walk."""

    delta: float
    p_plus: float = 0.5
    p_minus: float | None = None
    alpha: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if self.p_minus is None:
            object.__setattr__(self, "p_minus", 1.0 - self.p_plus)
        bad = []
        if not (self.delta > 0 and math.isfinite(self.delta)):
            bad.append(f"delta must be positive, got {self.delta}")
        if not (0 <= self.p_plus <= 1 and 0 <= self.p_minus <= 1):
            bad.append("p_+ and p_- must lie in [0, 1]")
        if abs(self.p_plus + self.p_minus - 1.0) > 1e-12:
            bad.append(f"p_++p_-≠1 ({self.p_plus} + {self.p_minus})")
        if not (self.alpha >= 0 and math.isfinite(self.alpha)):
            bad.append(f"alpha must be >= 0, got {self.alpha}")
        if not (self.T > 0 and math.isfinite(self.T)):
            bad.append(f"T must be positive, got {self.T}")
        if bad:
            raise SpecificationError(bad)

    @property
    def hold0(self) -> float:
        """Holding time at the sticky site."""
        return self.alpha * self.delta + self.delta * self.delta

    @property
    def max_events(self) -> int:
        # every event lasts at least delta^2
        return int(math.floor(self.T / self.delta ** 2)) + 2


def _generator(rng, path_index: int = 0) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, NoiseStream):
        return rng.generator()
    return NoiseStream(int(rng), path_index).generator()


@dataclass(frozen=True)
class LatticePath:
    """Event path: ``positions[e]`` is held on ``[times[e], times[e+1])``."""

    times: np.ndarray
    positions: np.ndarray
    params: LatticeParams

    def sample(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position, local time and occupation at the times ``t`` (vectorised).

        Occupation is the Lebesgue time at 0 on ``[0, t]``, the current
        holding included; local time counts completed departures only.
        """
        t = np.atleast_1d(np.asarray(t, float))
        if np.any(t < 0) or np.any(t > self.params.T):
            raise SpecificationError(f"times must lie in [0, {self.params.T:g}]")
        e = np.searchsorted(self.times, t, side="right") - 1
        zero = self.positions == 0.0
        before = np.concatenate(([0], np.cumsum(zero[:-1])))
        dep = before[e]
        occ = dep * self.params.hold0 + np.where(zero[e], t - self.times[e], 0.0)
        return self.positions[e], self.params.delta * dep, occ

    def position(self, t: float) -> float:
        return float(self.sample(t)[0][0])

    def local_time(self, t: float) -> float:
        return float(self.sample(t)[1][0])

    def occupation(self, t: float) -> float:
        return float(self.sample(t)[2][0])


def oracle_simulate(params: LatticeParams, rng=0, path_index: int = 0) -> LatticePath:
    """Simulate one walk from 0 until the clock reaches ``T``.

    ``rng`` is a numpy Generator, a :class:`NoiseStream` or a master seed
    (combined with ``path_index``).
    """
    gen = _generator(rng, path_index)
    n = params.max_events
    times = np.empty(n)
    sites = np.empty(n, np.int64)
    e = K.lattice_events(params.delta, params.p_plus, params.alpha, params.T, gen, times, sites)
    return LatticePath(times[:e].copy(), sites[:e] * params.delta, params)


@dataclass(frozen=True)
class LatticeEnsemble:
    """Walk states at ``times``; arrays are indexed ``[path, time]``."""

    times: np.ndarray
    x: np.ndarray
    departures: np.ndarray
    occupation: np.ndarray
    params: LatticeParams
    master_seed: int

    @property
    def local_time(self) -> np.ndarray:
        return self.params.delta * self.departures

    @property
    def holding(self) -> np.ndarray:
        """Completed holding time at 0: ``departures * (alpha delta + delta^2)``."""
        return self.params.hold0 * self.departures

    def column(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise SpecificationError(f"time {t:g} not recorded")
        return int(hits[0])

    def quantity(self, name: str, t: float | None = None) -> np.ndarray:
        col = self.column(self.times[-1] if t is None else t)
        if name == "position":
            return self.x[:, col]
        if name == "occupation_at_0":
            return self.occupation[:, col]
        if name == "local_time_at_0":
            return self.local_time[:, col]
        raise SpecificationError(f"unknown quantity {name!r}; choose from {LATTICE_QUANTITIES}")


def oracle_ensemble(params: LatticeParams, n_paths: int, master_seed: int,
                    times=None, threads: int | None = None) -> LatticeEnsemble:
    """Walk ``n_paths`` paths (path ``i`` seeded by ``(master_seed, i)``) and record ``times``."""
    if n_paths < 1:
        raise SpecificationError("n_paths must be >= 1")
    times = np.asarray([params.T] if times is None else sorted(times), float)
    if times[0] < 0 or times[-1] > params.T:
        raise SpecificationError("recorded times must lie in [0, T]")
    r = times.size
    x = np.empty((n_paths, r))
    dep = np.empty((n_paths, r), np.int64)
    occ = np.empty((n_paths, r))

    def one(i: int) -> None:
        gen = NoiseStream(master_seed, i).generator()
        K.lattice_walk(params.delta, params.p_plus, params.alpha, gen, times, x[i], dep[i], occ[i])

    map_paths(one, n_paths, threads)
    return LatticeEnsemble(times, x, dep, occ, params, int(master_seed))


def oracle_distribution(params: LatticeParams, n_paths: int, quantity: str, t: float,
                        master_seed: int = 0, threads: int | None = None) -> EmpiricalCDF:
    """Empirical CDF of ``quantity`` at time ``t`` over ``n_paths`` walks."""
    if quantity not in LATTICE_QUANTITIES:
        raise SpecificationError(f"unknown quantity {quantity!r}; choose from {LATTICE_QUANTITIES}")
    ens = oracle_ensemble(params, n_paths, master_seed, [t], threads)
    return EmpiricalCDF.from_samples(ens.quantity(quantity, t))


def lattice_exit_sample(params: LatticeParams, radius: float, n_paths: int, master_seed: int = 0,
                        max_moves: int | None = None, threads: int | None = None) -> ExitSample:
    """Exit sides and times of the walk from ``(-radius, radius)``.

    ``radius`` must be a whole number of lattice spacings.
    """
    k = radius / params.delta
    k_exit = int(round(k))
    if k_exit < 1 or abs(k - k_exit) > 1e-9 * k:
        raise SpecificationError("exit radius must be a positive multiple of the spacing")
    if max_moves is None:
        max_moves = 1000 * k_exit * k_exit
    side = np.zeros(n_paths, np.int64)
    time = np.zeros(n_paths)

    def one(i: int) -> None:
        gen = NoiseStream(master_seed, i).generator()
        side[i], time[i], _ = K.lattice_exit(params.delta, params.p_plus, params.alpha, k_exit,
                                             max_moves, gen)

    map_paths(one, n_paths, threads)
    return ExitSample(side, time, params.delta ** 2, float(radius))


def lattice_exit_probability(params: LatticeParams, radius: float, n_paths: int,
                             master_seed: int = 0, **kw):
    return exit_probability_from(lattice_exit_sample(params, radius, n_paths, master_seed, **kw))


def lattice_delay_coefficient(params: LatticeParams, radius: float, n_paths: int,
                              master_seed: int = 0, **kw):
    return delay_coefficient_from(lattice_exit_sample(params, radius, n_paths, master_seed, **kw))

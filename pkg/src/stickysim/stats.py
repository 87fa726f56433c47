"""Monte Carlo summaries, exit-based estimators and distribution distances."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .engine import NoiseStream, compiled, map_paths
from .errors import NumericalFailure, SpecificationError
from .model import ValidatedSpec
from .transform import DelayedEnsemble, delayed_ensemble

QUANTILE_GRID = np.linspace(0.0, 1.0, 101)
MAX_CENSORED_FRACTION = 1e-3
EXIT_RESOLUTION = 10.0  # delta >= EXIT_RESOLUTION * sigma_max * sqrt(dt)
DEFAULT_EXIT_STEPS = 30.0  # default dt = (delta / (30 sigma_max))^2
DEFAULT_EXIT_HORIZON = 200.0  # in units of delta^2 / c

QUANTITIES = ("position", "local_time", "occupation", "alpha_local_time", "at_point")


@dataclass(frozen=True)
class EmpiricalCDF:
    """Right-continuous step CDF of a sample."""

    values: np.ndarray  # sorted

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalCDF":
        v = np.sort(np.asarray(samples, float).ravel())
        if v.size == 0:
            raise SpecificationError("empirical CDF needs a nonempty sample")
        return cls(v)

    @property
    def n(self) -> int:
        return self.values.size

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.n

    def left(self, x):
        """Left limit ``F(x-)``."""
        return np.searchsorted(self.values, x, side="left") / self.n

    def quantiles(self, grid: Sequence[float] = QUANTILE_GRID) -> np.ndarray:
        return np.quantile(self.values, np.asarray(grid, float))


def mean_ci_radius(values: np.ndarray) -> float:
    """95% confidence radius ``1.96 sd / sqrt(n)`` of a sample mean."""
    return 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size) if values.size > 1 else 0.0


@dataclass(frozen=True)
class EnsembleSummary:
    """Per-quantity empirical CDFs, means and 95% confidence radii."""

    n_paths: int
    master_seed: int
    t: float
    cdfs: Mapping[str, EmpiricalCDF]
    means: Mapping[str, float]
    ci95: Mapping[str, float]
    samples: Mapping[str, np.ndarray] = field(repr=False)

    def fingerprint(self) -> str:
        """SHA-256 over every sample array, for bitwise comparisons."""
        h = hashlib.sha256()
        for name in sorted(self.samples):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.samples[name]).tobytes())
        return h.hexdigest()


def ensemble_quantities(ens: DelayedEnsemble, t: float | None = None, point: int = 0,
                        quantities: Sequence[str] = QUANTITIES) -> dict[str, np.ndarray]:
    """Per-path arrays of the named quantities at time ``t`` (default: last recorded)."""
    col = ens.column(ens.times[-1] if t is None else t)
    m = ens.locations.size
    out = {}
    for q in quantities:
        if q not in QUANTITIES:
            raise SpecificationError(f"unknown quantity {q!r}; choose from {QUANTITIES}")
        if q == "position":
            out[q] = ens.x[:, col].copy()
            continue
        if m == 0:
            continue
        if q == "local_time":
            out[q] = ens.local_time[:, col, point].copy()
        elif q == "occupation":
            out[q] = ens.occupation[:, col, point].copy()
        elif q == "alpha_local_time":
            out[q] = ens.alphas[point] * ens.local_time[:, col, point]
        else:
            out[q] = (ens.at_point[:, col] == point).astype(float)
    return out


def summarize(samples: Mapping[str, np.ndarray], master_seed: int, t: float) -> EnsembleSummary:
    """Build an :class:`EnsembleSummary`; reductions follow path-index order."""
    cdfs, means, radii = {}, {}, {}
    n = 0
    for name, v in samples.items():
        v = np.asarray(v, float)
        n = v.size
        cdfs[name] = EmpiricalCDF.from_samples(v)
        means[name] = float(v.mean())
        radii[name] = mean_ci_radius(v)
    return EnsembleSummary(n, int(master_seed), float(t), cdfs, means, radii, dict(samples))


def mc_ensemble(spec: ValidatedSpec, T: float, dt: float, n_paths: int, master_seed: int,
                quantities: Sequence[str] = QUANTITIES, point: int = 0, x0: float = 0.0,
                threads: int | None = None) -> EnsembleSummary:
    """Simulate ``n_paths`` delayed paths to ``T`` and summarize quantities at ``T``.

    Per-path noise comes from ``(master_seed, path_index)`` only, so the
    summary is bitwise independent of ``threads``.  A failing path raises
    :class:`~stickysim.errors.EnsembleError` listing every failed index.
    """
    ens = delayed_ensemble(spec, T, dt, n_paths, master_seed, x0=x0, threads=threads)
    return summarize(ensemble_quantities(ens, T, point, quantities), master_seed, T)


# ---------------------------------------------------------------------------
# exit estimators


@dataclass(frozen=True)
class ExitEstimate:
    """Exit-based estimate with its 95% radius and censoring report."""

    estimate: float
    ci95: float
    n: int
    censored: int
    dt: float
    delta: float
    note: str = ""

    @property
    def censored_fraction(self) -> float:
        return self.censored / self.n

    @property
    def valid(self) -> bool:
        return self.censored_fraction <= MAX_CENSORED_FRACTION

    def covers(self, value: float) -> bool:
        return abs(self.estimate - value) <= self.ci95


@dataclass(frozen=True)
class ExitSample:
    side: np.ndarray  # +1, -1, or 0 when censored
    time: np.ndarray  # exit time of X
    dt: float
    delta: float


def exit_sample(spec: ValidatedSpec, x_i: float, delta: float, n: int, master_seed: int,
                dt: float | None = None, horizon: float | None = None,
                threads: int | None = None, counter: int = 1) -> ExitSample:
    """Exit sides and exit times of X from ``(x_i - delta, x_i + delta)``, started at ``x_i``.

    The exit time of X is that of Y plus the accumulated delay
    ``sum alpha_i ell_i``.  ``dt`` defaults to ``(delta / (30 sigma_max))^2``
    and must satisfy ``delta >= 10 sigma_max sqrt(dt)``.
    """
    if n < 1:
        raise SpecificationError("n must be >= 1")
    if not delta > 0:
        raise SpecificationError(f"delta must be positive, got {delta:g}")
    smax = spec.sigma_max
    if dt is None:
        dt = (delta / (DEFAULT_EXIT_STEPS * smax)) ** 2
    if delta < EXIT_RESOLUTION * smax * math.sqrt(dt) * (1 - 1e-12):
        raise SpecificationError(
            f"exit radius {delta:g} not resolvable: need delta >= 10 sigma_max sqrt(dt) "
            f"= {EXIT_RESOLUTION * smax * math.sqrt(dt):g}")
    if horizon is None:
        horizon = DEFAULT_EXIT_HORIZON * delta * delta / spec.spec.c
    n_max = int(math.ceil(horizon / dt))
    c = compiled(spec)
    bps, meta, vals, bounds = c.tab
    alphas = spec.alphas
    side = np.zeros(n, np.int64)
    time = np.zeros(n)

    def one(i: int) -> None:
        gen = NoiseStream(master_seed, i, counter).generator()
        sd, s_exit, delay, status = K.exit_run(float(x_i), float(x_i), float(delta), n_max, dt,
                                               bps, meta, vals, bounds, c.pts, alphas, gen)
        if status != K.OK:
            raise NumericalFailure("exit run failed", int(s_exit / dt))
        side[i] = sd
        time[i] = s_exit + delay

    map_paths(one, n, threads)
    return ExitSample(side, time, dt, float(delta))


def exit_probability_from(sample: ExitSample) -> ExitEstimate:
    done = sample.side != 0
    m = int(done.sum())
    n = sample.side.size
    p = float(np.mean(sample.side[done] == 1)) if m else float("nan")
    ci = 1.96 * math.sqrt(p * (1 - p) / m) if m else float("nan")
    return ExitEstimate(p, ci, n, n - m, sample.dt, sample.delta)


def delay_coefficient_from(sample: ExitSample) -> ExitEstimate:
    done = sample.side != 0
    tau = sample.time[done] / sample.delta
    n = sample.side.size
    est = float(tau.mean()) if tau.size else float("nan")
    note = ("alpha_hat = E[tau]/delta carries an O(delta) bias "
            "(E tau = alpha delta + delta^2 for sticky Brownian motion)")
    return ExitEstimate(est, mean_ci_radius(tau), n, n - tau.size, sample.dt, sample.delta, note)


def exit_probability_estimate(spec: ValidatedSpec, x_i: float, delta: float, n: int,
                              master_seed: int = 0, **kw) -> ExitEstimate:
    """Fraction of paths from ``x_i`` leaving at ``x_i + delta`` first; targets ``p_+``."""
    return exit_probability_from(exit_sample(spec, x_i, delta, n, master_seed, **kw))


def delay_coefficient_estimate(spec: ValidatedSpec, x_i: float, delta: float, n: int,
                               master_seed: int = 0, **kw) -> ExitEstimate:
    """``mean(tau_delta) / delta`` for paths from ``x_i``; targets ``alpha``."""
    return delay_coefficient_from(exit_sample(spec, x_i, delta, n, master_seed, **kw))


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class DistanceReport:
    """Kolmogorov-Smirnov sup distance to a named reference."""

    ks: float
    n: int
    reference: str

    def as_dict(self) -> dict:
        return {"reference": self.reference, "ks": self.ks, "n": self.n}


def ks_distance(sample, reference: Callable, reference_name: str = "reference",
                reference_left: Callable | None = None) -> DistanceReport:
    """Exact ``sup |F_n - F|`` for an empirical CDF against a reference CDF.

    The sup of ``|F_n - F|`` is attained at a sample point, from the right or
    from the left, when ``F`` is continuous or jumps only at sample points.
    ``reference_left`` gives ``F(x-)``; it defaults to ``reference.left`` when
    available and to ``reference`` otherwise.
    """
    ecdf = sample if isinstance(sample, EmpiricalCDF) else EmpiricalCDF.from_samples(sample)
    if reference_left is None:
        reference_left = getattr(reference, "left", reference)
    x = np.unique(ecdf.values)
    right = ecdf(x)
    left = ecdf.left(x)
    f_right = np.asarray(reference(x), float)
    f_left = np.asarray(reference_left(x), float)
    ks = float(max(np.max(np.abs(right - f_right)), np.max(np.abs(left - f_left))))
    return DistanceReport(min(ks, 1.0), ecdf.n, reference_name)


def ks_two_sample(a, b, reference_name: str = "two-sample") -> DistanceReport:
    """Exact sup distance between two empirical CDFs (``n`` is that of ``a``)."""
    fa = a if isinstance(a, EmpiricalCDF) else EmpiricalCDF.from_samples(a)
    fb = b if isinstance(b, EmpiricalCDF) else EmpiricalCDF.from_samples(b)
    x = np.union1d(fa.values, fb.values)
    ks = float(np.max(np.abs(fa(x) - fb(x))))
    return DistanceReport(ks, fa.n, reference_name)


@dataclass(frozen=True)
class CharFnEstimate:
    lambdas: np.ndarray
    values: np.ndarray  # complex
    se: np.ndarray


def empirical_char_fn(samples, lambdas) -> CharFnEstimate:
    """``(1/n) sum exp(i lam x_k)`` per ``lam`` with standard error ``sqrt((1-|phi|^2)/n)``."""
    x = np.asarray(samples, float).ravel()
    if x.size == 0:
        raise SpecificationError("empirical characteristic function needs a nonempty sample")
    lam = np.atleast_1d(np.asarray(lambdas, float))
    vals = np.empty(lam.size, complex)
    for j, l in enumerate(lam):
        if l == 0.0:
            vals[j] = 1.0
            continue
        ang = l * x
        vals[j] = complex(np.cos(ang).mean(), np.sin(ang).mean())
    se = np.sqrt(np.clip(1.0 - np.abs(vals) ** 2, 0.0, None) / x.size)
    return CharFnEstimate(lam, vals, se)

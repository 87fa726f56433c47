"""Simulation of the undelayed skew diffusion and its local times.

Between visits to a sticky point the scheme is plain Euler-Maruyama.  Whether
the continuous path touches the point during a step is decided with the
Brownian-bridge crossing probability, and on a touch the exit side and the
local time increment are sampled from their exact joint law for constant
coefficients, so local time is produced without a spatial band.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .errors import EnsembleError, NumericalFailure, SpecificationError
from .model import PiecewiseFn, ValidatedSpec

TABLE_NODES = 65537


@dataclass(frozen=True)
class SimGrid:
    """Uniform time grid on ``[0, T]`` with ``n_steps = ceil(T/dt)``."""

    T: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise SpecificationError(f"dt must be positive, got {self.dt}")
        if not (self.T >= self.dt and math.isfinite(self.T)):
            raise SpecificationError(f"need dt <= T, got T={self.T}, dt={self.dt}")

    @property
    def n_steps(self) -> int:
        # guard against ceil(1/1e-4) = 10001 from representation error
        return int(math.ceil(self.T / self.dt - 1e-9))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class NoiseStream:
    """Counter-based random stream for one path.

    The stream depends only on ``(master_seed, path_index, counter)``, so
    paths can be generated in any order or in parallel.
    """

    master_seed: int
    path_index: int
    counter: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed) & (2**64 - 1),
                                    spawn_key=(int(self.path_index), int(self.counter)))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class CoefTable:
    """Piecewise-linear tabulation of one or more functions on a window.

    Segments on which every function is constant get two nodes; others get
    ``TABLE_NODES``.  Nodes at breakpoints hold the one-sided limits, and a
    query at a breakpoint uses the right segment.  Queries outside the window
    clamp to the end nodes and are flagged unless the outer segment is
    constant.
    """

    breakpoints: np.ndarray
    lo: np.ndarray
    inv_h: np.ndarray
    offset: np.ndarray
    n_nodes: np.ndarray
    constant: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, fns: Sequence[PiecewiseFn], window: tuple[float, float],
              nodes: int = TABLE_NODES) -> "CoefTable":
        bps = sorted(set().union(*(f.breakpoints for f in fns)))
        fns = [f.with_breakpoints(bps) for f in fns]
        lo_w, hi_w = window
        if bps:
            lo_w = min(lo_w, bps[0] - 1.0)
            hi_w = max(hi_w, bps[-1] + 1.0)
        edges = [lo_w] + bps + [hi_w]
        los, inv, offs, ns, consts, cols = [], [], [], [], [], []
        total = 0
        for j in range(len(edges) - 1):
            a, b = edges[j], edges[j + 1]
            const = all(f.constants[j] is not None for f in fns)
            n = 2 if const else nodes
            grid = np.linspace(a, b, n)
            block = np.empty((len(fns), n))
            for r, f in enumerate(fns):
                if const:
                    block[r] = f.constants[j]
                    continue
                block[r, 1:-1] = f.segments[j](grid[1:-1])
                block[r, 0] = f.right(j - 1) if j > 0 else f.segments[j](np.asarray(a))
                block[r, -1] = f.left(j) if j < len(bps) else f.segments[j](np.asarray(b))
            if not np.all(np.isfinite(block)):
                bad = grid[np.flatnonzero(~np.all(np.isfinite(block), axis=0))[0]]
                raise NumericalFailure(f"coefficient not finite at x={bad:g}", None)
            los.append(a)
            inv.append((n - 1) / (b - a))
            offs.append(total)
            ns.append(n)
            consts.append(const)
            cols.append(block)
            total += n
        return cls(np.asarray(bps, float), np.asarray(los), np.asarray(inv),
                   np.asarray(offs, np.int64), np.asarray(ns, np.int64),
                   np.asarray(consts, np.bool_), np.ascontiguousarray(np.hstack(cols)))

    def as_tuple(self):
        meta = np.column_stack([self.lo, self.inv_h, self.offset.astype(float),
                                self.n_nodes.astype(float)])
        lo = -np.inf if self.constant[0] else self.lo[0]
        last = len(self.lo) - 1
        hi = np.inf if self.constant[last] else \
            self.lo[last] + (self.n_nodes[last] - 1) / self.inv_h[last]
        return (self.breakpoints, np.ascontiguousarray(meta), self.values, np.array([lo, hi]))

    def __call__(self, f: int, x: float) -> float:
        bps, meta, vals, _ = self.as_tuple()
        return float(K.coef(bps, meta, vals, f, float(x)))


@dataclass(frozen=True)
class PointArrays:
    """Flat per-point parameters consumed by the kernels."""

    locations: np.ndarray
    skew: np.ndarray
    p_tilde: np.ndarray
    sigma_left: np.ndarray
    sigma_right: np.ndarray
    lt_scale: np.ndarray
    alphas: np.ndarray

    @classmethod
    def build(cls, spec: ValidatedSpec) -> "PointArrays":
        pts = spec.sticky_points
        sig = spec.sigma
        sl, sr = [], []
        for p in pts:
            left, right = sig.limits_at(p.location)
            sl.append(abs(left))
            sr.append(abs(right))
        sl, sr = np.asarray(sl, float), np.asarray(sr, float)
        pp = np.array([p.p_plus for p in pts], float)
        pm = np.array([p.p_minus for p in pts], float)
        denom = sl * pp + sr * pm
        # side probabilities for the normalized path chosen so that exits
        # from a small interval still happen with probabilities p_+/p_-
        with np.errstate(invalid="ignore", divide="ignore"):
            ptil = np.where(denom > 0, sl * pp / denom, pp)
            scale = np.where(denom > 0, sl * sr / denom, 0.0)
        return cls(np.array([p.location for p in pts], float), pp - pm, ptil, sl, sr,
                   scale, np.array([p.alpha for p in pts], float))

    def as_array(self) -> np.ndarray:
        return np.ascontiguousarray(np.vstack([self.locations, self.skew, self.p_tilde,
                                               self.sigma_left, self.sigma_right,
                                               self.lt_scale]).reshape(6, -1))


@dataclass(frozen=True)
class Compiled:
    """Kernel-ready form of a validated spec.

    Table columns are ``b``, ``sigma`` and then ``extras`` in order (a
    Girsanov tilt or a generator image, for instance).
    """

    spec: ValidatedSpec
    table: CoefTable
    points: PointArrays
    extras: tuple[PiecewiseFn, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tab", self.table.as_tuple())
        object.__setattr__(self, "pts", self.points.as_array())

    @classmethod
    def build(cls, spec: ValidatedSpec, *extras: PiecewiseFn) -> "Compiled":
        fns = [spec.b, spec.sigma, *extras]
        return cls(spec, CoefTable.build(fns, spec.window), PointArrays.build(spec), extras)


_COMPILED: dict[tuple[int, ...], Compiled] = {}


def compiled(spec: ValidatedSpec, *extras: PiecewiseFn) -> Compiled:
    """Cached :meth:`Compiled.build` keyed on object identity."""
    key = (id(spec),) + tuple(id(e) for e in extras)
    hit = _COMPILED.get(key)
    if hit is None or hit.spec is not spec or any(a is not b for a, b in zip(hit.extras, extras)):
        hit = Compiled.build(spec, *extras)
        _COMPILED[key] = hit
    return hit


@dataclass(frozen=True)
class UndelayedPath:
    """Discrete trajectory of Y with cumulative local time per sticky point.

    ``local_time[k, i]`` is the symmetric local time at point ``i`` on
    ``[0, s_k]``; ``dW[k]`` the Brownian increment of step ``k``.
    """

    times: np.ndarray
    values: np.ndarray
    local_time: np.ndarray
    dW: np.ndarray
    locations: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])


def _failure(status: int, step: int) -> NumericalFailure:
    what = "non-finite state" if status == K.NONFINITE else "path left the tabulated window"
    return NumericalFailure(f"{what} at step {step}", step)


def simulate_undelayed(spec: ValidatedSpec, grid: SimGrid, noise: NoiseStream,
                       x0: float = 0.0) -> UndelayedPath:
    """Simulate Y on ``grid`` from ``x0``.

    Raises :class:`NumericalFailure` with the step index on NaN/overflow or
    when the path leaves the window on which non-constant coefficients are
    tabulated.
    """
    if not math.isfinite(x0):
        raise SpecificationError(f"x0 must be finite, got {x0}")
    c = compiled(spec)
    n = grid.n_steps
    m = len(spec.sticky_points)
    ys = np.empty(n + 1)
    ells = np.empty((n + 1, m))
    dws = np.empty(n)
    status, k = K.undelayed(float(x0), n, grid.dt, *c.tab, c.pts,
                            noise.generator(), ys, ells, dws)
    if status != K.OK:
        raise _failure(status, k)
    return UndelayedPath(grid.times, ys, ells, dws, spec.locations)


@dataclass(frozen=True)
class LocalTimeSeries:
    """Cumulative local time estimate; ``raw`` kept for diagnostics."""

    raw: np.ndarray
    clamped: np.ndarray
    warning: str | None = None

    @property
    def final(self) -> float:
        return float(self.clamped[-1])


def _values(path) -> np.ndarray:
    return np.asarray(getattr(path, "values", path), dtype=float)


def local_time_tanaka(path, x: float) -> LocalTimeSeries:
    """Discrete Tanaka sum ``|y_k-x| - |y_0-x| - sum_j sign(y_j-x)(y_{j+1}-y_j)``.

    Uses ``sign(0) = 0``.  ``clamped`` is the running maximum of ``raw``.
    """
    y = _values(path) - x
    raw = np.empty_like(y)
    raw[0] = 0.0
    raw[1:] = np.abs(y[1:]) - abs(y[0]) - np.cumsum(np.sign(y[:-1]) * np.diff(y))
    return LocalTimeSeries(raw, np.maximum.accumulate(raw))


def local_time_band(path, x: float, bandwidth: float, sigma: PiecewiseFn | float = 1.0,
                    dt: float | None = None) -> LocalTimeSeries:
    """Scaled occupation estimate ``sum sigma(y_k)^2 dt / (2 delta)`` over in-band steps."""
    if not bandwidth > 0:
        raise SpecificationError(f"bandwidth must be positive, got {bandwidth}")
    y = _values(path)
    if dt is None:
        times = np.asarray(getattr(path, "times"))
        dt = float(times[1] - times[0])
    s2 = (np.asarray(sigma(y[:-1])) if callable(sigma) else np.full(y.size - 1, float(sigma))) ** 2
    inc = np.where(np.abs(y[:-1] - x) <= bandwidth, s2 * dt / (2.0 * bandwidth), 0.0)
    out = np.concatenate(([0.0], np.cumsum(inc)))
    warning = None
    smax = math.sqrt(float(s2.max())) if s2.size else 0.0
    if bandwidth < smax * math.sqrt(dt):
        warning = f"bandwidth {bandwidth:g} below one-step scale {smax * math.sqrt(dt):g}"
    return LocalTimeSeries(out, out, warning)


# ---------------------------------------------------------------------------
# ensemble plumbing


def worker_count() -> int:
    """Threads to use: ``STICKY_SIM_THREADS`` if set and positive, else the CPU count."""
    raw = os.environ.get("STICKY_SIM_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise SpecificationError(f"STICKY_SIM_THREADS must be an integer, got {raw!r}")
    return n if n > 0 else (os.cpu_count() or 1)


def map_paths(fn: Callable[[int], None], n_paths: int, threads: int | None = None) -> None:
    """Call ``fn(i)`` for every path index, in contiguous chunks per worker.

    ``fn`` writes its results into preallocated arrays by index, so the
    outcome does not depend on scheduling.  Failures are collected and raised
    together as :class:`EnsembleError`.
    """
    threads = min(worker_count() if threads is None else threads, max(n_paths, 1))
    failures: dict[int, str] = {}

    def chunk(lo: int, hi: int) -> dict[int, str]:
        bad = {}
        for i in range(lo, hi):
            try:
                fn(i)
            except (NumericalFailure, FloatingPointError) as err:
                bad[i] = str(err)
        return bad

    if threads <= 1:
        failures = chunk(0, n_paths)
    else:
        cuts = np.linspace(0, n_paths, threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            for bad in pool.map(lambda ab: chunk(*ab), zip(cuts[:-1], cuts[1:])):
                failures.update(bad)
    if failures:
        raise EnsembleError(dict(sorted(failures.items())))

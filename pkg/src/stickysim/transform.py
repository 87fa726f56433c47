"""Delayed process X = Y(r^-1(t)) built from the undelayed path by the clock
r(s) = s + sum_i alpha_i * l_i(s), plus the checks that tie X to its local
time: occupation identity, SDE-pair residuals, Dynkin formula and Girsanov
reweighting.

Inside a step of Y that touches point i the extra clock time alpha_i * dl is
spent at x_i before the step moves on; samples falling in that dwell are
flagged and snapped to x_i.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .engine import (NoiseStream, SimGrid, UndelayedPath, _failure, compiled, map_paths,
                     simulate_undelayed)
from .errors import DomainError, SpecificationError
from .model import PiecewiseFn, ValidatedSpec

CONTINUITY_TOL = 1e-12
GENERATOR_TOL = 1e-6
ESS_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class TimeChangeTable:
    """Nodes ``(s_k, r_k)`` of the clock ``r = s + sum_i alpha_i l_i(s)``."""

    s: np.ndarray
    r: np.ndarray
    alphas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.s.shape != self.r.shape or self.s.size == 0:
            raise SpecificationError("time change table needs matching nonempty s and r")


def build_time_change(up: UndelayedPath | tuple[np.ndarray, np.ndarray],
                      alphas: Sequence[float] | float) -> TimeChangeTable:
    """Clock nodes from an undelayed path (or a ``(times, local_time)`` pair)."""
    if isinstance(up, UndelayedPath):
        times, ell = up.times, up.local_time
    else:
        times, ell = up
    times = np.asarray(times, float)
    ell = np.asarray(ell, float).reshape(times.size, -1)
    a = np.broadcast_to(np.asarray(alphas, float), (ell.shape[1],))
    if np.any(a < 0):
        raise SpecificationError("alpha must be >= 0")
    r = times + ell @ a if ell.shape[1] else times.copy()
    return TimeChangeTable(times, r, np.array(a, float))


def invert_time_change(table: TimeChangeTable, t):
    """``s`` with ``r(s) = t`` under linear interpolation between nodes."""
    t_arr = np.asarray(t, float)
    if np.any(t_arr < table.r[0]) or np.any(t_arr > table.r[-1]) or np.any(np.isnan(t_arr)):
        raise DomainError(f"time outside the clock range [{table.r[0]:g}, {table.r[-1]:g}]")
    k = np.clip(np.searchsorted(table.r, t_arr, side="right") - 1, 0, table.r.size - 2)
    r0, r1 = table.r[k], table.r[k + 1]
    s0, s1 = table.s[k], table.s[k + 1]
    out = s0 + (s1 - s0) * (t_arr - r0) / (r1 - r0)
    out = np.where(t_arr == r0, s0, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DelayedPath:
    """X on a uniform grid with local time, occupation and at-point flags.

    ``at_point[j]`` is the index of the sticky point X sits at, or -1.
    ``source_index[j]`` is the undelayed step ``k(j)`` the sample comes from.
    """

    times: np.ndarray
    values: np.ndarray
    local_time: np.ndarray
    occupation: np.ndarray
    at_point: np.ndarray
    source_index: np.ndarray
    locations: np.ndarray
    alphas: np.ndarray

    @property
    def T(self) -> float:
        return float(self.times[-1])


def _out_count(T: float, dt_out: float) -> int:
    n = int(round(T / dt_out))
    if n < 1 or abs(n * dt_out - T) > 1e-9 * max(1.0, T):
        raise SpecificationError(f"output step {dt_out:g} must divide the horizon {T:g}")
    return n


def delayed_path(up: UndelayedPath, table: TimeChangeTable, out_grid: SimGrid) -> DelayedPath:
    """Sample X on ``out_grid`` from an undelayed path and its clock.

    ``x_j = y_k(j)`` with ``k(j) = max{k : r_k <= t_j}``, except inside the
    dwell of step k(j), where X is flagged and snapped to the point.  Local
    time grows linearly through a dwell; occupation is the left Riemann sum
    of the flags.
    """
    n_out = _out_count(out_grid.T, out_grid.dt)
    t = np.arange(n_out + 1) * out_grid.dt
    if t[-1] > table.r[-1]:
        raise DomainError(f"horizon {t[-1]:g} exceeds clock range {table.r[-1]:g}")
    ell = np.asarray(up.local_time, float).reshape(up.times.size, -1)
    m = ell.shape[1]
    a = table.alphas
    if a.shape != (m,):
        raise SpecificationError(f"table has {a.size} delay(s), path has {m} point(s)")
    k = np.searchsorted(table.r, t, side="right") - 1
    k_next = np.minimum(k + 1, ell.shape[0] - 1)
    dl = ell[k_next] - ell[k]  # (J+1, m); at most one point moves per step
    hit = np.where(dl.any(axis=1), dl.argmax(axis=1), -1) if m else np.full(t.size, -1)
    dwell = (dl * a).sum(axis=1) if m else np.zeros(t.size)
    lag = t - table.r[k]
    flag = np.where((hit >= 0) & (lag < dwell), hit, -1)
    x = np.where(flag >= 0, up.locations[np.maximum(flag, 0)] if m else 0.0, up.values[k])
    L = ell[k].copy()
    for i in range(m):
        if a[i] > 0:
            L[:, i] += np.where(hit == i, np.minimum(lag, dwell) / a[i], 0.0)
    occ = np.zeros_like(L)
    for i in range(m):
        occ[1:, i] = np.cumsum(flag[:-1] == i) * out_grid.dt
    return DelayedPath(t, x, L, occ, flag, k, np.asarray(up.locations, float), a)


def simulate_delayed(spec: ValidatedSpec, grid: SimGrid, noise: NoiseStream,
                     x0: float = 0.0, dt_out: float | None = None) -> tuple[DelayedPath, UndelayedPath]:
    """Simulate Y on ``grid`` and return X on ``[0, grid.T]`` sampled every ``dt_out``."""
    up = simulate_undelayed(spec, grid, noise, x0)
    table = build_time_change(up, spec.alphas)
    out = SimGrid(grid.T, grid.dt if dt_out is None else dt_out)
    return delayed_path(up, table, out), up


# ---------------------------------------------------------------------------
# identities


def occupation_identity_report(dp: DelayedPath) -> np.ndarray:
    """``|O_i(T) - alpha_i L_i(T)| / T`` per sticky point."""
    return np.abs(dp.occupation[-1] - dp.alphas * dp.local_time[-1]) / dp.T


@dataclass(frozen=True)
class SdeResidual:
    """Pathwise residual of the SDE pair and quadratic variation check."""

    sup_residual: float
    quadratic_variation: float
    qv_target: float
    increment_mean: float
    increment_var: float

    @property
    def qv_error(self) -> float:
        return abs(self.quadratic_variation - self.qv_target)


def sde_residual_check(dp: DelayedPath, spec: ValidatedSpec, up: UndelayedPath,
                       dW: np.ndarray | None = None) -> SdeResidual:
    """Rebuild ``x_0 + int b dt + int sigma dW + (p_+ - p_-) L`` along the path.

    ``up`` is the undelayed path ``dp`` was built from and ``dW`` (default
    ``up.dW``) the increments of its noise stream.  The residual is
    ``sup_j |x_j - x_0 - RHS_j|``; the quadratic variation of the martingale
    part up to T is compared with ``T - sum_i alpha_i L_i(T)``.
    """
    dW = up.dW if dW is None else np.asarray(dW, float)
    n = up.values.size - 1
    if dW.shape != (n,):
        raise SpecificationError(f"noise has {dW.size} increments, path has {n} steps")
    y = up.values[:-1]
    dt = up.dt
    b = np.asarray(spec.b(y), float)
    s = np.asarray(spec.sigma(y), float)
    mart = np.concatenate(([0.0], np.cumsum(s * dW)))
    drift = np.concatenate(([0.0], np.cumsum(b * dt)))
    skew = np.array([p.p_plus - p.p_minus for p in spec.sticky_points], float)
    k = dp.source_index
    rhs = drift[k] + mart[k] + (dp.local_time - dp.local_time[0]) @ skew
    resid = np.abs(dp.values - dp.values[0] - rhs)
    kJ = int(k[-1])
    qv = float(np.sum((s[:kJ] * dW[:kJ]) ** 2))
    target = dp.T - float(dp.alphas @ dp.local_time[-1])
    z = dW / math.sqrt(dt)
    return SdeResidual(float(resid.max()), qv, target, float(z.mean()), float(z.var()))


# ---------------------------------------------------------------------------
# ensembles of delayed paths


@dataclass(frozen=True)
class DelayedEnsemble:
    """Samples of X and its functionals at ``times`` for ``n_paths`` paths.

    Arrays are indexed ``[path, time]`` (and ``[..., point]``).  ``log_weight``
    is present when a tilt was supplied, ``integral`` when a function g was.
    """

    times: np.ndarray
    x: np.ndarray
    local_time: np.ndarray
    occupation: np.ndarray
    at_point: np.ndarray
    log_weight: np.ndarray | None
    integral: np.ndarray | None
    steps: np.ndarray
    master_seed: int
    dt: float
    dt_out: float
    x0: float
    locations: np.ndarray
    alphas: np.ndarray
    tilt: PiecewiseFn | None = field(default=None, compare=False)
    g: PiecewiseFn | None = field(default=None, compare=False)

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    def column(self, t: float) -> int:
        hits = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if hits.size == 0:
            raise DomainError(f"time {t:g} not among recorded times {self.times.tolist()}")
        return int(hits[0])


def delayed_ensemble(spec: ValidatedSpec, T: float, dt: float, n_paths: int, master_seed: int,
                     times: Sequence[float] | None = None, dt_out: float | None = None,
                     x0: float = 0.0, tilt: PiecewiseFn | None = None,
                     g: PiecewiseFn | None = None, g_at: Sequence[float] | None = None,
                     threads: int | None = None, counter: int = 0) -> DelayedEnsemble:
    """Simulate ``n_paths`` delayed paths and record them at ``times`` (default ``[T]``).

    Path ``i`` uses ``NoiseStream(master_seed, i, counter)`` so the result is
    independent of ``threads``.  Y is advanced only until the clock passes T.
    """
    if n_paths < 1:
        raise SpecificationError("n_paths must be >= 1")
    dt_out = dt if dt_out is None else dt_out
    n_out = _out_count(T, dt_out)
    times = np.asarray([T] if times is None else sorted(times), float)
    report = np.rint(times / dt_out).astype(np.int64)
    if np.any(np.abs(report * dt_out - times) > 1e-9 * max(1.0, T)) or np.any(report > n_out) \
            or np.any(report < 0):
        raise SpecificationError("recorded times must lie on the output grid within [0, T]")
    extras = tuple(f for f in (tilt, g) if f is not None)
    c = compiled(spec, *extras)
    phi_col = 2 if tilt is not None else -1
    g_col = (3 if tilt is not None else 2) if g is not None else -1
    m = len(spec.sticky_points)
    g_at_arr = np.zeros(m) if g_at is None else np.asarray(g_at, float)
    n_rep = report.size
    xs = np.empty((n_paths, n_rep))
    ls = np.empty((n_paths, n_rep, m))
    os_ = np.empty((n_paths, n_rep, m))
    flags = np.empty((n_paths, n_rep), np.int64)
    logw = np.empty((n_paths, n_rep))
    integ = np.empty((n_paths, n_rep))
    steps = np.empty(n_paths, np.int64)
    n_max = SimGrid(T, dt).n_steps + 1
    alphas = spec.alphas
    bps, meta, vals, bounds = c.tab

    def one(i: int) -> None:
        gen = NoiseStream(master_seed, i, counter).generator()
        status, k = K.delayed(float(x0), n_max, dt, n_out, dt_out, report, bps, meta, vals,
                              bounds, c.pts, alphas, phi_col, g_col, g_at_arr, gen, xs[i],
                              ls[i], os_[i], flags[i], logw[i], integ[i])
        if status != K.OK:
            raise _failure(status, k)
        steps[i] = k

    map_paths(one, n_paths, threads)
    return DelayedEnsemble(times, xs, ls, os_, flags, logw if tilt is not None else None,
                           integ if g is not None else None, steps, int(master_seed), dt,
                           dt_out, float(x0), spec.locations, alphas, tilt, g)


# ---------------------------------------------------------------------------
# Dynkin formula


@dataclass(frozen=True)
class TestFunction:
    """``f`` with first and second derivatives and one-sided limits at the points."""

    f: PiecewiseFn
    df: PiecewiseFn
    d2f: PiecewiseFn

    __test__ = False  # not a pytest class

    @classmethod
    def from_piecewise(cls, f: PiecewiseFn | str, points: Sequence[float] = ()) -> "TestFunction":
        """Build from ``f``; rejects functions discontinuous at a breakpoint or point."""
        f = PiecewiseFn.from_expression(f) if isinstance(f, str) else f
        f = f.with_breakpoints(points)
        for i, x in enumerate(f.breakpoints):
            lv, rv = f.left(i), f.right(i)
            if abs(lv - rv) > CONTINUITY_TOL * max(1.0, abs(lv)):
                raise SpecificationError(
                    f"invalid test function: f({x:g}-)={lv:g} differs from f({x:g}+)={rv:g}")
        df = f.derivative()
        return cls(f, df, f.second_derivative())


def generator_image(tf: TestFunction, spec: ValidatedSpec) -> tuple[PiecewiseFn, np.ndarray]:
    """``Lf = sigma^2 f''/2 + b f'`` and its values at the sticky points.

    At a sticky point the one-sided limits must agree within 1e-6 (the value
    used is their average); otherwise the function is rejected.
    """
    locs = list(spec.locations)
    bps = sorted(set(spec.b.breakpoints) | set(spec.sigma.breakpoints)
                 | set(tf.f.breakpoints) | set(locs))
    b, s = spec.b.with_breakpoints(bps), spec.sigma.with_breakpoints(bps)
    d1, d2 = tf.df.with_breakpoints(bps), tf.d2f.with_breakpoints(bps)

    def seg(j):
        return lambda x: 0.5 * s.segments[j](x) ** 2 * d2.segments[j](x) \
            + b.segments[j](x) * d1.segments[j](x)

    lefts = tuple(0.5 * s.left(i) ** 2 * d2.left(i) + b.left(i) * d1.left(i)
                  for i in range(len(bps)))
    rights = tuple(0.5 * s.right(i) ** 2 * d2.right(i) + b.right(i) * d1.right(i)
                   for i in range(len(bps)))
    consts = tuple(
        (0.5 * s.constants[j] ** 2 * d2.constants[j] + b.constants[j] * d1.constants[j])
        if None not in (s.constants[j], d2.constants[j], b.constants[j], d1.constants[j])
        else None for j in range(len(bps) + 1))
    Lf = PiecewiseFn(tuple(bps), tuple(seg(j) for j in range(len(bps) + 1)), lefts, rights, consts)
    at = []
    for x in locs:
        i = bps.index(x)
        if abs(lefts[i] - rights[i]) > GENERATOR_TOL:
            raise SpecificationError(
                f"invalid test function: Lf jumps at {x:g} ({lefts[i]:g} vs {rights[i]:g})")
        at.append(0.5 * (lefts[i] + rights[i]))
    return Lf, np.asarray(at, float)


def boundary_terms(tf: TestFunction, spec: ValidatedSpec) -> np.ndarray:
    """``p_+ f'(x_i+) - p_- f'(x_i-) - alpha_i Lf(x_i)`` per sticky point."""
    _, at = generator_image(tf, spec)
    out = []
    for p, lf in zip(spec.sticky_points, at):
        left, right = tf.df.limits_at(p.location)
        out.append(p.p_plus * right - p.p_minus * left - p.alpha * lf)
    return np.asarray(out, float)


@dataclass(frozen=True)
class MeanCI:
    """Sample mean with its standard error and 95% confidence radius."""

    mean: float
    se: float
    n: int

    @property
    def ci95(self) -> float:
        return 1.96 * self.se

    def covers(self, value: float = 0.0) -> bool:
        return abs(self.mean - value) <= self.ci95


def mean_ci(values: np.ndarray) -> MeanCI:
    v = np.asarray(values, float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MeanCI(float(v.mean()), se, int(v.size))


def dynkin_ensemble(spec: ValidatedSpec, tf: TestFunction, T: float, dt: float, n_paths: int,
                    master_seed: int, x0: float = 0.0, **kw) -> DelayedEnsemble:
    """Ensemble carrying the running integral of ``Lf`` needed by :func:`dynkin_check`."""
    Lf, at = generator_image(tf, spec)
    return delayed_ensemble(spec, T, dt, n_paths, master_seed, x0=x0, g=Lf, g_at=at, **kw)


def dynkin_check(ens: DelayedEnsemble, tf: TestFunction, spec: ValidatedSpec,
                 t: float | None = None) -> MeanCI:
    """Mean of ``f(X_t) - f(x0) - int_0^t Lf(X) ds - sum_i B_i L_i(t)`` with its CI.

    ``B_i`` are the :func:`boundary_terms`; the ensemble must come from
    :func:`dynkin_ensemble` (or carry the integral of ``Lf`` otherwise).
    """
    if ens.integral is None:
        raise SpecificationError("ensemble lacks the generator integral; use dynkin_ensemble")
    col = ens.column(ens.times[-1] if t is None else t)
    B = boundary_terms(tf, spec)
    fx = np.asarray(tf.f(ens.x[:, col]), float)
    resid = fx - float(tf.f(ens.x0)) - ens.integral[:, col] - ens.local_time[:, col, :] @ B
    return mean_ci(resid)


# ---------------------------------------------------------------------------
# Girsanov


def girsanov_weights(phi_values: np.ndarray, dW: np.ndarray, dt: float) -> float:
    """``exp(sum phi_k dW_k - sum phi_k^2 dt / 2)`` for one path."""
    phi_values = np.asarray(phi_values, float)
    return float(np.exp(np.sum(phi_values * np.asarray(dW, float))
                        - 0.5 * np.sum(phi_values ** 2) * dt))


@dataclass(frozen=True)
class WeightedEstimate:
    """Importance-weighted mean with standard error and effective sample size."""

    estimate: float
    se: float
    ess: float
    n: int
    warning: str | None = None


def girsanov_reweight(ens: DelayedEnsemble, g: Callable[[np.ndarray], np.ndarray],
                      t: float | None = None) -> WeightedEstimate:
    """Estimate ``E_Q[g(X_t)]`` under the measure tilted by the ensemble's ``phi``.

    Under Q the drift off the sticky points is ``b + sigma phi`` and the
    sticky parameters are unchanged.  The estimate is the plain mean of
    ``w g`` (``E w = 1``); a warning is attached and issued when the effective
    sample size falls below 1% of the paths.
    """
    if ens.log_weight is None:
        raise SpecificationError("ensemble was simulated without a tilt")
    col = ens.column(ens.times[-1] if t is None else t)
    w = np.exp(ens.log_weight[:, col])
    vals = np.asarray(g(ens.x[:, col]), float) * w
    n = w.size
    ess = float(w.sum() ** 2 / np.sum(w * w))
    warning = None
    if ess < ESS_WARN_FRACTION * n:
        warning = f"weights degenerate: effective sample size {ess:.1f} of {n}"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    se = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return WeightedEstimate(float(vals.mean()), se, ess, n, warning)


def tilted_spec(spec: ValidatedSpec, tilt: PiecewiseFn) -> ValidatedSpec:
    """Same spec with drift ``b + sigma * phi``."""
    from .model import ProcessSpec, validate_process_spec

    b, s = spec.b, spec.sigma
    bps = sorted(set(b.breakpoints) | set(s.breakpoints) | set(tilt.breakpoints))
    b, s, tl = b.with_breakpoints(bps), s.with_breakpoints(bps), tilt.with_breakpoints(bps)

    def seg(j):
        return lambda x: b.segments[j](x) + s.segments[j](x) * tl.segments[j](x)

    consts = tuple((b.constants[j] + s.constants[j] * tl.constants[j])
                   if None not in (b.constants[j], s.constants[j], tl.constants[j]) else None
                   for j in range(len(bps) + 1))
    nb = PiecewiseFn(tuple(bps), tuple(seg(j) for j in range(len(bps) + 1)),
                     tuple(b.left(i) + s.left(i) * tl.left(i) for i in range(len(bps))),
                     tuple(b.right(i) + s.right(i) * tl.right(i) for i in range(len(bps))),
                     consts)
    raw = ProcessSpec(nb, spec.sigma, spec.sticky_points, spec.spec.c)
    lo, hi = spec.window
    return validate_process_spec(raw, np.linspace(lo, hi, 10_000))

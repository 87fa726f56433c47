"""Process descriptions and the compilers that turn scale/speed pairs and
narrow-tube cross sections into simulatable drift, volatility and sticky
point parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import SpecificationError

SUM_TOL = 1e-12
MIN_ONE_SIDED_SLOPE = 1e-12
DEFAULT_PROBES = 10_000
DEFAULT_HALF_WIDTH = 10.0


def _num_step(x):
    return np.maximum(1e-6, 1e-6 * np.abs(x))


def _num_step2(x):
    # second differences lose ~eps/h^2; 1e-4 keeps rounding near 1e-8
    return np.maximum(1e-4, 1e-4 * np.abs(x))


@dataclass(frozen=True)
class PiecewiseFn:
    """Function of one real variable, smooth on each open segment.

    ``segments[i]`` is a vectorised evaluator used on the i-th open segment
    (left of ``breakpoints[0]`` for i = 0).  At a breakpoint the value is the
    right segment's (right-continuity).  One-sided limits default to the
    adjacent segment evaluated at the breakpoint and may be overridden when
    that evaluation is singular.
    """

    breakpoints: tuple[float, ...]
    segments: tuple[Callable, ...]
    left_limits: tuple[float, ...] | None = None
    right_limits: tuple[float, ...] | None = None
    constants: tuple[float | None, ...] | None = None
    expression: ex.Expression | None = field(default=None, compare=False)

    def __post_init__(self):
        bps = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bps)
        if any(not math.isfinite(b) for b in bps) or any(b >= c for b, c in zip(bps, bps[1:])):
            raise SpecificationError(f"breakpoints must be finite and strictly increasing: {bps}")
        if len(self.segments) != len(bps) + 1:
            raise SpecificationError(
                f"{len(bps)} breakpoint(s) need {len(bps) + 1} segments, got {len(self.segments)}"
            )
        for name in ("left_limits", "right_limits"):
            lim = getattr(self, name)
            if lim is not None and len(lim) != len(bps):
                raise SpecificationError(f"{name} needs one value per breakpoint")
        if self.constants is None:
            object.__setattr__(self, "constants", (None,) * len(self.segments))

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "PiecewiseFn":
        value = float(value)
        return cls.from_expression(ex.Expression((), (ex._const(value),), repr(value)))

    @classmethod
    def from_expression(cls, source: str | ex.Expression) -> "PiecewiseFn":
        e = ex.parse_expression(source) if isinstance(source, str) else source
        segs, consts = [], []
        for piece in e.pieces:
            segs.append(_piece_evaluator(piece, e.text))
            consts.append(None if ex.has_var(piece) else float(ex.evaluate(piece, 0.0)))
        return cls(e.breakpoints, tuple(segs), constants=tuple(consts), expression=e)

    @classmethod
    def from_callable(cls, f: Callable, breakpoints: Sequence[float] = ()) -> "PiecewiseFn":
        bps = tuple(breakpoints)
        return cls(bps, (f,) * (len(bps) + 1))

    # evaluation ---------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self.breakpoints:
            return _as_out(self.segments[0](x), x)
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        out = np.empty(x.shape, dtype=float)
        flat_idx, flat_x, flat_out = idx.reshape(-1), x.reshape(-1), out.reshape(-1)
        for k, seg in enumerate(self.segments):
            mask = flat_idx == k
            if mask.any():
                flat_out[mask] = np.broadcast_to(seg(flat_x[mask]), mask.sum())
        return out if out.ndim else float(out)

    def left(self, i: int) -> float:
        if self.left_limits is not None:
            return float(self.left_limits[i])
        return _one_sided(self.segments[i], self.breakpoints[i], -1.0)

    def right(self, i: int) -> float:
        if self.right_limits is not None:
            return float(self.right_limits[i])
        return _one_sided(self.segments[i + 1], self.breakpoints[i], 1.0)

    def limits_at(self, x: float) -> tuple[float, float]:
        """One-sided limits ``(f(x-), f(x+))``; equal values off the breakpoints."""
        if x in self.breakpoints:
            i = self.breakpoints.index(x)
            return self.left(i), self.right(i)
        v = float(self(x))
        return v, v

    def segment_index(self, x: float) -> int:
        return int(np.searchsorted(np.asarray(self.breakpoints), x, side="right"))

    def is_constant(self) -> bool:
        return all(c is not None for c in self.constants) and len(set(self.constants)) == 1

    def with_breakpoints(self, extra: Sequence[float]) -> "PiecewiseFn":
        """Same function with additional (trivial) breakpoints inserted."""
        new = sorted(set(self.breakpoints) | {float(e) for e in extra})
        if len(new) == len(self.breakpoints):
            return self
        segs, consts, lefts, rights = [], [], [], []
        for j in range(len(new) + 1):
            probe = new[0] - 1.0 if j == 0 else new[j - 1]
            k = self.segment_index(probe) if j else 0
            segs.append(self.segments[k])
            consts.append(self.constants[k])
        for b in new:
            lefts.append(self.limits_at(b)[0])
            rights.append(self.limits_at(b)[1])
        expression = None
        if self.expression is not None:
            pieces = tuple(self.expression.pieces[self.segment_index(new[j - 1]) if j else 0]
                           for j in range(len(new) + 1))
            expression = ex.Expression(tuple(new), pieces, self.expression.text)
        return PiecewiseFn(tuple(new), tuple(segs), tuple(lefts), tuple(rights),
                           tuple(consts), expression)

    # derivatives --------------------------------------------------------

    def derivative(self) -> "PiecewiseFn":
        """Analytic derivative for expression-backed functions, central differences otherwise."""
        if self.expression is not None:
            d = PiecewiseFn.from_expression(self.expression.derivative())
            return d
        segs = tuple(_central(seg) for seg in self.segments)
        lefts = tuple(_backward(self.segments[i], b, self.left(i))
                      for i, b in enumerate(self.breakpoints))
        rights = tuple(_forward(self.segments[i + 1], b, self.right(i))
                       for i, b in enumerate(self.breakpoints))
        return PiecewiseFn(self.breakpoints, segs, lefts, rights)

    def second_derivative(self) -> "PiecewiseFn":
        if self.expression is not None:
            return self.derivative().derivative()
        segs = tuple(_central2(seg) for seg in self.segments)
        lefts = tuple(_backward2(self.segments[i], b, self.left(i))
                      for i, b in enumerate(self.breakpoints))
        rights = tuple(_forward2(self.segments[i + 1], b, self.right(i))
                       for i, b in enumerate(self.breakpoints))
        return PiecewiseFn(self.breakpoints, segs, lefts, rights)

    def describe(self) -> str:
        if self.expression is not None:
            return self.expression.simplified().to_text()
        return "<callable>"


def _one_sided(seg: Callable, b: float, side: float) -> float:
    """``seg`` at ``b``, or its linear extrapolation from ``side`` when singular there."""
    try:
        v = float(np.asarray(seg(np.asarray(b))))
    except ex.ExpressionError:
        v = float("nan")
    if math.isfinite(v):
        return v
    h = 1e-7 * max(1.0, abs(b))
    f1 = float(np.asarray(seg(np.asarray(b + side * h))))
    f2 = float(np.asarray(seg(np.asarray(b + 2 * side * h))))
    return 2.0 * f1 - f2


def _as_out(values, x):
    out = np.broadcast_to(np.asarray(values, dtype=float), x.shape).astype(float)
    return out if out.ndim else float(out)


def _piece_evaluator(node, text):
    def f(x):
        return ex.evaluate(node, x, text)

    return f


def _central(f):
    def d(x):
        x = np.asarray(x, dtype=float)
        h = _num_step(x)
        return (f(x + h) - f(x - h)) / (2 * h)

    return d


def _central2(f):
    def d2(x):
        x = np.asarray(x, dtype=float)
        h = _num_step2(x)
        return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)

    return d2


def _backward(f, b, fb):
    h = float(_num_step(b))
    return float((3 * fb - 4 * f(np.asarray(b - h)) + f(np.asarray(b - 2 * h))) / (2 * h))


def _forward(f, b, fb):
    h = float(_num_step(b))
    return float((-3 * fb + 4 * f(np.asarray(b + h)) - f(np.asarray(b + 2 * h))) / (2 * h))


def _backward2(f, b, fb):
    h = float(_num_step2(b))
    return float((2 * fb - 5 * f(np.asarray(b - h)) + 4 * f(np.asarray(b - 2 * h))
                  - f(np.asarray(b - 3 * h))) / (h * h))


def _forward2(f, b, fb):
    h = float(_num_step2(b))
    return float((2 * fb - 5 * f(np.asarray(b + h)) + 4 * f(np.asarray(b + 2 * h))
                  - f(np.asarray(b + 3 * h))) / (h * h))


# ---------------------------------------------------------------------------
# specifications


@dataclass(frozen=True)
class StickyPointSpec:
    """Skew/sticky point: exit probabilities ``p_plus``/``p_minus`` and delay ``alpha``."""

    location: float
    p_plus: float = 0.5
    p_minus: float | None = None
    alpha: float = 0.0

    def __post_init__(self):
        if self.p_minus is None:
            object.__setattr__(self, "p_minus", 1.0 - float(self.p_plus))

    def violations(self) -> list[str]:
        out = []
        where = f"sticky point at {self.location:g}"
        if not math.isfinite(self.location):
            out.append(f"{where}: location must be finite")
        if abs(self.p_plus + self.p_minus - 1.0) > SUM_TOL:
            out.append(f"{where}: p_++p_-≠1 (p_+={self.p_plus:g}, p_-={self.p_minus:g})")
        for name in ("p_plus", "p_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{where}: {name}={v:g} outside [0, 1]")
        if not (self.alpha >= 0.0 and math.isfinite(self.alpha)):
            out.append(f"{where}: alpha={self.alpha:g} must be finite and >= 0")
        return out


@dataclass(frozen=True)
class ProcessSpec:
    """Drift ``b``, volatility ``sigma``, sticky points and ellipticity bound ``c``."""

    b: PiecewiseFn
    sigma: PiecewiseFn
    sticky_points: tuple[StickyPointSpec, ...] = ()
    c: float = 1.0

    @classmethod
    def sticky_bm(cls, alpha: float = 1.0, p_plus: float = 0.5, location: float = 0.0,
                  drift: float = 0.0, vol: float = 1.0) -> "ProcessSpec":
        """Constant coefficients with a single sticky/skew point."""
        return cls(PiecewiseFn.constant(drift), PiecewiseFn.constant(vol),
                   (StickyPointSpec(location, p_plus, 1.0 - p_plus, alpha),), vol * vol)


@dataclass(frozen=True)
class ValidatedSpec:
    """A :class:`ProcessSpec` that passed every invariant on ``probe_grid``.

    Sticky locations are guaranteed to be breakpoints of ``b`` and ``sigma``.
    """

    spec: ProcessSpec
    window: tuple[float, float]
    sigma_max: float

    @property
    def b(self) -> PiecewiseFn:
        return self.spec.b

    @property
    def sigma(self) -> PiecewiseFn:
        return self.spec.sigma

    @property
    def sticky_points(self) -> tuple[StickyPointSpec, ...]:
        return self.spec.sticky_points

    @property
    def locations(self) -> np.ndarray:
        return np.array([p.location for p in self.sticky_points], dtype=float)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p.alpha for p in self.sticky_points], dtype=float)


def default_probe_grid(spec: ProcessSpec, lo: float | None = None, hi: float | None = None,
                       n: int = DEFAULT_PROBES) -> np.ndarray:
    locs = [p.location for p in spec.sticky_points] + list(spec.b.breakpoints) \
        + list(spec.sigma.breakpoints) + [0.0]
    lo = min(locs) - DEFAULT_HALF_WIDTH if lo is None else lo
    hi = max(locs) + DEFAULT_HALF_WIDTH if hi is None else hi
    return np.linspace(lo, hi, n)


def check_process_spec(spec: ProcessSpec, probe_grid=None) -> list[str]:
    """List every invariant violation of ``spec`` (empty when valid)."""
    try:
        validate_process_spec(spec, probe_grid)
    except SpecificationError as err:
        return err.violations
    return []


def validate_process_spec(spec: ProcessSpec, probe_grid=None) -> ValidatedSpec:
    """Check ``spec`` on ``probe_grid`` (plus one-sided limits at breakpoints).

    Raises :class:`SpecificationError` listing all violations.  On success the
    returned spec has every sticky location inserted as a breakpoint of ``b``
    and ``sigma``.
    """
    probes = default_probe_grid(spec) if probe_grid is None else np.asarray(probe_grid, float)
    violations: list[str] = []
    if probes.size == 0 or not np.all(np.isfinite(probes)):
        raise SpecificationError("probe grid must be nonempty and finite")
    if not (spec.c > 0 and math.isfinite(spec.c)):
        violations.append(f"ellipticity bound c={spec.c:g} must be positive")

    locs = [p.location for p in spec.sticky_points]
    for p in spec.sticky_points:
        violations.extend(p.violations())
    if any(a >= b for a, b in zip(locs, locs[1:])):
        violations.append(f"sticky locations must be strictly increasing: {locs}")
        locs = sorted(set(locs))

    b = spec.b.with_breakpoints(locs)
    sigma = spec.sigma.with_breakpoints(locs)
    for name, fn in (("b", b), ("sigma", sigma)):
        try:
            vals = np.asarray(fn(probes), dtype=float)
        except Exception as err:  # evaluator failures become violations
            violations.append(f"{name}: evaluation failed on probe grid: {err}")
            continue
        bad = ~np.isfinite(vals)
        if bad.any():
            violations.append(f"{name}: non-finite value at x={probes[bad][0]:g}")
        lims = []
        for i, bp in enumerate(fn.breakpoints):
            for side, v in (("-", fn.left(i)), ("+", fn.right(i))):
                if not math.isfinite(v):
                    violations.append(f"{name}({bp:g}{side}) is not finite")
                lims.append((f"{bp:g}{side}", v))
        if name == "sigma" and spec.c > 0:
            sq = vals * vals
            low = np.flatnonzero(sq < spec.c)
            if low.size:
                violations.append(
                    f"ellipticity violation: sigma^2 < c={spec.c:g} at {low.size} probe(s), "
                    f"first at x={probes[low[0]]:g} (sigma^2={sq[low[0]]:g})"
                )
            for where, v in lims:
                if v * v < spec.c:
                    violations.append(f"ellipticity violation at x={where}: sigma^2={v * v:g}")
    if violations:
        raise SpecificationError(violations)
    sig_abs = np.abs(sigma(probes))
    sig_lims = [abs(v) for i in range(len(sigma.breakpoints)) for v in (sigma.left(i), sigma.right(i))]
    sigma_max = float(max([sig_abs.max()] + sig_lims))
    return ValidatedSpec(replace(spec, b=b, sigma=sigma),
                         (float(probes.min()), float(probes.max())), sigma_max)


# ---------------------------------------------------------------------------
# compilers


@dataclass(frozen=True)
class ScaleSpeedSpec:
    """Feller pair: continuous scale ``u``, right-continuous speed ``v``, jump set ``E``."""

    u: PiecewiseFn
    v: PiecewiseFn
    jump_set: tuple[float, ...] = ()


@dataclass(frozen=True)
class TubeSpec:
    """Limit cross section of a narrow tube: smooth part ``V1``, step ``beta``, atom ``mu``."""

    V1: PiecewiseFn
    beta: float = 0.0
    mu: float = 0.0


def _merge_pieces(fns: Sequence[PiecewiseFn], bps: Sequence[float]):
    """For each segment of the merged breakpoints, the segment index of every fn."""
    out = []
    for j in range(len(bps) + 1):
        probe = (bps[0] - 1.0) if (j == 0 and bps) else (bps[j - 1] if j else 0.0)
        out.append([f.segment_index(probe) if j else 0 for f in fns])
    return out


def feller_compile(ss: ScaleSpeedSpec, probe_grid=None, rel_tol: float = 1e-6) -> ProcessSpec:
    """Drift, volatility and sticky points of the ``D_v D_u`` process.

    On every open segment ``b = -u''/((u')^2 v')`` and ``sigma = sqrt(2/(u' v'))``;
    each point of the jump set gets ``p_+ = u'(x-)/(u'(x+)+u'(x-))`` and
    ``alpha = (v(x+)-v(x-)) u'(x+) u'(x-)/(u'(x+)+u'(x-))``.
    """
    u, v = ss.u, ss.v
    E = tuple(sorted(float(x) for x in ss.jump_set))
    problems = []
    bps = sorted(set(u.breakpoints) | set(v.breakpoints))
    for x in E:
        if x not in bps:
            problems.append(f"inconsistent jump set: {x:g} is not a breakpoint of u or v")
    if problems:
        raise SpecificationError(problems)
    u, v = u.with_breakpoints(bps), v.with_breakpoints(bps)
    du, d2u, dv = u.derivative(), u.second_derivative(), v.derivative()

    probes = (np.linspace(min(bps + [0.0]) - DEFAULT_HALF_WIDTH, max(bps + [0.0]) + DEFAULT_HALF_WIDTH,
                          DEFAULT_PROBES) if probe_grid is None else np.asarray(probe_grid, float))
    probes = probes[~np.isin(probes, bps)]
    for name, d in (("u'", du), ("v'", dv)):
        vals = np.asarray(d(probes))
        bad = ~(vals > 0)
        if bad.any():
            problems.append(f"monotonicity error: {name} <= 0 at x={probes[bad][0]:g}")
    for i, x in enumerate(bps):
        ul, ur = u.left(i), u.right(i)
        if abs(ul - ur) > rel_tol * max(1.0, abs(ul)):
            problems.append(f"u must be continuous: u({x:g}-)={ul:g}, u({x:g}+)={ur:g}")
        jump = v.right(i) - v.left(i)
        if jump < 0:
            problems.append(f"v must be increasing: v({x:g}+) < v({x:g}-)")
        dl, dr = du.left(i), du.right(i)
        for side, s in (("-", dl), ("+", dr)):
            if not s >= MIN_ONE_SIDED_SLOPE:
                problems.append(f"monotonicity error: u'({x:g}{side})={s:g} below {MIN_ONE_SIDED_SLOPE:g}")
        if x not in E:
            kink = abs(dl - dr) > rel_tol * max(1.0, abs(dl))
            if kink or jump > rel_tol * max(1.0, abs(v.left(i))):
                problems.append(f"inconsistent jump set: {x:g} is a kink of u or jump of v but not in E")
    if problems:
        raise SpecificationError(problems)

    sticky = []
    for x in E:
        i = bps.index(x)
        dl, dr = du.left(i), du.right(i)
        jump = v.right(i) - v.left(i)
        total = dr + dl
        sticky.append(StickyPointSpec(x, dl / total, dr / total, jump * dr * dl / total))

    if u.expression is not None and v.expression is not None:
        b_pieces, s_pieces = [], []
        for iu, iv in _merge_pieces([du, dv], bps):
            u1, u2, v1 = du.expression.pieces[iu], d2u.expression.pieces[iu], dv.expression.pieces[iv]
            b_pieces.append(ex.simplify(ex.Neg(ex.Bin("/", u2, ex.Bin(
                "*", ex.Bin("^", u1, ex.Num(2.0)), v1)))))
            s_pieces.append(ex.simplify(ex.Call("sqrt", ex.Bin(
                "/", ex.Num(2.0), ex.Bin("*", u1, v1)))))
        b = PiecewiseFn.from_expression(ex.Expression(tuple(bps), tuple(b_pieces)))
        sigma = PiecewiseFn.from_expression(ex.Expression(tuple(bps), tuple(s_pieces)))
    else:
        def b_seg(j):
            return lambda x: -d2u.segments[j](x) / (du.segments[j](x) ** 2 * dv.segments[j](x))

        def s_seg(j):
            return lambda x: np.sqrt(2.0 / (du.segments[j](x) * dv.segments[j](x)))

        n = len(bps) + 1
        b = PiecewiseFn(tuple(bps), tuple(b_seg(j) for j in range(n)),
                        tuple(-d2u.left(i) / (du.left(i) ** 2 * dv.left(i)) for i in range(len(bps))),
                        tuple(-d2u.right(i) / (du.right(i) ** 2 * dv.right(i)) for i in range(len(bps))))
        sigma = PiecewiseFn(tuple(bps), tuple(s_seg(j) for j in range(n)),
                            tuple(math.sqrt(2.0 / (du.left(i) * dv.left(i))) for i in range(len(bps))),
                            tuple(math.sqrt(2.0 / (du.right(i) * dv.right(i))) for i in range(len(bps))))
    sig_vals = np.asarray(sigma(probes)) ** 2
    lims = [sigma.left(i) ** 2 for i in range(len(bps))] + [sigma.right(i) ** 2 for i in range(len(bps))]
    c = float(min([sig_vals.min()] + lims))
    return ProcessSpec(b, sigma, tuple(sticky), c)


def tube_compile(ts: TubeSpec, probe_grid=None) -> ProcessSpec:
    """Limit process of reflected Brownian motion in a narrow tube.

    Unit volatility, drift ``(1/2) d/dx ln V1`` left of 0 and
    ``(1/2) d/dx ln(V1 + beta)`` right of it, and one sticky point at 0 with
    ``p_+ = (gamma+beta)/(2 gamma+beta)`` and ``alpha = 2 mu/(2 gamma+beta)``,
    where ``gamma = V1(0)``.
    """
    V1 = ts.V1
    problems = []
    if not (ts.beta >= 0 and math.isfinite(ts.beta)):
        problems.append(f"invalid tube: beta={ts.beta:g} must be >= 0")
    if not (ts.mu >= 0 and math.isfinite(ts.mu)):
        problems.append(f"invalid tube: mu={ts.mu:g} must be >= 0")
    gamma = float(V1(0.0))
    if not gamma > 0:
        problems.append(f"invalid tube: V1(0)={gamma:g} must be positive")
    probes = np.linspace(-DEFAULT_HALF_WIDTH, DEFAULT_HALF_WIDTH, DEFAULT_PROBES) \
        if probe_grid is None else np.asarray(probe_grid, float)
    vals = np.asarray(V1(probes))
    if not np.all(vals > 0):
        problems.append(f"invalid tube: V1 <= 0 at x={probes[~(vals > 0)][0]:g}")
    if problems:
        raise SpecificationError(problems)

    bps = sorted(set(V1.breakpoints) | {0.0})
    V1 = V1.with_breakpoints(bps)
    dV = V1.derivative()
    beta = float(ts.beta)
    i0 = bps.index(0.0)

    if V1.expression is not None:
        pieces = []
        for j in range(len(bps) + 1):
            denom = V1.expression.pieces[j]
            if j > i0:
                denom = ex.Bin("+", denom, ex.Num(beta))
            pieces.append(ex.simplify(ex.Bin("*", ex.Num(0.5), ex.Bin("/", dV.expression.pieces[j], denom))))
        b = PiecewiseFn.from_expression(ex.Expression(tuple(bps), tuple(pieces)))
    else:
        def seg(j):
            shift = beta if j > i0 else 0.0
            return lambda x: 0.5 * dV.segments[j](x) / (V1.segments[j](x) + shift)

        lefts = tuple(0.5 * dV.left(i) / (V1.left(i) + (beta if i > i0 else 0.0)) for i in range(len(bps)))
        rights = tuple(0.5 * dV.right(i) / (V1.right(i) + (beta if i >= i0 else 0.0))
                       for i in range(len(bps)))
        b = PiecewiseFn(tuple(bps), tuple(seg(j) for j in range(len(bps) + 1)), lefts, rights)

    denom = 2.0 * gamma + beta
    point = StickyPointSpec(0.0, (gamma + beta) / denom, gamma / denom, 2.0 * ts.mu / denom)
    return ProcessSpec(b, PiecewiseFn.constant(1.0), (point,), 1.0)

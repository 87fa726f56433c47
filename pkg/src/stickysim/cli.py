"""``sticky-sim`` command line front end.

Every key can be given as a flag (``--key value``) or in a config file of
``key = value`` lines (``#`` starts a comment); flags win over the file.
Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
from scipy import special

from . import closed_form as cf
from .engine import NoiseStream, SimGrid, local_time_band
from .errors import (DomainError, EnsembleError, ExpressionError, NumericalFailure,
                     SpecificationError)
from .lattice import LatticeParams, oracle_ensemble, oracle_simulate
from .model import (PiecewiseFn, ProcessSpec, ScaleSpeedSpec, StickyPointSpec, TubeSpec,
                    feller_compile, tube_compile, validate_process_spec)
from .stats import (QUANTILE_GRID, EmpiricalCDF, empirical_char_fn, ensemble_quantities,
                    ks_distance, ks_two_sample, mean_ci_radius, summarize)
from .transform import (TestFunction, delayed_ensemble, dynkin_check, dynkin_ensemble,
                        girsanov_reweight, mean_ci, sde_residual_check, simulate_delayed,
                        tilted_spec)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(SpecificationError):
    """Bad or unknown configuration key."""


@dataclass(frozen=True)
class Key:
    name: str
    type: Callable[[str], Any]
    default: Any
    help: str
    choices: tuple[str, ...] | None = None


REQUIRED = object()

SHARED = (
    Key("T", float, 1.0, "time horizon"),
    Key("dt", float, 1e-4, "time step of the undelayed process"),
    Key("paths", int, 1, "number of paths"),
    Key("seed", int, 0, "master seed"),
    Key("alpha", float, 1.0, "delay coefficient at the sticky point"),
    Key("p-plus", float, 0.5, "probability of leaving the sticky point upward"),
    Key("out", str, None, "output file (default: standard output)"),
    Key("x0", float, 0.0, "starting point"),
    Key("band", float, None, "bandwidth of the band local-time estimator"),
    Key("delta", float, 0.01, "exit radius or lattice spacing"),
)

CLOSED_FORMS = ("normal-cdf", "bm-local-time-tail", "local-time-tail", "expected-occupation",
                "point-mass", "char-fn")
REFERENCES = ("sticky-local-time", "bm-local-time", "normal")
CHECKS = ("occupation", "sde-pair", "dynkin", "girsanov", "pointmass", "localtime-law", "charfn",
          "oracle-match")

COMMANDS: dict[str, tuple[str, tuple[Key, ...], dict[str, Any]]] = {
    "simulate": ("simulate the sticky process by time change; CSV for one path, JSON otherwise", (
        Key("b", str, "0", "drift expression"),
        Key("sigma", str, "1", "volatility expression"),
        Key("location", float, 0.0, "location of the sticky point"),
        Key("spec", str, None, "process spec JSON (from feller/tube); replaces b, sigma and the point"),
        Key("dt-out", float, None, "output spacing of the path CSV (default: dt)"),
    ), {}),
    "oracle": ("simulate the lattice walk; CSV for one path, JSON otherwise", (), {"delta": 0.005}),
    "closed-form": ("evaluate an exact law of symmetric sticky Brownian motion", (
        Key("quantity", str, REQUIRED, "which closed form", CLOSED_FORMS),
        Key("t", float, 1.0, "time"),
        Key("y", float, 0.0, "level of the local-time tail"),
        Key("lam", float, 1.0, "argument of the characteristic function"),
        Key("x", float, 0.0, "argument of the normal CDF"),
    ), {}),
    "feller": ("compile a scale/speed pair into drift, volatility and sticky points", (
        Key("u", str, REQUIRED, "scale function expression"),
        Key("v", str, REQUIRED, "speed function expression"),
        Key("jumps", str, "", "comma-separated jump set"),
    ), {}),
    "tube": ("compile a narrow-tube cross section into a process spec", (
        Key("V1", str, REQUIRED, "smooth cross-section expression"),
        Key("beta", float, 0.0, "extra cross section right of 0"),
        Key("mu", float, 0.0, "cross-section atom at 0"),
    ), {}),
    "analyze": ("KS reports for stored samples", (
        Key("samples", str, REQUIRED, "sample file: one value per line or CSV with header"),
        Key("column", str, None, "CSV column to read"),
        Key("reference", str, "sticky-local-time", "reference CDF", REFERENCES),
        Key("against", str, None, "second sample file for a two-sample report"),
        Key("t", float, None, "time of the reference law (default: T)"),
    ), {}),
}

CHECK_HELP = {
    "occupation": "mean |occupation - alpha * local time| at T over an ensemble",
    "sde-pair": "per-path SDE residual and quadratic variation of the moving part",
    "dynkin": "Dynkin residual of f = x^2 + alpha*|x| (95%% CI must cover 0)",
    "girsanov": "reweighted vs directly drifted mean of X(T) under a constant tilt",
    "pointmass": "fraction of paths at the sticky point at T vs the closed form",
    "localtime-law": "KS distance of alpha * local time at T to its closed-form law",
    "charfn": "empirical vs closed-form characteristic function on an integer grid",
    "oracle-match": "two-sample KS of position and occupation against the lattice walk",
}

VERIFY_KEYS = (
    Key("tol", float, None, "tolerance (default depends on the check)"),
    Key("tol-occ", float, 0.03, "oracle-match: tolerance of the occupation KS"),
    Key("phi", float, 0.5, "girsanov: constant tilt"),
    Key("lam-max", int, 5, "charfn: largest |lambda| on the integer grid"),
)
VERIFY_TOL = {"occupation": 0.02, "sde-pair": 0.02, "dynkin": None, "girsanov": 2.0,
              "pointmass": 0.02, "localtime-law": 0.02, "charfn": 0.03, "oracle-match": 0.02}
VERIFY_DEFAULTS = {"paths": 10_000, "oracle-match": {"delta": 0.005}}


# ---------------------------------------------------------------------------
# configuration


def read_config(path: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments; blank lines ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def _convert(key: Key, raw: Any) -> Any:
    if raw is None:
        return None
    try:
        value = key.type(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key.name}: {raw!r}")
    if key.choices and value not in key.choices:
        raise ConfigError(f"{key.name} must be one of {', '.join(key.choices)}, got {value!r}")
    return value


def resolve(keys: Sequence[Key], flags: dict[str, Any], config_path: str | None,
            overrides: dict[str, Any] | None = None) -> dict[str, Any]:
    """Merge defaults, per-command overrides, config file and flags (in that order)."""
    table = {k.name: k for k in keys}
    out = {k.name: k.default for k in keys}
    out.update(overrides or {})
    if config_path:
        for name, raw in read_config(config_path).items():
            if name not in table:
                raise ConfigError(f"unknown key {name!r} in {config_path}")
            out[name] = _convert(table[name], raw)
    for name, value in flags.items():
        if value is not None:
            out[name] = value
    missing = [n for n, v in out.items() if v is REQUIRED]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    return out


def _add_keys(p: argparse.ArgumentParser, keys: Sequence[Key], overrides: dict[str, Any]):
    for k in keys:
        default = overrides.get(k.name, k.default)
        shown = "required" if default is REQUIRED else f"default: {default}"
        p.add_argument(f"--{k.name}", dest=k.name, type=k.type, default=None, choices=k.choices,
                       metavar=k.name.upper().replace("-", "_"), help=f"{k.help} ({shown})")
    p.add_argument("--config", default=None, metavar="PATH", help="config file of key = value lines")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sticky-sim", allow_abbrev=False,
        description="Simulate and verify sticky skew diffusions on the line.",
        epilog="Keys may also come from --config FILE (key = value lines); flags win. "
               "Exit codes: 0 ok, 1 verification failed, 2 configuration error, "
               "3 numerical failure.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (help_, keys, over) in COMMANDS.items():
        p = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        _add_keys(p, SHARED + keys, over)
        p.set_defaults(keys=SHARED + keys, overrides=over)
    pv = sub.add_parser("verify", help="run one statistical verification",
                        description="run one statistical verification", allow_abbrev=False)
    vsub = pv.add_subparsers(dest="check", required=True)
    for check in CHECKS:
        over = {"paths": VERIFY_DEFAULTS["paths"], **VERIFY_DEFAULTS.get(check, {})}
        p = vsub.add_parser(check, help=CHECK_HELP[check], description=CHECK_HELP[check],
                            allow_abbrev=False)
        _add_keys(p, SHARED + VERIFY_KEYS, over)
        p.set_defaults(keys=SHARED + VERIFY_KEYS, overrides=over)
    return parser


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def _csv(header: Sequence[str], columns: Sequence[np.ndarray], int_cols: Sequence[int] = ()) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    cols = [np.asarray(c) for c in columns]
    for row in range(cols[0].size):
        buf.write(",".join(str(int(c[row])) if j in int_cols else _fmt(c[row])
                           for j, c in enumerate(cols)) + "\n")
    return buf.getvalue()


def path_csv(times, x, local_time, occupation, at_point, extra: dict[str, np.ndarray] | None = None) -> str:
    """CSV with header ``t,x,L<i>,occ<i>,...,at_point`` (extra columns last)."""
    m = local_time.shape[1] if local_time.ndim > 1 else 0
    header, cols = ["t", "x"], [times, x]
    for i in range(m):
        header += [f"L{i}", f"occ{i}"]
        cols += [local_time[:, i], occupation[:, i]]
    header.append("at_point")
    cols.append(at_point)
    for name, col in (extra or {}).items():
        header.append(name)
        cols.append(col)
    return _csv(header, cols, int_cols=(len(header) - 1 - len(extra or {}),))


def ensemble_json(config: dict, samples: dict[str, np.ndarray], seed: int, t: float,
                  ks_reports: Sequence[dict]) -> str:
    summ = summarize(samples, seed, t)
    return _json({
        "config": config,
        "seed": seed,
        "n_paths": summ.n_paths,
        "quantiles": {k: [float(q) for q in c.quantiles(QUANTILE_GRID)] for k, c in summ.cdfs.items()},
        "mean": dict(summ.means),
        "ci95": dict(summ.ci95),
        "ks_reports": list(ks_reports),
    })


def _echo(cfg: dict) -> dict:
    return {k: v for k, v in cfg.items() if k not in ("out",)}


# ---------------------------------------------------------------------------
# specs


def spec_to_json(spec: ProcessSpec) -> dict:
    return {
        "b": spec.b.describe(),
        "sigma": spec.sigma.describe(),
        "c": spec.c,
        "sticky_points": [{"location": p.location, "p_plus": p.p_plus, "p_minus": p.p_minus,
                           "alpha": p.alpha} for p in spec.sticky_points],
    }


def spec_from_json(data: dict) -> ProcessSpec:
    try:
        pts = tuple(StickyPointSpec(float(p["location"]), float(p["p_plus"]),
                                    float(p.get("p_minus", 1 - float(p["p_plus"]))),
                                    float(p.get("alpha", 0.0)))
                    for p in data.get("sticky_points", []))
        return ProcessSpec(PiecewiseFn.from_expression(str(data["b"])),
                           PiecewiseFn.from_expression(str(data["sigma"])), pts,
                           float(data.get("c", 1.0)))
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"malformed spec JSON: {err}")


def spec_from_config(cfg: dict):
    if cfg.get("spec"):
        with open(cfg["spec"], encoding="utf-8") as fh:
            raw = spec_from_json(json.load(fh))
    else:
        b = PiecewiseFn.from_expression(cfg["b"])
        s = PiecewiseFn.from_expression(cfg["sigma"])
        probes = np.linspace(-10, 10, 10_000)
        c = float(np.min(np.asarray(s(probes), float) ** 2))
        pt = StickyPointSpec(cfg["location"], cfg["p-plus"], 1.0 - cfg["p-plus"], cfg["alpha"])
        raw = ProcessSpec(b, s, (pt,), c)
    return validate_process_spec(raw)


def _sticky_bm(cfg: dict):
    return validate_process_spec(ProcessSpec.sticky_bm(cfg["alpha"], cfg["p-plus"]))


def _is_standard_sticky_bm(spec, x0: float) -> bool:
    pts = spec.sticky_points
    return (x0 == 0.0 and len(pts) == 1 and pts[0].location == 0.0 and pts[0].p_plus == 0.5
            and pts[0].alpha > 0 and spec.b.constants == (0.0,) * len(spec.b.constants)
            and spec.sigma.constants == (1.0,) * len(spec.sigma.constants))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict) -> int:
    spec = spec_from_config(cfg)
    T, dt = cfg["T"], cfg["dt"]
    if cfg["paths"] == 1:
        dp, up = simulate_delayed(spec, SimGrid(T, dt), NoiseStream(cfg["seed"], 0), cfg["x0"],
                                  cfg["dt-out"])
        extra = {}
        if cfg["band"] is not None:
            for i, x in enumerate(spec.locations):
                band = local_time_band(up, float(x), cfg["band"], spec.sigma)
                if band.warning:
                    print(f"warning: {band.warning}", file=sys.stderr)
                extra[f"Lband{i}"] = band.clamped[dp.source_index]
        _emit(path_csv(dp.times, dp.values, dp.local_time, dp.occupation, dp.at_point, extra),
              cfg["out"])
        return EXIT_OK
    ens = delayed_ensemble(spec, T, dt, cfg["paths"], cfg["seed"], x0=cfg["x0"])
    samples = ensemble_quantities(ens, T)
    reports = []
    if _is_standard_sticky_bm(spec, cfg["x0"]):
        a = float(spec.alphas[0])
        reports.append(ks_distance(samples["alpha_local_time"],
                                   lambda y: cf.sticky_occupation_cdf_vec(T, y, a),
                                   "sticky-local-time").as_dict())
    _emit(ensemble_json(_echo(cfg), samples, cfg["seed"], T, reports), cfg["out"])
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    params = LatticeParams(cfg["delta"], cfg["p-plus"], None, cfg["alpha"], cfg["T"])
    T = cfg["T"]
    if cfg["paths"] == 1:
        path = oracle_simulate(params, cfg["seed"], 0)
        n = int(round(T / cfg["dt"]))
        t = np.minimum(np.arange(n + 1) * cfg["dt"], T)
        x, L, occ = path.sample(t)
        flag = np.where(x == 0.0, 0, -1)
        _emit(path_csv(t, x, L[:, None], occ[:, None], flag), cfg["out"])
        return EXIT_OK
    ens = oracle_ensemble(params, cfg["paths"], cfg["seed"], [T])
    samples = {q: np.asarray(ens.quantity(q, T), float)
               for q in ("position", "occupation_at_0", "local_time_at_0")}
    reports = []
    if params.p_plus == 0.5 and params.alpha > 0:
        a = params.alpha
        reports.append(ks_distance(samples["occupation_at_0"],
                                   lambda y: cf.sticky_occupation_cdf_vec(T, y, a),
                                   "sticky-local-time").as_dict())
    _emit(ensemble_json(_echo(cfg), samples, cfg["seed"], T, reports), cfg["out"])
    return EXIT_OK


def cmd_closed_form(cfg: dict) -> int:
    q, t, a = cfg["quantity"], cfg["t"], cfg["alpha"]
    p = cfg["p-plus"]
    if q == "normal-cdf":
        v = cf.normal_cdf(cfg["x"])
    elif q == "bm-local-time-tail":
        v = cf.bm_local_time_tail(t, cfg["y"])
    elif q == "local-time-tail":
        v = cf.sticky_local_time_tail(t, cfg["y"], a, p)
    elif q == "expected-occupation":
        v = cf.expected_occupation(t, a, p)
    elif q == "point-mass":
        v = cf.point_mass(t, a, p)
    else:
        v = cf.char_fn(cfg["lam"], t, a, p)
    _emit(f"{v:#.5g}\n", cfg["out"])
    return EXIT_OK


def cmd_feller(cfg: dict) -> int:
    jumps = tuple(float(s) for s in cfg["jumps"].split(",") if s.strip())
    ss = ScaleSpeedSpec(PiecewiseFn.from_expression(cfg["u"]), PiecewiseFn.from_expression(cfg["v"]),
                        jumps)
    _emit(_json(spec_to_json(feller_compile(ss))), cfg["out"])
    return EXIT_OK


def cmd_tube(cfg: dict) -> int:
    ts = TubeSpec(PiecewiseFn.from_expression(cfg["V1"]), cfg["beta"], cfg["mu"])
    _emit(_json(spec_to_json(tube_compile(ts))), cfg["out"])
    return EXIT_OK


def read_samples(path: str, column: str | None = None) -> np.ndarray:
    """One number per line, or a CSV with a header row (``column`` picks the field)."""
    with open(path, encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if line.strip() and not line.startswith("#"))]
    if not rows:
        raise ConfigError(f"{path}: no samples")
    header = None
    try:
        float(rows[0][0])
    except ValueError:
        header, rows = rows[0], rows[1:]
    j = 0
    if column is not None:
        if header is None or column not in header:
            raise ConfigError(f"{path}: no column {column!r}")
        j = header.index(column)
    elif header is not None and len(header) > 1:
        j = header.index("x") if "x" in header else 0
    try:
        return np.array([float(r[j]) for r in rows])
    except (ValueError, IndexError) as err:
        raise ConfigError(f"{path}: bad sample row ({err})")


def cmd_analyze(cfg: dict) -> int:
    x = read_samples(cfg["samples"], cfg["column"])
    t = cfg["T"] if cfg["t"] is None else cfg["t"]
    reports = []
    if cfg["against"]:
        y = read_samples(cfg["against"], cfg["column"])
        reports.append(ks_two_sample(x, y, f"samples:{cfg['against']}").as_dict())
    else:
        ref = cfg["reference"]
        a = cfg["alpha"]
        if ref == "sticky-local-time":
            F = lambda y: cf.sticky_occupation_cdf_vec(t, y, a)  # noqa: E731
        elif ref == "bm-local-time":
            F = lambda y: np.where(np.asarray(y) < 0, 0.0, 1.0 - special.erfc(  # noqa: E731
                np.maximum(y, 0) / math.sqrt(2 * t)))
        else:
            F = lambda y: 0.5 * special.erfc(-np.asarray(y) / math.sqrt(2 * t))  # noqa: E731
        reports.append(ks_distance(x, F, ref).as_dict())
    ecdf = EmpiricalCDF.from_samples(x)
    _emit(_json({"config": _echo(cfg), "n": ecdf.n,
                 "quantiles": [float(q) for q in ecdf.quantiles()],
                 "mean": float(x.mean()), "ci95": mean_ci_radius(x), "ks_reports": reports}),
          cfg["out"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# verification


def _verdict(name: str, ok: bool, measured: str, target: str, report: dict, out: str | None) -> int:
    line = f"{'PASS' if ok else 'FAIL'} {name}: {measured} (target {target})"
    print(line)
    if out:
        _emit(_json({"check": name, "passed": ok, **report}), out)
    return EXIT_OK if ok else EXIT_FAIL


def verify(check: str, cfg: dict) -> int:
    tol = cfg["tol"] if cfg["tol"] is not None else VERIFY_TOL[check]
    T, dt, n, seed, a = cfg["T"], cfg["dt"], cfg["paths"], cfg["seed"], cfg["alpha"]
    spec = _sticky_bm(cfg)
    out = cfg["out"]
    if check == "occupation":
        ens = delayed_ensemble(spec, T, dt, n, seed, x0=cfg["x0"])
        r = np.abs(ens.occupation[:, -1, 0] - a * ens.local_time[:, -1, 0])
        m = float(r.mean())
        return _verdict(check, m <= tol, f"mean |O - alpha L| = {m:.3g}", f"<= {tol:g}",
                        {"mean_residual": m, "max_residual": float(r.max()), "n": n}, out)
    if check == "sde-pair":
        sup = np.empty(n)
        qv = np.empty(n)
        for i in range(n):
            dp, up = simulate_delayed(spec, SimGrid(T, dt), NoiseStream(seed, i), cfg["x0"])
            res = sde_residual_check(dp, spec, up)
            sup[i] = res.sup_residual
            qv[i] = res.quadratic_variation - res.qv_target
        m_sup, m_qv = float(sup.mean()), float(abs(qv.mean()))
        ok = m_sup <= tol and m_qv <= tol
        return _verdict(check, ok, f"mean sup residual = {m_sup:.3g}, |mean QV error| = {m_qv:.3g}",
                        f"both <= {tol:g}", {"mean_sup_residual": m_sup, "mean_qv_error": m_qv,
                                             "n": n}, out)
    if check == "dynkin":
        tf = TestFunction.from_piecewise(f"x^2 + {a!r}*abs(x)", [0.0])
        ens = dynkin_ensemble(spec, tf, T, dt, n, seed, x0=cfg["x0"])
        mc = dynkin_check(ens, tf, spec)
        return _verdict(check, mc.covers(0.0), f"mean residual = {mc.mean:.3g} +- {mc.ci95:.3g}",
                        "95% CI covers 0", {"mean": mc.mean, "ci95": mc.ci95, "n": mc.n}, out)
    if check == "girsanov":
        tilt = PiecewiseFn.constant(cfg["phi"])
        ens = delayed_ensemble(spec, T, dt, n, seed, x0=cfg["x0"], tilt=tilt)
        w = girsanov_reweight(ens, lambda x: x)
        direct = delayed_ensemble(tilted_spec(spec, tilt), T, dt, n, seed, x0=cfg["x0"], counter=1)
        d = mean_ci(direct.x[:, -1])
        se = math.hypot(w.se, d.se)
        diff = abs(w.estimate - d.mean)
        return _verdict(check, diff <= tol * se,
                        f"reweighted {w.estimate:.4f} vs direct {d.mean:.4f}, |diff| = {diff:.3g}",
                        f"<= {tol:g} combined SE = {tol * se:.3g}",
                        {"reweighted": w.estimate, "reweighted_se": w.se, "ess": w.ess,
                         "direct": d.mean, "direct_se": d.se, "n": n}, out)
    if check in ("pointmass", "localtime-law", "charfn"):
        if cfg["p-plus"] != 0.5 or cfg["x0"] != 0.0:
            raise ConfigError(f"{check} needs p-plus = 0.5 and x0 = 0")
        ens = delayed_ensemble(spec, T, dt, n, seed)
        if check == "pointmass":
            frac = float(np.mean(ens.at_point[:, -1] == 0))
            ref = cf.point_mass(T, a)
            return _verdict(check, abs(frac - ref) <= tol, f"at-point fraction {frac:.5f} vs {ref:.5f}",
                            f"within {tol:g}", {"empirical": frac, "closed_form": ref, "n": n}, out)
        if check == "localtime-law":
            rep = ks_distance(a * ens.local_time[:, -1, 0],
                              lambda y: cf.sticky_occupation_cdf_vec(T, y, a), "sticky-local-time")
            return _verdict(check, rep.ks <= tol, f"KS = {rep.ks:.4f}", f"<= {tol:g}",
                            {"ks_reports": [rep.as_dict()]}, out)
        lam = np.arange(-cfg["lam-max"], cfg["lam-max"] + 1, dtype=float)
        est = empirical_char_fn(ens.x[:, -1], lam)
        exact = np.array([cf.char_fn(l, T, a) for l in lam])
        sup = float(np.max(np.abs(est.values - exact)))
        ode = max(cf.char_fn_ode_residual(l, T, a) for l in lam)
        ok = sup <= tol and ode <= 1e-5
        return _verdict(check, ok, f"sup |phi_hat - phi| = {sup:.4f}, ODE residual = {ode:.2g}",
                        f"<= {tol:g} and <= 1e-05", {"sup_error": sup, "ode_residual": ode, "n": n},
                        out)
    # oracle-match
    params = LatticeParams(cfg["delta"], cfg["p-plus"], None, a, T)
    lat = oracle_ensemble(params, n, seed)
    ens = delayed_ensemble(spec, T, dt, n, seed, x0=0.0)
    ks_x = ks_two_sample(ens.x[:, -1], lat.x[:, -1], "lattice:position")
    ks_o = ks_two_sample(ens.occupation[:, -1, 0], lat.occupation[:, -1], "lattice:occupation")
    ok = ks_x.ks <= tol and ks_o.ks <= cfg["tol-occ"]
    return _verdict(check, ok, f"position KS = {ks_x.ks:.4f}, occupation KS = {ks_o.ks:.4f}",
                    f"<= {tol:g} and <= {cfg['tol-occ']:g}",
                    {"ks_reports": [ks_x.as_dict(), ks_o.as_dict()]}, out)


HANDLERS = {"simulate": cmd_simulate, "oracle": cmd_oracle, "closed-form": cmd_closed_form,
            "feller": cmd_feller, "tube": cmd_tube, "analyze": cmd_analyze}


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    names = [k.name for k in args.keys]
    flags = {n: getattr(args, n) for n in names}
    cfg = resolve(args.keys, flags, args.config, args.overrides)
    if args.command == "verify":
        return verify(args.check, cfg)
    return HANDLERS[args.command](cfg)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except (NumericalFailure, EnsembleError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SpecificationError, ExpressionError, DomainError, OSError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

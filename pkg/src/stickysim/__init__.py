"""Simulation and verification of sticky skew diffusions on the line.

The delayed process is built from an undelayed skew diffusion ``Y`` and its
symmetric local times by the clock ``r(s) = s + sum_i alpha_i l_i(s)``,
``X = Y(r^-1(t))``.  Exact laws of symmetric sticky Brownian motion and a
lattice random walk serve as references.
"""

from __future__ import annotations

from .closed_form import (bm_local_time_tail, char_fn, char_fn_ode_residual, expected_occupation,
                          normal_cdf, point_mass, sticky_local_time_tail, sticky_occupation_cdf)
from .engine import (NoiseStream, SimGrid, UndelayedPath, local_time_band, local_time_tanaka,
                     simulate_undelayed)
from .errors import (DomainError, EnsembleError, ExpressionError, NumericalFailure,
                     SpecificationError, StickySimError)
from .expr import Expression, parse_expression
from .lattice import (LatticeParams, LatticePath, oracle_distribution, oracle_ensemble,
                      oracle_simulate)
from .model import (PiecewiseFn, ProcessSpec, ScaleSpeedSpec, StickyPointSpec, TubeSpec,
                    ValidatedSpec, feller_compile, tube_compile, validate_process_spec)
from .stats import (DistanceReport, EmpiricalCDF, EnsembleSummary, delay_coefficient_estimate,
                    empirical_char_fn, exit_probability_estimate, ks_distance, ks_two_sample,
                    mc_ensemble)
from .transform import (DelayedEnsemble, DelayedPath, TestFunction, build_time_change,
                        delayed_ensemble, delayed_path, dynkin_check, dynkin_ensemble,
                        girsanov_reweight, invert_time_change, occupation_identity_report,
                        sde_residual_check, simulate_delayed, tilted_spec)

__all__ = [
    "DelayedEnsemble",
    "DelayedPath",
    "DistanceReport",
    "DomainError",
    "EmpiricalCDF",
    "EnsembleError",
    "EnsembleSummary",
    "Expression",
    "ExpressionError",
    "LatticeParams",
    "LatticePath",
    "NoiseStream",
    "NumericalFailure",
    "PiecewiseFn",
    "ProcessSpec",
    "ScaleSpeedSpec",
    "SimGrid",
    "SpecificationError",
    "StickyPointSpec",
    "StickySimError",
    "TestFunction",
    "TubeSpec",
    "UndelayedPath",
    "ValidatedSpec",
    "bm_local_time_tail",
    "build_time_change",
    "char_fn",
    "char_fn_ode_residual",
    "delay_coefficient_estimate",
    "delayed_ensemble",
    "delayed_path",
    "dynkin_check",
    "dynkin_ensemble",
    "empirical_char_fn",
    "exit_probability_estimate",
    "expected_occupation",
    "feller_compile",
    "girsanov_reweight",
    "invert_time_change",
    "ks_distance",
    "ks_two_sample",
    "local_time_band",
    "local_time_tanaka",
    "mc_ensemble",
    "normal_cdf",
    "occupation_identity_report",
    "oracle_distribution",
    "oracle_ensemble",
    "oracle_simulate",
    "parse_expression",
    "point_mass",
    "sde_residual_check",
    "simulate_delayed",
    "simulate_undelayed",
    "sticky_local_time_tail",
    "sticky_occupation_cdf",
    "tilted_spec",
    "tube_compile",
    "validate_process_spec",
]

__version__ = "0.1.0"

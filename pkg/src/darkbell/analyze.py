"""Observables, parameter sweeps, and the linear error-model fit."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import qops
from .evolve import DensityState, SteadyStateCriteria, initial_state, steady_state
from .qops import HilbertSpec
from .scheme import SchemeParams, build_eliminated_generator, build_full_generator


def fidelity(rho: np.ndarray | DensityState, spec: HilbertSpec | None = None) -> float:
    """Population of the antisymmetric Bell state after tracing out motion.

    Linear in rho; expects a normalized state.
    """
    if isinstance(rho, DensityState):
        spec = rho.spec
        rho = rho.matrix
    if spec is None:
        raise ValueError("spec required when passing a bare matrix")
    return float(np.trace(qops.bell_minus_projector(spec) @ rho).real)


def error(rho: np.ndarray | DensityState, spec: HilbertSpec | None = None) -> float:
    return 1.0 - fidelity(rho, spec)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of the difference."""
    diff = rho - sigma
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


@dataclass
class SweepGrid:
    """Steady-state error over a two-parameter grid, with per-cell quality
    flags: converged (slope criterion met before the cap) and valid (motional
    truncation trusted throughout the run)."""

    axis1_name: str
    axis1_values: np.ndarray
    axis2_name: str
    axis2_values: np.ndarray
    error: np.ndarray
    converged: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        shape = (len(self.axis1_values), len(self.axis2_values))
        for name in ("error", "converged", "valid"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}")
        if np.any(self.error < -1e-8) or np.any(self.error > 1.0 + 1e-8):
            raise ValueError("error left [0, 1]")


SWEEPABLE_FIELDS = ("omega", "omega_r", "omega_rp", "gamma_s", "gamma_sp", "h_r", "xi")


def steady_error_cell(
    fixed: SchemeParams,
    spec: HilbertSpec,
    overrides: dict,
    criteria: SteadyStateCriteria | None = None,
    rho0: DensityState | None = None,
    dt: float | None = None,
) -> tuple[float, bool, bool]:
    """One sweep cell: (steady-state error, converged flag, truncation-valid
    flag). Pure function of its arguments, so cells can run in any order or
    in parallel."""
    if rho0 is None:
        rho0 = initial_state(spec, "gg")
    build = build_eliminated_generator if spec.internal_levels == 2 else build_full_generator
    p = replace(fixed, **overrides)
    res = steady_state(build(p, spec), rho0, criteria=criteria, dt=dt)
    err = max(0.0, 1.0 - fidelity(res.state))
    return err, res.converged, not res.series.truncation_violated


def sweep_params(
    fixed: SchemeParams,
    spec: HilbertSpec,
    axis1_name: str,
    axis1_values,
    axis2_name: str,
    axis2_values,
    criteria: SteadyStateCriteria | None = None,
    rho0: DensityState | None = None,
    dt: float | None = None,
) -> SweepGrid:
    """Steady-state error on a grid over two SchemeParams fields.

    Cells are evaluated independently in a fixed order, so results do not
    depend on scheduling.
    """
    for name in (axis1_name, axis2_name):
        if name not in SWEEPABLE_FIELDS:
            raise ValueError(f"cannot sweep {name!r}; choose from {SWEEPABLE_FIELDS}")
    if axis1_name == axis2_name:
        raise ValueError("sweep axes must differ")
    axis1_values = np.asarray(axis1_values, dtype=float)
    axis2_values = np.asarray(axis2_values, dtype=float)
    err = np.empty((len(axis1_values), len(axis2_values)))
    conv = np.empty_like(err, dtype=bool)
    valid = np.empty_like(err, dtype=bool)
    for i, v1 in enumerate(axis1_values):
        for j, v2 in enumerate(axis2_values):
            cell = steady_error_cell(
                fixed, spec, {axis1_name: v1, axis2_name: v2},
                criteria=criteria, rho0=rho0, dt=dt,
            )
            err[i, j], conv[i, j], valid[i, j] = cell
    return SweepGrid(
        axis1_name=axis1_name,
        axis1_values=axis1_values,
        axis2_name=axis2_name,
        axis2_values=axis2_values,
        error=err,
        converged=conv,
        valid=valid,
    )


def sweep_couplings(
    omega_values,
    omega_r_values,
    fixed: SchemeParams,
    spec: HilbertSpec,
    criteria: SteadyStateCriteria | None = None,
    dt: float | None = None,
) -> SweepGrid:
    """Steady-state error over the carrier/sideband coupling plane."""
    return sweep_params(
        fixed, spec, "omega", omega_values, "omega_r", omega_r_values,
        criteria=criteria, dt=dt,
    )


@dataclass
class ErrorFit:
    """Coefficients of the intercept-free model E ~ a*h_r + b*gamma_s, with
    per-sample residuals so the linearity claim stays checkable."""

    a: float
    b: float
    residuals: np.ndarray


def fit_error_model(samples) -> ErrorFit:
    """Least-squares fit of steady-state error against heating and decay rates.

    samples is an iterable of (h_r, gamma_s, error) triples; at least three
    are needed and they must span both axes.
    """
    data = np.asarray(list(samples), dtype=float)
    if data.ndim != 2 or data.shape[1] != 3 or data.shape[0] < 3:
        raise ValueError("need at least 3 samples of (h_r, gamma_s, error)")
    design = data[:, :2]
    target = data[:, 2]
    if np.linalg.matrix_rank(design) < 2:
        raise ValueError("degenerate design matrix: samples do not span both axes")
    coeffs, *_ = np.linalg.lstsq(design, target, rcond=None)
    residuals = target - design @ coeffs
    return ErrorFit(a=float(coeffs[0]), b=float(coeffs[1]), residuals=residuals)

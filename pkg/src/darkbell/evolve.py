"""Deterministic propagation of the master equation.

States are dense density matrices. Time stepping works on the row-major
vectorized state with the Liouvillian precomputed as a sparse superoperator,
which keeps the per-step cost at a handful of sparse matrix-vector products.
Fixed-step RK4 is used throughout so that runs are bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import qops
from .errors import NumericalError
from .qops import HilbertSpec
from .scheme import Generator

# highest retained motional level must stay below this population for the
# truncation to be trusted
TRUNCATION_THRESHOLD = 1e-6

_HERM_TOL = 1e-10
_TRACE_TOL = 1e-8
_EIG_TOL = 1e-8


@dataclass
class DensityState:
    """Density matrix with its Hilbert-space layout.

    normalized=False marks a conditional, no-detection-propagated state whose
    trace is the survival probability rather than one.
    """

    matrix: np.ndarray
    spec: HilbertSpec
    normalized: bool = True

    def __post_init__(self):
        m = self.matrix
        if m.shape != (self.spec.dim, self.spec.dim):
            raise ValueError(f"state must be {self.spec.dim}x{self.spec.dim}, got {m.shape}")
        scale = max(np.abs(m).max(), 1e-300)
        if np.abs(m - m.conj().T).max() > _HERM_TOL * scale:
            raise ValueError("density matrix is not Hermitian")
        tr = self.trace
        if self.normalized:
            if abs(tr - 1.0) > _TRACE_TOL:
                raise ValueError(f"normalized state must have unit trace, got {tr}")
            if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -_EIG_TOL:
                raise ValueError("density matrix has a significantly negative eigenvalue")
        elif not 0.0 < tr <= 1.0 + _TRACE_TOL:
            raise ValueError(f"unnormalized state must have trace in (0, 1], got {tr}")

    @property
    def trace(self) -> float:
        return np.trace(self.matrix).real

    @classmethod
    def from_ket(cls, ket: np.ndarray, spec: HilbertSpec) -> "DensityState":
        ket = np.asarray(ket, dtype=complex)
        ket = ket / np.linalg.norm(ket)
        return cls(np.outer(ket, ket.conj()), spec)

    def normalize(self) -> "DensityState":
        return DensityState(self.matrix / self.trace, self.spec)


def initial_state(spec: HilbertSpec, internal: str = "gg", n: int = 0) -> DensityState:
    """Product initial state |s1 s2> x |n>; internal="dark" gives |psi-> x |0>."""
    if internal == "dark":
        return DensityState(qops.dark_state_dm(spec), spec)
    return DensityState.from_ket(qops.basis_ket(spec, internal, n), spec)


@dataclass
class TimeSeries:
    """Recorded observables along a propagation.

    For no-detection propagation the trace column is the survival probability
    and fidelity / mean_phonon / top_level_population refer to the normalized
    conditional state.
    """

    times: np.ndarray
    fidelity: np.ndarray
    trace: np.ndarray
    mean_phonon: np.ndarray
    top_level_population: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for name in ("fidelity", "trace", "mean_phonon", "top_level_population"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} length mismatch")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.fidelity < -1e-8) or np.any(self.fidelity > 1.0 + 1e-8):
            raise ValueError("fidelity left [0, 1]")

    @property
    def truncation_violated(self) -> bool:
        return bool(np.any(self.top_level_population > TRUNCATION_THRESHOLD))

    @property
    def error(self) -> np.ndarray:
        return 1.0 - self.fidelity


@dataclass(frozen=True)
class SteadyStateCriteria:
    """Stop when |dF/dt| stays below slope_threshold across a trailing window,
    or at the time cap."""

    slope_threshold: float = 1e-3
    window: float = 1e-3
    t_cap: float = 0.1


@dataclass
class SteadyStateResult:
    state: DensityState
    converged: bool
    series: TimeSeries


def liouvillian_matrix(gen: Generator) -> sp.csr_matrix:
    """Sparse superoperator of the unconditional master equation acting on
    the row-major vectorized density matrix."""
    d = gen.spec.dim
    eye = sp.identity(d, dtype=complex, format="csr")
    h = sp.csr_matrix(gen.hamiltonian)
    lio = -1j * (sp.kron(h, eye) - sp.kron(eye, h.T))
    for rate, op in gen.channels:
        if rate == 0.0:
            continue
        l = sp.csr_matrix(op)
        ldl = (l.conj().T @ l).tocsr()
        lio = lio + rate * (
            sp.kron(l, l.conj()) - 0.5 * (sp.kron(ldl, eye) + sp.kron(eye, ldl.T))
        )
    return lio.tocsr()


def no_detection_matrix(gen: Generator) -> sp.csr_matrix:
    """Linear generator of the unnormalized no-detection evolution: the full
    Liouvillian minus the detected-channel recycling terms xi*c*(L . L^dag)."""
    lio = liouvillian_matrix(gen)
    if gen.xi == 0.0:
        return lio
    for rate, op in gen.detected_channels:
        if rate == 0.0:
            continue
        l = sp.csr_matrix(op)
        lio = lio - gen.xi * rate * sp.kron(l, l.conj())
    return lio.tocsr()


def default_timestep(gen: Generator) -> float:
    """Spec default: dt = 0.02 / (max channel rate + spectral radius of H)."""
    max_rate = max((rate for rate, _ in gen.channels), default=0.0)
    h_radius = float(np.abs(np.linalg.eigvalsh(gen.hamiltonian)).max())
    denom = max_rate + h_radius
    if denom == 0.0:
        return math.inf
    return 0.02 / denom


def _observable_weights(spec: HilbertSpec) -> np.ndarray:
    """Rows w with w . vec(rho) = Tr[M rho] for M in (identity, Bell projector,
    phonon number, top motional level)."""
    d = spec.dim
    number = qops.motion_annihilation(spec).conj().T @ qops.motion_annihilation(spec)
    mats = (
        np.eye(d, dtype=complex),
        qops.bell_minus_projector(spec),
        number,
        qops.top_level_projector(spec),
    )
    return np.stack([m.T.reshape(-1) for m in mats])


def _rk4_step(a: sp.csr_matrix, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = a @ v
    k2 = a @ (v + (0.5 * dt) * k1)
    k3 = a @ (v + (0.5 * dt) * k2)
    k4 = a @ (v + dt * k3)
    return v + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)


def _steps_for(t_max: float, dt: float) -> tuple[int, float]:
    """Number of integration steps and the actual step used to land exactly
    on t_max."""
    if t_max == 0.0:
        return 0, dt
    if not math.isfinite(dt):
        return 1, t_max
    n = max(1, math.ceil(t_max / dt - 1e-9))
    return n, t_max / n


class _Recorder:
    """Accumulates observable rows and turns them into a TimeSeries."""

    def __init__(self, weights: np.ndarray):
        self.weights = weights
        self.times: list[float] = []
        self.rows: list[np.ndarray] = []

    def record(self, t: float, v: np.ndarray) -> np.ndarray:
        obs = (self.weights @ v).real
        if not np.all(np.isfinite(obs)):
            raise NumericalError(f"non-finite state at t={t:.6g} s (step too large?)")
        self.times.append(t)
        self.rows.append(obs)
        return obs

    def series(self) -> TimeSeries:
        data = np.array(self.rows)
        tr = data[:, 0]
        if np.any(tr <= 0):
            raise NumericalError("state trace collapsed to zero")
        return TimeSeries(
            times=np.array(self.times),
            fidelity=np.clip(data[:, 1] / tr, 0.0, None),
            trace=tr,
            mean_phonon=data[:, 2] / tr,
            top_level_population=data[:, 3] / tr,
        )


def _auto_record_every(n_steps: int, target: int = 2000) -> int:
    return max(1, n_steps // target)


def integrate(
    gen: Generator,
    rho0: DensityState,
    t_max: float,
    dt: float | None = None,
    record_every: int | None = None,
) -> TimeSeries:
    """Propagate the unconditional master equation with fixed-step RK4.

    The trace is monitored, never corrected; drift beyond 1e-6 aborts as a
    numerical failure (expected drift is at the rounding level).
    """
    if not rho0.normalized:
        raise ValueError("integrate expects a normalized initial state")
    series, _ = _integrate_raw(liouvillian_matrix(gen), gen.spec, rho0, t_max, dt, record_every, gen)
    if abs(series.trace[-1] - 1.0) > 1e-6:
        raise NumericalError(f"trace drifted to {series.trace[-1]} during integration")
    return series


def _integrate_raw(
    a: sp.csr_matrix,
    spec: HilbertSpec,
    rho0: DensityState,
    t_max: float,
    dt: float | None,
    record_every: int | None,
    gen: Generator,
    monotone_trace: bool = False,
) -> tuple[TimeSeries, np.ndarray]:
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    if dt is None:
        dt = default_timestep(gen)
    elif dt <= 0:
        raise ValueError("dt must be > 0")
    n_steps, dt = _steps_for(t_max, dt)
    if record_every is None:
        record_every = _auto_record_every(n_steps)
    rec = _Recorder(_observable_weights(spec))
    v = rho0.matrix.reshape(-1).astype(complex)
    prev_trace = rec.record(0.0, v)[0]
    for k in range(1, n_steps + 1):
        v = _rk4_step(a, v, dt)
        if k % record_every == 0 or k == n_steps:
            obs = rec.record(k * dt, v)
            if monotone_trace and obs[0] > prev_trace + 1e-10:
                raise NumericalError(
                    f"no-detection trace increased from {prev_trace} to {obs[0]}"
                )
            prev_trace = obs[0]
    return rec.series(), v


def propagate_state(
    gen: Generator,
    rho0: DensityState,
    t_max: float,
    dt: float | None = None,
) -> DensityState:
    """Final state of an unconditional propagation, without hermitizing or
    renormalizing, so drift stays measurable."""
    _, v = _integrate_raw(
        liouvillian_matrix(gen), gen.spec, rho0, t_max, dt, None, gen
    )
    return DensityState(v.reshape(gen.spec.dim, gen.spec.dim), gen.spec)


def propagate_no_detection(
    gen: Generator,
    rho0: DensityState,
    t_max: float,
    dt: float | None = None,
    record_every: int | None = None,
) -> TimeSeries:
    """Propagate the linear no-detection generator from a normalized state.

    The returned trace column is the survival probability (no detection up to
    t); fidelity is that of the normalized conditional state.
    """
    if not rho0.normalized:
        raise ValueError("no-detection propagation starts from a normalized state")
    series, _ = _integrate_raw(
        no_detection_matrix(gen), gen.spec, rho0, t_max, dt, record_every, gen,
        monotone_trace=True,
    )
    return series


def steady_state(
    gen: Generator,
    rho0: DensityState,
    criteria: SteadyStateCriteria | None = None,
    dt: float | None = None,
    record_every: int | None = None,
) -> SteadyStateResult:
    """Integrate until the fidelity slope stays below threshold over the
    trailing window, or until the time cap. Hitting the cap is flagged, not
    an error."""
    crit = criteria or SteadyStateCriteria()
    if dt is None:
        dt = default_timestep(gen)
    n_steps, dt_eff = _steps_for(crit.t_cap, dt)
    if record_every is None:
        # aim for ~8 slope samples per window
        record_every = max(1, int(crit.window / (8.0 * dt_eff))) if n_steps else 1
    a = liouvillian_matrix(gen)
    rec = _Recorder(_observable_weights(gen.spec))
    v = rho0.matrix.reshape(-1).astype(complex)
    rec.record(0.0, v)
    converged = False
    for k in range(1, n_steps + 1):
        v = _rk4_step(a, v, dt_eff)
        if k % record_every == 0 or k == n_steps:
            rec.record(k * dt_eff, v)
            if _slope_converged(rec, crit):
                converged = True
                break
    series = rec.series()
    rho = v.reshape(gen.spec.dim, gen.spec.dim)
    rho = 0.5 * (rho + rho.conj().T)  # shed rounding-level asymmetry
    state = DensityState(rho / np.trace(rho).real, gen.spec)
    return SteadyStateResult(state=state, converged=converged, series=series)


def _slope_converged(rec: _Recorder, crit: SteadyStateCriteria) -> bool:
    times = rec.times
    if times[-1] < crit.window:
        return False
    t_lo = times[-1] - crit.window
    fids = [row[1] / row[0] for row in rec.rows]
    idx = [i for i, t in enumerate(times) if t >= t_lo - 1e-15]
    if len(idx) < 3:
        return False
    for i, j in zip(idx[:-1], idx[1:]):
        slope = abs(fids[j] - fids[i]) / (times[j] - times[i])
        if slope > crit.slope_threshold:
            return False
    return True


def steady_state_nullspace(gen: Generator) -> DensityState:
    """Direct steady state from the null space of the dense vectorized
    Liouvillian. Only intended for small truncations (testing oracle)."""
    d = gen.spec.dim
    if d > 40:
        raise ValueError(f"dense null-space solve limited to dim <= 40, got {d}")
    lio = liouvillian_matrix(gen).toarray()
    _, s, vh = np.linalg.svd(lio)
    if s[-2] < 1e-10 * max(s[0], 1.0):
        raise ValueError("steady state is not unique (degenerate null space)")
    rho = vh[-1].conj().reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise NumericalError("null-space vector is traceless")
    return DensityState(rho / tr, gen.spec)

"""Quantum-jump unraveling of the detection-conditioned master equation.

A trajectory alternates smooth propagation of the unnormalized no-detection
state with instantaneous detected jumps. Jump times are sampled by the
waiting-time method: the state's trace is the survival probability, and a
jump fires when it crosses a uniform draw, which is exact in distribution
for the underlying point process. The undetected fraction (1 - xi) of each
monitored channel stays inside the smooth evolution.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .evolve import (
    DensityState,
    TimeSeries,
    _observable_weights,
    _Recorder,
    _rk4_step,
    _steps_for,
    default_timestep,
    no_detection_matrix,
    propagate_no_detection,
)
from .scheme import Generator


@dataclass(frozen=True)
class JumpEvent:
    """A registered photodetection: when, and which channel fired."""

    time: float
    channel: object  # ion index 1|2, or "sym"/"antisym" under that unraveling


@dataclass
class TrajectoryRecord:
    series: TimeSeries
    events: list[JumpEvent]
    seed: int


@dataclass
class EnsembleStats:
    times: np.ndarray
    mean_fidelity: np.ndarray
    stderr_fidelity: np.ndarray
    n_trajectories: int


class _JumpChannels:
    """Detected-channel data needed at a jump: operators, rates, labels, and
    the weight vectors giving Tr[L^dag L rho] as a dot product."""

    def __init__(self, gen: Generator):
        self.ops = [sp.csr_matrix(op) for _, op in gen.detected_channels]
        self.rates = np.array([rate for rate, _ in gen.detected_channels])
        self.labels = list(gen.detected_labels)
        self.weights = np.stack(
            [(op.conj().T @ op).toarray().T.reshape(-1) for op in self.ops]
        )
        self.xi = gen.xi

    def intensities(self, v: np.ndarray) -> np.ndarray:
        """Per-channel detection rates xi * c * Tr[L^dag L rho] for vec state v."""
        raw = (self.weights @ v).real
        return self.xi * self.rates * np.clip(raw, 0.0, None)

    def apply(self, k: int, v: np.ndarray, dim: int) -> np.ndarray:
        """Normalized post-jump state for channel k, as a vec."""
        rho = v.reshape(dim, dim)
        post = self.ops[k] @ rho @ self.ops[k].conj().T
        post = np.asarray(post)
        tr = np.trace(post).real
        if tr <= 0.0:
            raise NumericalError("post-jump state has zero norm")
        return (post / tr).reshape(-1)


def run_trajectory(
    gen: Generator,
    rho0: DensityState,
    t_max: float,
    dt: float | None = None,
    seed: int = 0,
    record_every: int | None = None,
) -> TrajectoryRecord:
    """Single conditional trajectory with seeded, reproducible noise.

    Records the conditional fidelity on a fixed grid plus every detection
    event. With xi = 0 the detection rate vanishes and the trajectory
    reproduces the unconditional master equation.
    """
    if not gen.detected:
        raise ValueError("trajectory unraveling needs a generator with detected channels")
    if not rho0.normalized:
        raise ValueError("trajectories start from a normalized state")
    if dt is None:
        dt = default_timestep(gen)
    n_steps, dt = _steps_for(t_max, dt)
    if record_every is None:
        record_every = max(1, n_steps // 2000)
    a = no_detection_matrix(gen)
    channels = _JumpChannels(gen)
    dim = gen.spec.dim
    tr_idx = np.arange(dim) * dim + np.arange(dim)

    rng = np.random.default_rng(seed)
    rec = _Recorder(_observable_weights(gen.spec))
    v = rho0.matrix.reshape(-1).astype(complex)
    rec.record(0.0, v)
    events: list[JumpEvent] = []
    u = rng.random()

    for k in range(1, n_steps + 1):
        t_start = (k - 1) * dt
        v, u = _advance_step(a, v, dt, t_start, u, rng, channels, dim, tr_idx, events)
        if k % record_every == 0 or k == n_steps:
            rec.record(k * dt, v)
    return TrajectoryRecord(series=rec.series(), events=events, seed=seed)


def _advance_step(a, v, dt, t_start, u, rng, channels, dim, tr_idx, events):
    """Advance exactly one grid step, firing any jumps inside it."""
    remaining = dt
    t = t_start
    while True:
        trial = _rk4_step(a, v, remaining)
        tr_trial = trial[tr_idx].sum().real
        if tr_trial > u:
            return trial, u
        tr_cur = v[tr_idx].sum().real
        if tr_trial <= 0.0 or tr_cur <= 0.0:
            raise NumericalError(f"survival collapsed near t={t:.6g} s")
        # log-linear crossing time inside the step; exact for plain decay
        frac = math.log(tr_cur / u) / math.log(tr_cur / tr_trial)
        dt_star = min(max(frac, 0.0), 1.0) * remaining
        v_star = _rk4_step(a, v, dt_star) if dt_star > 0.0 else v
        rates = channels.intensities(v_star)
        total = rates.sum()
        if total <= 0.0:
            raise NumericalError(f"zero total jump rate at sampled jump time t={t + dt_star:.6g} s")
        pick = rng.choice(len(rates), p=rates / total)
        v = channels.apply(pick, v_star, dim)
        events.append(JumpEvent(time=t + dt_star, channel=channels.labels[pick]))
        u = rng.random()
        t += dt_star
        remaining -= dt_star
        if remaining <= 0.0:
            return v, u


_WORKER_ARGS: dict = {}


def _init_worker(gen, rho0, t_max, dt, record_every):
    _WORKER_ARGS.update(gen=gen, rho0=rho0, t_max=t_max, dt=dt, record_every=record_every)


def _worker_run(seed: int) -> TrajectoryRecord:
    w = _WORKER_ARGS
    return run_trajectory(
        w["gen"], w["rho0"], w["t_max"], dt=w["dt"], seed=seed, record_every=w["record_every"]
    )


def run_ensemble(
    gen: Generator,
    rho0: DensityState,
    t_max: float,
    n_trajectories: int,
    dt: float | None = None,
    seed: int = 0,
    record_every: int | None = None,
    workers: int = 1,
) -> list[TrajectoryRecord]:
    """Independent trajectories with seeds seed, seed+1, ... so the ensemble
    is reproducible regardless of worker count."""
    seeds = [seed + k for k in range(n_trajectories)]
    if workers <= 1:
        return [
            run_trajectory(gen, rho0, t_max, dt=dt, seed=s, record_every=record_every)
            for s in seeds
        ]
    with ProcessPoolExecutor(
        max_workers=workers,
        initializer=_init_worker,
        initargs=(gen, rho0, t_max, dt, record_every),
    ) as pool:
        return list(pool.map(_worker_run, seeds, chunksize=max(1, n_trajectories // (4 * workers))))


def ensemble_average(records: list[TrajectoryRecord]) -> EnsembleStats:
    """Pointwise mean conditional fidelity and its standard error."""
    if len(records) < 2:
        raise ValueError("ensemble average needs at least 2 records")
    times = records[0].series.times
    for r in records[1:]:
        if not np.array_equal(r.series.times, times):
            raise ValueError("trajectory records are not on a common time grid")
    fid = np.stack([r.series.fidelity for r in records])
    return EnsembleStats(
        times=times,
        mean_fidelity=fid.mean(axis=0),
        stderr_fidelity=fid.std(axis=0, ddof=1) / math.sqrt(len(records)),
        n_trajectories=len(records),
    )


def plateau_estimate(
    records: list[TrajectoryRecord],
    min_age: float,
    t_start: float = 0.0,
) -> tuple[float, float]:
    """Trajectory-sampled conditional fidelity plateau.

    Averages the recorded fidelity at grid points that are at least min_age
    past the last detection (and past t_start), i.e. at points where the
    conditional state has re-converged. Returns (mean, standard error) over
    the per-trajectory means. This is the sampled cross-check for the
    deterministic conditional_after_detection asymptote.
    """
    per_traj = []
    for rec in records:
        times = rec.series.times
        last_event = np.zeros_like(times)
        for ev in rec.events:
            last_event[times >= ev.time] = ev.time
        mask = (times - last_event >= min_age) & (times >= t_start)
        if np.any(mask):
            per_traj.append(rec.series.fidelity[mask].mean())
    if len(per_traj) < 2:
        raise ValueError("not enough qualifying samples for a plateau estimate")
    vals = np.array(per_traj)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


@dataclass
class ConditionalResult:
    """No-detection statistics after a detection at steady state: the series
    carries the conditional fidelity, and its trace column is the survival
    probability."""

    series: TimeSeries
    post_jump: DensityState


def post_jump_state(gen: Generator, rho: np.ndarray) -> DensityState:
    """Rate-weighted mixture of the states right after a detected jump."""
    mix = np.zeros_like(rho, dtype=complex)
    for rate, op in gen.detected_channels:
        mix += rate * (op @ rho @ op.conj().T)
    tr = np.trace(mix).real
    if tr <= 1e-300:
        raise ValueError("post-jump state undefined: zero detection rate on this state")
    return DensityState(mix / tr, gen.spec)


def conditional_after_detection(
    gen: Generator,
    rho_ss: DensityState,
    t_window: float,
    dt: float | None = None,
    record_every: int | None = None,
) -> ConditionalResult:
    """Deterministic post-detection statistics: propagate the no-detection
    generator from the steady-state post-jump mixture."""
    post = post_jump_state(gen, rho_ss.matrix)
    series = propagate_no_detection(gen, post, t_window, dt=dt, record_every=record_every)
    return ConditionalResult(series=series, post_jump=post)


def unraveling_variant(gen: Generator, variant: str) -> Generator:
    """Swap the detected per-ion channels for their symmetric/antisymmetric
    combinations (J1 +- J2)/sqrt(2), which leaves the channel sum, and hence
    the unconditional generator, unchanged."""
    if variant == "per_ion":
        return gen
    if variant != "sym_antisym":
        raise ValueError(f"unknown unraveling variant {variant!r}")
    if gen.spec.internal_levels != 2:
        raise ValueError("symmetric/antisymmetric unraveling applies to the eliminated model")
    if len(gen.detected) != 2:
        raise ValueError("variant needs exactly two detected channels")
    (r1, op1), (r2, op2) = gen.detected_channels
    if r1 != r2:
        raise ValueError("variant needs equal detected-channel rates")
    sym = (op1 + op2) / np.sqrt(2.0)
    antisym = (op1 - op2) / np.sqrt(2.0)
    channels = list(gen.channels)
    channels[gen.detected[0]] = (r1, sym)
    channels[gen.detected[1]] = (r2, antisym)
    return Generator(
        spec=gen.spec,
        hamiltonian=gen.hamiltonian,
        channels=tuple(channels),
        detected=gen.detected,
        detected_labels=("sym", "antisym"),
        xi=gen.xi,
    )

"""Physical parameters and Liouvillian generators for the two-ion scheme.

Two generators are provided: the full three-internal-level model with the
short-lived temporary level, and the two-level model obtained by adiabatic
elimination of that level. Both expose the same Generator structure: a
Hamiltonian plus a list of (rate, jump operator) dissipation channels, with
a subset of channels marked as photodetected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qops
from .qops import HilbertSpec

HERMITICITY_TOL = 1e-12


@dataclass(frozen=True)
class SchemeParams:
    """All rates and couplings of the scheme, in angular units (rad/s, 1/s).

    omega     carrier Rabi frequency between g and e
    omega_r   red-sideband Rabi frequency on the g-e transition
    omega_rp  red-sideband Rabi frequency on the g-t transition
    gamma_s   metastable e -> g decay rate
    gamma_sp  temporary level t -> g decay rate
    h_r       anomalous heating rate, phonons gained per second
    xi        photodetection efficiency for temporary-level emissions
    """

    omega: float = 0.0
    omega_r: float = 0.0
    omega_rp: float = 0.0
    gamma_s: float = 0.0
    gamma_sp: float = 0.0
    h_r: float = 0.0
    xi: float = 0.0

    def __post_init__(self):
        for name in ("omega", "omega_r", "omega_rp", "gamma_s", "gamma_sp", "h_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.xi <= 1.0:
            raise ValueError(f"xi must lie in [0, 1], got {self.xi}")

    @property
    def gamma_eff(self) -> float:
        """Effective jump rate 4*omega_rp^2/gamma_sp of the eliminated model."""
        if self.omega_rp == 0.0:
            return 0.0
        if self.gamma_sp <= 0.0:
            raise ValueError("gamma_eff undefined: omega_rp > 0 with gamma_sp = 0")
        return 4.0 * self.omega_rp**2 / self.gamma_sp

    @property
    def elimination_valid(self) -> bool:
        """Whether the temporary level decays fast enough to eliminate."""
        return self.gamma_sp >= 10.0 * self.omega_rp


@dataclass(frozen=True)
class Generator:
    """Hamiltonian part plus Lindblad dissipation channels.

    The coherent part of the master equation is -i[H, rho]; each channel
    (c, L) contributes c * (L rho L^dag - {L^dag L, rho}/2). detected lists
    the channel indices monitored by the photodetector with efficiency xi;
    detected_labels names them for event records.
    """

    spec: HilbertSpec
    hamiltonian: np.ndarray
    channels: tuple[tuple[float, np.ndarray], ...]
    detected: tuple[int, ...] = ()
    detected_labels: tuple[object, ...] = ()
    xi: float = 0.0

    def __post_init__(self):
        h = self.hamiltonian
        scale = max(np.abs(h).max(), 1.0)
        if np.abs(h - h.conj().T).max() > HERMITICITY_TOL * scale:
            raise ValueError("hamiltonian is not Hermitian")
        for rate, _ in self.channels:
            if rate < 0:
                raise ValueError(f"channel rate must be >= 0, got {rate}")
        if any(i not in range(len(self.channels)) for i in self.detected):
            raise ValueError("detected channel index out of range")
        if len(self.detected_labels) != len(self.detected):
            raise ValueError("one label per detected channel required")

    @property
    def detected_channels(self) -> tuple[tuple[float, np.ndarray], ...]:
        return tuple(self.channels[i] for i in self.detected)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Dense Liouvillian action L(rho). Used by tests and small states;
        time propagation uses the sparse superoperator in evolve."""
        h = self.hamiltonian
        out = -1j * (h @ rho - rho @ h)
        for rate, op in self.channels:
            if rate == 0.0:
                continue
            od = op.conj().T
            odo = od @ op
            out += rate * (op @ rho @ od - 0.5 * (odo @ rho + rho @ odo))
        return out


def build_full_generator(p: SchemeParams, spec: HilbertSpec) -> Generator:
    """Three-level generator with the temporary level retained.

    H = omega (J+ + J-) + omega_r (J- a^dag + J+ a)
        + omega_rp ((b1 + b2) a^dag + (b1^dag + b2^dag) a)
    Channels: gamma_sp on each b_i (detected), gamma_s on each sigma-_i,
    and heating h_r on both a and a^dag.
    """
    if spec.internal_levels != 3:
        raise ValueError("full model needs internal_levels = 3")
    a = qops.motion_annihilation(spec)
    ad = a.conj().T
    jm = qops.j_minus(spec)
    jp = qops.j_plus(spec)
    b1 = qops.embed_ion_op(spec, 1, "b")
    b2 = qops.embed_ion_op(spec, 2, "b")
    bsum = b1 + b2
    h = (
        p.omega * (jp + jm)
        + p.omega_r * (jm @ ad + jp @ a)
        + p.omega_rp * (bsum @ ad + bsum.conj().T @ a)
    )
    channels = (
        (p.gamma_sp, b1),
        (p.gamma_sp, b2),
        (p.gamma_s, qops.embed_ion_op(spec, 1, "sigma_minus")),
        (p.gamma_s, qops.embed_ion_op(spec, 2, "sigma_minus")),
        (p.h_r, a),
        (p.h_r, ad),
    )
    return Generator(
        spec=spec,
        hamiltonian=h,
        channels=channels,
        detected=(0, 1),
        detected_labels=(1, 2),
        xi=p.xi,
    )


def build_eliminated_generator(p: SchemeParams, spec: HilbertSpec) -> Generator:
    """Two-level generator after adiabatic elimination of the temporary level.

    The g-t sideband and temporary-level decay collapse into the effective
    jump operators |g><g|_i a at rate gamma_eff = 4 omega_rp^2 / gamma_sp.
    """
    if spec.internal_levels != 2:
        raise ValueError("eliminated model needs internal_levels = 2")
    a = qops.motion_annihilation(spec)
    ad = a.conj().T
    jm = qops.j_minus(spec)
    jp = qops.j_plus(spec)
    h = p.omega * (jp + jm) + p.omega_r * (jm @ ad + jp @ a)
    channels = (
        (p.gamma_eff, qops.ground_sideband_jump(spec, 1)),
        (p.gamma_eff, qops.ground_sideband_jump(spec, 2)),
        (p.gamma_s, qops.embed_ion_op(spec, 1, "sigma_minus")),
        (p.gamma_s, qops.embed_ion_op(spec, 2, "sigma_minus")),
        (p.h_r, a),
        (p.h_r, ad),
    )
    return Generator(
        spec=spec,
        hamiltonian=h,
        channels=channels,
        detected=(0, 1),
        detected_labels=(1, 2),
        xi=p.xi,
    )


def detection_rate(gen: Generator, rho: np.ndarray) -> np.ndarray:
    """Expected photodetection rate per detected channel, xi * c * Tr[L^dag L rho]."""
    rates = np.empty(len(gen.detected))
    for k, (rate, op) in enumerate(gen.detected_channels):
        rates[k] = gen.xi * rate * np.trace(op.conj().T @ op @ rho).real
    return rates

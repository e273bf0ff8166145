"""Composite Hilbert space construction: (ion 1) x (ion 2) x (motional mode).

Internal level ordering is g=0, e=1 and, in the three-level model, t=2.
All composite operators use the tensor order ion1 x ion2 x motion; every
other module and file format relies on that ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

G, E, T = 0, 1, 2

_ION_OPS = ("sigma_minus", "sigma_plus", "proj_g", "b")


@dataclass(frozen=True)
class HilbertSpec:
    """Dimensions of the composite space.

    internal_levels is 2 for the eliminated model (g, e) and 3 for the full
    model (g, e, t). n_motional is the truncation of the shared motional mode.
    """

    internal_levels: int = 2
    n_motional: int = 20

    def __post_init__(self):
        if self.internal_levels not in (2, 3):
            raise ValueError(f"internal_levels must be 2 or 3, got {self.internal_levels}")
        if self.n_motional < 2:
            raise ValueError(f"n_motional must be >= 2, got {self.n_motional}")

    @property
    def dim(self) -> int:
        return self.internal_levels**2 * self.n_motional


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, first factor varying slowest."""
    return np.kron(a, b)


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex)


def annihilation(n: int) -> np.ndarray:
    """Motional-mode annihilation operator on an n-level truncation."""
    if n < 2:
        raise ValueError(f"annihilation needs n >= 2, got {n}")
    a = np.zeros((n, n), dtype=complex)
    for k in range(1, n):
        a[k - 1, k] = np.sqrt(k)
    return a


def _single_ion_op(levels: int, name: str) -> np.ndarray:
    op = np.zeros((levels, levels), dtype=complex)
    if name == "sigma_minus":
        op[G, E] = 1.0
    elif name == "sigma_plus":
        op[E, G] = 1.0
    elif name == "proj_g":
        op[G, G] = 1.0
    elif name == "b":
        if levels < 3:
            raise ValueError("operator 'b' needs the three-level model")
        op[G, T] = 1.0
    else:
        raise ValueError(f"unknown ion operator {name!r}, expected one of {_ION_OPS}")
    return op


def embed_ion_op(spec: HilbertSpec, ion: int, name: str) -> np.ndarray:
    """Single-ion operator tensored with identities on the other factors.

    ion is 1 or 2; name is one of sigma_minus, sigma_plus, proj_g, b.
    """
    if ion not in (1, 2):
        raise ValueError(f"ion must be 1 or 2, got {ion}")
    op = _single_ion_op(spec.internal_levels, name)
    one = identity(spec.internal_levels)
    motion = identity(spec.n_motional)
    if ion == 1:
        return kron(kron(op, one), motion)
    return kron(kron(one, op), motion)


def embed_motion_op(spec: HilbertSpec, op: np.ndarray) -> np.ndarray:
    """Motional-mode operator tensored with identities on both ions."""
    if op.shape != (spec.n_motional, spec.n_motional):
        raise ValueError(f"motional operator must be {spec.n_motional}x{spec.n_motional}")
    one = identity(spec.internal_levels)
    return kron(kron(one, one), op)


def motion_annihilation(spec: HilbertSpec) -> np.ndarray:
    return embed_motion_op(spec, annihilation(spec.n_motional))


def j_minus(spec: HilbertSpec) -> np.ndarray:
    """Collective lowering operator sigma1- + sigma2-."""
    return embed_ion_op(spec, 1, "sigma_minus") + embed_ion_op(spec, 2, "sigma_minus")


def j_plus(spec: HilbertSpec) -> np.ndarray:
    return embed_ion_op(spec, 1, "sigma_plus") + embed_ion_op(spec, 2, "sigma_plus")


def ground_sideband_jump(spec: HilbertSpec, ion: int) -> np.ndarray:
    """Effective jump operator |g><g|_ion a of the eliminated model."""
    return embed_ion_op(spec, ion, "proj_g") @ motion_annihilation(spec)


_LEVEL_INDEX = {"g": G, "e": E, "t": T}


def basis_ket(spec: HilbertSpec, internal: str, n: int = 0) -> np.ndarray:
    """Product basis vector |s1 s2> x |n>, e.g. basis_ket(spec, "ge", 0)."""
    if len(internal) != 2 or any(c not in _LEVEL_INDEX for c in internal):
        raise ValueError(f"internal labels must be two of g/e/t, got {internal!r}")
    i1, i2 = (_LEVEL_INDEX[c] for c in internal)
    if max(i1, i2) >= spec.internal_levels:
        raise ValueError(f"level {internal!r} outside a {spec.internal_levels}-level model")
    if not 0 <= n < spec.n_motional:
        raise ValueError(f"motional index {n} outside truncation {spec.n_motional}")
    ket = np.zeros(spec.dim, dtype=complex)
    ket[(i1 * spec.internal_levels + i2) * spec.n_motional + n] = 1.0
    return ket


def bell_minus_ket(spec: HilbertSpec, n: int = 0) -> np.ndarray:
    """Antisymmetric Bell state (|ge> - |eg>)/sqrt(2) with motional level n."""
    return (basis_ket(spec, "ge", n) - basis_ket(spec, "eg", n)) / np.sqrt(2.0)


def bell_minus_projector(spec: HilbertSpec) -> np.ndarray:
    """Projector |psi-><psi-| x I_motion used for the fidelity observable."""
    proj = np.zeros((spec.dim, spec.dim), dtype=complex)
    for n in range(spec.n_motional):
        ket = bell_minus_ket(spec, n)
        proj += np.outer(ket, ket.conj())
    return proj


def top_level_projector(spec: HilbertSpec) -> np.ndarray:
    """Population projector onto the highest retained motional level."""
    p = np.zeros((spec.n_motional, spec.n_motional), dtype=complex)
    p[spec.n_motional - 1, spec.n_motional - 1] = 1.0
    return embed_motion_op(spec, p)


def dark_state_dm(spec: HilbertSpec) -> np.ndarray:
    """Density matrix of the dark state |psi-> x |0>."""
    ket = bell_minus_ket(spec, 0)
    return np.outer(ket, ket.conj())

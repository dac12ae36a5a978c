"""Effective spin Hamiltonian of the lowest Stark doublet and its spectrum.

H/h = I.A.S + I.Q.I + mu_B B.g_e.S - mu_N g_n B.I

stored in MHz with fields in mT, in the optical frame (D1, D2, b).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import MU_B_MHZ_PER_MT, MU_N_MHZ_PER_MT
from .dataset import SiteTensors
from .operators import basis_labels, build_spin_operators

_OPS = build_spin_operators()
_S16, _I16 = _OPS.product_space()
_BASIS_LABELS = basis_labels()


def field_coupling_operators(site: SiteTensors) -> np.ndarray:
    """The three derivative operators dH/dB_k, shape (3, 16, 16), in MHz/mT.

    These are exact (the Hamiltonian is linear in B):
    dH/dB_k = mu_B sum_b g_e[k, b] S_b - mu_N g_n I_k.
    """
    D = np.zeros((3, 16, 16), dtype=complex)
    for k in range(3):
        for b in range(3):
            D[k] += MU_B_MHZ_PER_MT * site.g_e[k, b] * _S16[b]
        D[k] -= MU_N_MHZ_PER_MT * site.g_n * _I16[k]
    return D


def zero_field_hamiltonian(site: SiteTensors) -> np.ndarray:
    """Hyperfine + quadrupole part, 16x16 complex, MHz."""
    H = np.zeros((16, 16), dtype=complex)
    for a in range(3):
        for b in range(3):
            H += site.A[a, b] * (_I16[a] @ _S16[b])
            H += site.Q[a, b] * (_I16[a] @ _I16[b])
    return H


def build_hamiltonian(site: SiteTensors, B) -> np.ndarray:
    """Assemble the 16x16 Hamiltonian (MHz) at field B (mT, optical frame)."""
    B = np.asarray(B, dtype=float)
    if B.shape != (3,) or not np.all(np.isfinite(B)):
        raise ValueError("B must be a finite 3-vector in mT")
    H = zero_field_hamiltonian(site)
    D = field_coupling_operators(site)
    H = H + np.tensordot(B, D, axes=1)
    return H


@dataclass(frozen=True)
class HyperfineSpectrum:
    """Sorted eigensystem of the spin Hamiltonian at one field point."""

    energies: np.ndarray                 # (16,) MHz, ascending
    eigenvectors: np.ndarray             # (16, 16), column n is state |n>
    labels: list = field(default_factory=list)   # dominant (S_z, I_z) per state
    field: np.ndarray = None             # (3,) mT


def _dominant_labels(V: np.ndarray) -> list[tuple[float, float]]:
    labels = []
    for n in range(V.shape[1]):
        amp = np.abs(V[:, n])
        best = amp.max()
        # ties broken toward larger I_z, then S_z = +1/2; the basis is already
        # ordered that way, so the first index within tolerance wins
        cand = np.flatnonzero(amp >= best - 1e-12)
        labels.append(_BASIS_LABELS[int(cand[0])])
    return labels


def diagonalize(H: np.ndarray, B) -> HyperfineSpectrum:
    """Diagonalize a Hermitian spin Hamiltonian; energies ascending."""
    H = np.asarray(H)
    if np.abs(H - H.conj().T).max() > 1e-9:
        raise ValueError("Hamiltonian is not Hermitian within tolerance")
    try:
        E, V = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed at B = {np.asarray(B)}") from exc
    return HyperfineSpectrum(
        energies=E, eigenvectors=V, labels=_dominant_labels(V),
        field=np.asarray(B, dtype=float),
    )


def spectrum_at(site: SiteTensors, B) -> HyperfineSpectrum:
    """Convenience wrapper: build and diagonalize in one call."""
    return diagonalize(build_hamiltonian(site, B), B)


def transition_frequency(spec: HyperfineSpectrum, i: int, j: int) -> float:
    """Transition frequency E_j - E_i in MHz for level indices 0 <= i < j <= 15."""
    if not (isinstance(i, (int, np.integer)) and isinstance(j, (int, np.integer))):
        raise TypeError("level indices must be integers")
    if not (0 <= i < j <= 15):
        raise ValueError(f"need 0 <= i < j <= 15, got ({i}, {j})")
    return float(spec.energies[j] - spec.energies[i])


@dataclass(frozen=True)
class FieldSpherical:
    """Magnetic field in spherical form: magnitude (mT), theta and phi (deg).

    theta is measured from the b axis, phi from D1 toward D2 in the D1-D2
    plane: B = B (sin t cos p, sin t sin p, cos t).
    """

    B: float
    theta: float
    phi: float
    degenerate: bool = False

    def __post_init__(self):
        if self.B < 0:
            raise ValueError("magnitude must be non-negative")


def spherical_to_cartesian(f: FieldSpherical) -> np.ndarray:
    t = np.radians(f.theta)
    p = np.radians(f.phi)
    return f.B * np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])


def cartesian_to_spherical(v) -> FieldSpherical:
    v = np.asarray(v, dtype=float)
    B = float(np.linalg.norm(v))
    if B == 0.0:
        return FieldSpherical(B=0.0, theta=0.0, phi=0.0, degenerate=True)
    theta = float(np.degrees(np.arccos(np.clip(v[2] / B, -1.0, 1.0))))
    phi = float(np.degrees(np.arctan2(v[1], v[0])))
    if phi <= -180.0:
        phi += 360.0
    return FieldSpherical(B=B, theta=theta, phi=phi)

"""Angular-momentum operators for the S = 1/2 (x) I = 7/2 product space.

Basis convention: |S_z> (x) |I_z> with S_z in {+1/2, -1/2} outer and I_z
descending 7/2 ... -7/2 inner, giving basis index k = 8*(1/2 - S_z) + (7/2 - I_z).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def angular_momentum(j: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (Jx, Jy, Jz) for spin j in the |j, m> basis with m descending."""
    dim = int(round(2 * j + 1))
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    jp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        mm = m[k]
        jp[k - 1, k] = np.sqrt(j * (j + 1) - mm * (mm + 1))
    jm = jp.conj().T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    return jx, jy, jz


@dataclass(frozen=True)
class SpinOperators:
    """Spin operators for the electron (S = 1/2) and nucleus (I = 7/2)."""

    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray
    Ix: np.ndarray
    Iy: np.ndarray
    Iz: np.ndarray

    @property
    def electron(self) -> tuple[np.ndarray, ...]:
        return (self.Sx, self.Sy, self.Sz)

    @property
    def nuclear(self) -> tuple[np.ndarray, ...]:
        return (self.Ix, self.Iy, self.Iz)

    def product_space(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Lift both sets into the 16-dimensional product space."""
        eye_i = np.eye(self.Ix.shape[0])
        eye_s = np.eye(2)
        S16 = [np.kron(op, eye_i) for op in self.electron]
        I16 = [np.kron(eye_s, op) for op in self.nuclear]
        return S16, I16


def build_spin_operators() -> SpinOperators:
    """Ladder-constructed operators for S = 1/2 and I = 7/2."""
    sx, sy, sz = angular_momentum(0.5)
    ix, iy, iz = angular_momentum(3.5)
    return SpinOperators(Sx=sx, Sy=sy, Sz=sz, Ix=ix, Iy=iy, Iz=iz)


# basis labels (S_z, I_z) in index order, shared by the labelling code
def basis_labels() -> list[tuple[float, float]]:
    labels = []
    for sz in (0.5, -0.5):
        for iz in np.arange(3.5, -4.0, -1.0):
            labels.append((sz, float(iz)))
    return labels

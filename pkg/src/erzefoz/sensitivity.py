"""Field-derivatives of transition frequencies: gradient S1 and curvature S2.

Conventions: S1 in GHz/mT, S2 in GHz/mT^2, defined through the expansion

    nu(B + d) - nu(B) = S1 . d + d^T S2 d + O(d^3)

so S2 is half the Hessian of the transition frequency.  The Newton update for
zeroing S1 is then B -> B - (1/2) S2^{-1} S1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SiteTensors
from .hamiltonian import build_hamiltonian, field_coupling_operators, HyperfineSpectrum


class DegeneratePointError(RuntimeError):
    """Raised when a transition's derivatives are undefined at a degeneracy."""


class TrackingLostError(RuntimeError):
    """Raised when eigenvector-overlap level tracking becomes ambiguous."""


def magnetic_moment_operators(site: SiteTensors) -> np.ndarray:
    """Exact derivative operators dH/dB_k, shape (3, 16, 16), MHz/mT."""
    return field_coupling_operators(site)


@dataclass(frozen=True)
class SensitivityProfile:
    transition: tuple          # (i, j), energy-sorted indices
    S1: np.ndarray             # (3,) GHz/mT
    S2: np.ndarray             # (3, 3) GHz/mT^2
    s2_max: float              # max |eigenvalue(S2)|, GHz/mT^2
    method: str = "perturbative"   # or "finite_difference"


def _perturbative(E, V, D, i, j):
    """S1 (Hellmann-Feynman) and S2 (second-order sums) for tracked levels i, j."""
    # rows <n| D_k |m> for the two involved levels only
    S1 = np.empty(3)
    S2 = np.zeros((3, 3))
    for n, sign in ((j, 1.0), (i, -1.0)):
        u = V[:, n]
        rows = np.einsum("i,kij->kj", u.conj(), np.einsum("kij,jm->kim", D, V))
        dE = E[n] - E
        dE[n] = np.inf
        for a in range(3):
            if sign > 0:
                S1[a] = rows[a, j].real
            for b in range(a, 3):
                val = sign * np.sum(2.0 * np.real(rows[a] * rows[b].conj()) / dE)
                S2[a, b] += val
                if b != a:
                    S2[b, a] += val
    for a in range(3):
        u = V[:, i]
        S1[a] -= np.real(u.conj() @ (D[a] @ u))
    # half-Hessian convention, and MHz -> GHz
    return S1 / 1e3, S2 / (2.0 * 1e3)


def _tracked_frequency(site, B, V0, i, j, D=None):
    """Transition frequency at B with levels identified by overlap against V0."""
    H = build_hamiltonian(site, B)
    E, V = np.linalg.eigh(H)
    ov = np.abs(V.conj().T @ V0[:, [i, j]])
    ii = int(np.argmax(ov[:, 0]))
    jj = int(np.argmax(ov[:, 1]))
    if ov[ii, 0] < 0.5 or ov[jj, 1] < 0.5 or ii == jj:
        raise TrackingLostError(f"level tracking ambiguous at B = {B}")
    return E[jj] - E[ii]


def _finite_difference(site, B, V0, i, j, step):
    """Central-difference S1 and S2 with overlap-tracked level identity."""
    B = np.asarray(B, dtype=float)
    h = step
    nu0 = _tracked_frequency(site, B, V0, i, j)
    S1 = np.empty(3)
    hess = np.empty((3, 3))
    plus = np.empty(3)
    minus = np.empty(3)
    for a in range(3):
        ea = np.zeros(3)
        ea[a] = h
        plus[a] = _tracked_frequency(site, B + ea, V0, i, j)
        minus[a] = _tracked_frequency(site, B - ea, V0, i, j)
        S1[a] = (plus[a] - minus[a]) / (2 * h)
        hess[a, a] = (plus[a] + minus[a] - 2 * nu0) / h**2
    for a in range(3):
        for b in range(a + 1, 3):
            ea = np.zeros(3)
            eb = np.zeros(3)
            ea[a] = h
            eb[b] = h
            pp = _tracked_frequency(site, B + ea + eb, V0, i, j)
            mm = _tracked_frequency(site, B - ea - eb, V0, i, j)
            pm = _tracked_frequency(site, B + ea - eb, V0, i, j)
            mp = _tracked_frequency(site, B - ea + eb, V0, i, j)
            hess[a, b] = hess[b, a] = (pp + mm - pm - mp) / (4 * h**2)
    return S1 / 1e3, hess / (2.0 * 1e3)


def sensitivity(site: SiteTensors, B, i: int, j: int,
                gap_threshold: float = 1e-3,
                fd_step: float = 0.01) -> SensitivityProfile:
    """Gradient and curvature of the (i, j) transition frequency at field B.

    Levels are energy-sorted at B.  The perturbative route requires every gap
    from levels i and j to the rest of the spectrum to exceed gap_threshold
    (MHz); otherwise tracked central finite differences (step fd_step, mT)
    are used and flagged in the result.
    """
    if i == j:
        raise ValueError("transition requires two distinct levels")
    if not (0 <= i < j <= 15):
        raise ValueError(f"need 0 <= i < j <= 15, got ({i}, {j})")
    B = np.asarray(B, dtype=float)
    H = build_hamiltonian(site, B)
    E, V = np.linalg.eigh(H)
    D = field_coupling_operators(site)

    gaps_ok = True
    for n in (i, j):
        dE = np.abs(E[n] - E)
        dE[n] = np.inf
        if dE.min() <= gap_threshold:
            gaps_ok = False

    if gaps_ok:
        S1, S2 = _perturbative(E.copy(), V, D, i, j)
        method = "perturbative"
    else:
        try:
            S1, S2 = _finite_difference(site, B, V, i, j, fd_step)
        except TrackingLostError as exc:
            raise DegeneratePointError(
                f"transition ({i}, {j}) at B = {B} is too close to a degeneracy"
            ) from exc
        method = "finite_difference"

    s2_max = float(np.abs(np.linalg.eigvalsh(S2)).max())
    return SensitivityProfile(transition=(i, j), S1=S1, S2=S2,
                              s2_max=s2_max, method=method)


def transition_strength(spec: HyperfineSpectrum, site: SiteTensors,
                        i: int, j: int) -> float:
    """Magnetic-dipole coupling of the (i, j) transition, GHz/T.

    Defined as the matrix element of the field-derivative operator for the
    crystal b axis, |<i| dH/dB_b |j>|, i.e. the transition moment seen by an
    oscillating drive field applied along b.
    """
    if i == j:
        raise ValueError("transition requires two distinct levels")
    D = field_coupling_operators(site)
    V = spec.eigenvectors
    # MHz/mT is numerically GHz/T
    return float(np.abs(V[:, i].conj() @ (D[2] @ V[:, j])))


def electron_zeeman_splitting(site: SiteTensors, B) -> float:
    """Full spectral span E_15 - E_0 at field B, in GHz.

    At fields where the electron Zeeman interaction dominates the hyperfine
    structure this measures the splitting between the two electron-spin
    manifolds.
    """
    H = build_hamiltonian(site, B)
    E = np.linalg.eigvalsh(H)
    return float((E[-1] - E[0]) / 1e3)

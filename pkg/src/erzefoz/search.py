"""Grid-seeded Newton search for ZEFOZ field points, plus T2 estimation,
deduplication and ranking of the converged points.

The search zeroes the transition-frequency gradient S1(B) using the update
B -> B - (1/2) S2^{-1} S1, which with the half-Hessian convention for S2 is
an exact Newton step.  Level identity is maintained across steps by
eigenvector-overlap tracking, so avoided crossings do not silently swap the
transition being followed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import SiteTensors
from .hamiltonian import (FieldSpherical, build_hamiltonian,
                          cartesian_to_spherical, field_coupling_operators,
                          zero_field_hamiltonian)
from .sensitivity import (SensitivityProfile, TrackingLostError, sensitivity,
                          transition_strength)
from .hamiltonian import diagonalize

UNBOUNDED_T2 = math.inf


@dataclass
class T2Model:
    """Converts sensitivities and a field-noise amplitude into a T2 estimate.

    dB_total is the per-component noise amplitude in microtesla (see
    noise.effective_delta_b).  Scalarization choices for the quadratic term:
    worst_case_eig uses the largest |eigenvalue| of S2, isotropic_trace the
    mean |trace|/3, directional averages |S1.d + d^T S2 d| over a fixed set
    of noise orientations.
    """

    dB_total: float                     # microtesla
    scalarization: str = "worst_case_eig"
    T1: float | None = None             # seconds
    extra_dephasing: float = 0.0        # 1/s, added directly to 1/T2


_FIBONACCI_DIRS = None


def _directional_set(n: int = 64) -> np.ndarray:
    global _FIBONACCI_DIRS
    if _FIBONACCI_DIRS is None:
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        theta = np.pi * (1 + 5**0.5) * k
        _FIBONACCI_DIRS = np.stack([np.sin(phi) * np.cos(theta),
                                    np.sin(phi) * np.sin(theta),
                                    np.cos(phi)], axis=1)
    return _FIBONACCI_DIRS


def t2_from_sensitivities(profile: SensitivityProfile, model: T2Model) -> float:
    """Coherence time in seconds from the noise-driven dephasing rate.

    1 / (pi T2) = |S1| (2 dB) + (2 dB)^2 s2_eff, with dB in mT and the rate
    in GHz; an optional population-decay channel adds 1 / (2 T1).
    """
    if model.dB_total <= 0:
        raise ValueError("dB_total must be positive")
    dB = model.dB_total * 1e-3          # mT
    s1 = float(np.linalg.norm(profile.S1))
    if model.scalarization == "worst_case_eig":
        rate = s1 * 2 * dB + 4 * dB**2 * profile.s2_max
    elif model.scalarization == "isotropic_trace":
        rate = s1 * 2 * dB + 4 * dB**2 * abs(float(np.trace(profile.S2))) / 3.0
    elif model.scalarization == "directional":
        d = 2 * dB * _directional_set()
        lin = d @ profile.S1
        quad = np.einsum("na,ab,nb->n", d, profile.S2, d)
        rate = float(np.mean(np.abs(lin + quad)))
    else:
        raise ValueError(f"unknown scalarization {model.scalarization!r}")
    inv_t2 = math.pi * rate * 1e9 + model.extra_dephasing
    if model.T1 is not None:
        inv_t2 += 1.0 / (2.0 * model.T1)
    if inv_t2 <= 0.0:
        return UNBOUNDED_T2
    return 1.0 / inv_t2


@dataclass
class SearchConfig:
    max_iterations: int = 230
    s1_tolerance: float = 1e-12          # GHz/mT
    field_cap_search: float = 10000.0    # mT, acceptance cap
    field_cap_report: float = 3000.0     # mT, ranking cap
    dedup_radius: float = 1.0            # mT
    regularization: float = 1e-12        # GHz/mT^2 added when ill-conditioned
    cond_threshold: float = 1e12
    # seed grids: a small Cartesian cube plus radial shells of directions
    cartesian_values: tuple = (-25.0, -15.0, -5.0, 5.0, 15.0, 25.0)
    radial_fine_step: float = 8.6956     # mT, up to 200 mT
    radial_fine_max: float = 200.0
    radial_coarse_start: float = 200.0   # mT
    radial_coarse_step: float = 1000.0
    radial_coarse_max: float = 20000.0
    # when a seed wanders within this distance of an already-converged point
    # of the same transition, it is retired as a duplicate of that basin
    basin_radius: float = 1.0            # mT; 0 disables
    tracking_overlap_min: float = 0.5

    def __post_init__(self):
        if self.s1_tolerance <= 0 or self.dedup_radius < 0:
            raise ValueError("tolerances must be positive")
        if self.field_cap_report > self.field_cap_search:
            raise ValueError("report cap must not exceed the search cap")


def _direction_set() -> np.ndarray:
    """The 26 face, edge and corner directions of a cube, normalized."""
    dirs = [np.array(v, dtype=float)
            for v in itertools.product((-1.0, 0.0, 1.0), repeat=3)
            if any(v)]
    return np.array([d / np.linalg.norm(d) for d in dirs])


def generate_seeds(config: SearchConfig) -> np.ndarray:
    """Deterministically ordered seed fields (mT), shape (N, 3)."""
    blocks = []
    if config.cartesian_values:
        cart = np.array(list(itertools.product(config.cartesian_values, repeat=3)))
        blocks.append(cart)
    mags = []
    if config.radial_fine_step > 0:
        m = config.radial_fine_step
        while m < config.radial_fine_max:
            mags.append(m)
            m += config.radial_fine_step
    if config.radial_coarse_step > 0:
        m = config.radial_coarse_start
        while m < config.radial_coarse_max:
            mags.append(m)
            m += config.radial_coarse_step
    if mags:
        dirs = _direction_set()
        radial = (np.array(mags)[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        blocks.append(radial)
    if not blocks:
        return np.empty((0, 3))
    return np.vstack(blocks)


@dataclass
class ZefozPoint:
    site: int
    orientation: int                 # 1: canonical subsite, 2: C2-related one
    transition: tuple
    B: np.ndarray                    # mT, as converged
    B_spherical: FieldSpherical      # canonical subsite representative
    frequency: float                 # MHz
    s1_norm: float                   # GHz/mT
    s2_max: float                    # GHz/mT^2
    S2: np.ndarray                   # (3, 3) GHz/mT^2
    t2: float | None                 # seconds
    strength: float | None           # GHz/T
    iterations_used: int
    converged: bool
    failure: str | None = None       # diagnostic for non-converged reports
    symmetry_partner: int | None = None   # index of a tagged partner point


def canonical_field(B) -> tuple[np.ndarray, int]:
    """Map B onto the subsite-canonical image with theta in [0, 90] and phi
    in (-90, 90], using the physical equivalences B -> -B and the C2(b)
    rotation (D1, D2, b) -> (-D1, -D2, b).

    Returns (canonical vector, orientation), orientation 2 meaning the C2
    image was needed.
    """
    B = np.asarray(B, dtype=float)
    c2 = np.array([-B[0], -B[1], B[2]])
    images = [(B, 1), (-B, 1), (c2, 2), (-c2, 2)]
    best = None
    for v, orient in images:
        ok_theta = v[2] > 0 or (v[2] == 0 and v[0] >= 0)
        ok_phi = v[0] > 0 or (v[0] == 0 and v[1] >= 0)
        if ok_theta and ok_phi:
            return v, orient
        if best is None:
            best = (v, orient)
    return best


def _regularized(S2: np.ndarray, config: SearchConfig) -> np.ndarray:
    w = np.linalg.eigvalsh(S2)
    wmin = np.abs(w).min()
    wmax = np.abs(w).max()
    if wmin == 0.0 or wmax / wmin > config.cond_threshold:
        return S2 + config.regularization * np.eye(3)
    return S2


def newton_update(S1: np.ndarray, S2: np.ndarray, config: SearchConfig) -> np.ndarray:
    """The Newton displacement -(1/2) S2^{-1} S1, Tikhonov-regularized."""
    return -0.5 * np.linalg.solve(_regularized(S2, config), np.asarray(S1))


def newton_step(site: SiteTensors, transition, B, config: SearchConfig | None = None):
    """One Newton update of the field for the given transition.

    Returns B unchanged when already at a ZEFOZ point (|S1| below tolerance).
    Raises RuntimeError when the step leaves the search domain.
    """
    config = config or SearchConfig()
    i, j = transition
    prof = sensitivity(site, B, i, j)
    if np.linalg.norm(prof.S1) < config.s1_tolerance:
        return np.asarray(B, dtype=float)
    B_next = np.asarray(B, dtype=float) + newton_update(prof.S1, prof.S2, config)
    if np.linalg.norm(B_next) > 3 * config.field_cap_search:
        raise RuntimeError("Newton step left the search domain")
    return B_next


def _finalize(site, B, pair, iterations, config, t2_model, converged, failure=None):
    spec = diagonalize(build_hamiltonian(site, B), B)
    i, j = pair
    prof = sensitivity(site, B, i, j)
    Bc, orient = canonical_field(B)
    t2 = t2_from_sensitivities(prof, t2_model) if (t2_model and converged) else None
    strength = transition_strength(spec, site, i, j) if converged else None
    return ZefozPoint(
        site=site.site_id, orientation=orient, transition=(i, j),
        B=np.asarray(B, dtype=float), B_spherical=cartesian_to_spherical(Bc),
        frequency=float(spec.energies[j] - spec.energies[i]),
        s1_norm=float(np.linalg.norm(prof.S1)), s2_max=prof.s2_max,
        S2=prof.S2, t2=t2, strength=strength,
        iterations_used=iterations, converged=converged, failure=failure,
    )


def refine_to_zefoz(site: SiteTensors, transition, seed,
                    config: SearchConfig | None = None,
                    t2_model: T2Model | None = None) -> ZefozPoint:
    """Iterate Newton steps from one seed until |S1| < tolerance.

    Non-convergence (iteration cap, domain exit, lost level tracking) is
    reported in the returned point, never raised.
    """
    config = config or SearchConfig()
    pts = _search_batch(site, transition, np.asarray([seed], dtype=float),
                        config, t2_model, keep_failures=True)
    return pts[0]


def _search_batch(site, transition, seeds, config, t2_model,
                  keep_failures=False, known_points=None):
    """Vectorized Newton iteration over many seeds for one transition."""
    i0, j0 = transition
    if not (0 <= i0 < j0 <= 15):
        raise ValueError(f"bad transition {transition!r}")
    n_seeds = len(seeds)
    if n_seeds == 0:
        return []
    H0 = zero_field_hamiltonian(site)
    D = field_coupling_operators(site)

    B = np.array(seeds, dtype=float)
    active = np.ones(n_seeds, dtype=bool)
    idx = np.tile(np.array([i0, j0]), (n_seeds, 1))
    Vpair = None                        # (n, 16, 2) for active seeds
    fail_reason = np.array([None] * n_seeds, dtype=object)
    iters = np.zeros(n_seeds, dtype=int)
    conv_mask = np.zeros(n_seeds, dtype=bool)
    known = [np.asarray(p, dtype=float) for p in (known_points or [])]
    div_cap = 3 * config.field_cap_search

    for it in range(config.max_iterations):
        if not active.any():
            break
        sel = np.flatnonzero(active)
        Ba = B[sel]
        H = H0[None, :, :] + np.einsum("nk,kij->nij", Ba, D)
        E, V = np.linalg.eigh(H)

        if Vpair is None:
            ii = np.full(len(sel), i0)
            jj = np.full(len(sel), j0)
        else:
            ov = np.abs(np.einsum("nki,nkp->nip", V.conj(), Vpair[sel]))
            pick = np.argmax(ov, axis=1)            # (n, 2)
            best = np.take_along_axis(ov, pick[:, None, :], axis=1)[:, 0, :]
            lost = (best.min(axis=1) < config.tracking_overlap_min) \
                | (pick[:, 0] == pick[:, 1])
            ii, jj = pick[:, 0], pick[:, 1]
            if lost.any():
                gsel = sel[lost]
                active[gsel] = False
                fail_reason[gsel] = "tracking-lost"
                keep = ~lost
                sel, Ba, E, V, ii, jj = (sel[keep], Ba[keep], E[keep],
                                         V[keep], ii[keep], jj[keep])
                if len(sel) == 0:
                    continue

        pick2 = np.stack([ii, jj], axis=1)
        if Vpair is None:
            Vpair = np.zeros((n_seeds, 16, 2), dtype=complex)
        Vpair[sel] = np.take_along_axis(V, pick2[:, None, :], axis=2)
        idx[sel] = pick2
        iters[sel] = it + 1

        S2 = np.zeros((len(sel), 3, 3))
        for col, sign in ((1, 1.0), (0, -1.0)):
            lev = pick2[:, col]
            u = np.take_along_axis(V, lev[:, None, None], axis=2)[:, :, 0]
            rows = np.einsum("nk,akj,njm->nam", u.conj(), D, V, optimize=True)
            En = np.take_along_axis(E, lev[:, None], axis=1)
            dE = En - E
            np.put_along_axis(dE, lev[:, None], np.inf, axis=1)
            S2 += sign * 2.0 * np.real(
                np.einsum("nam,nbm->nab", rows, rows.conj() / dE[:, None, :]))
        # S1 from the diagonal elements of the derivative operators
        uj = Vpair[sel][:, :, 1]
        ui = Vpair[sel][:, :, 0]
        dj = np.einsum("nk,akj,nj->na", uj.conj(), D, uj, optimize=True)
        di = np.einsum("nk,akj,nj->na", ui.conj(), D, ui, optimize=True)
        S1 = np.real(dj - di) / 1e3
        S2 = S2 / 2.0 / 1e3

        s1n = np.linalg.norm(S1, axis=1)
        done = s1n < config.s1_tolerance
        if done.any():
            gsel = sel[done]
            active[gsel] = False
            conv_mask[gsel] = True
            known.extend(B[g].copy() for g in gsel)
        live = ~done
        sel, S1, S2 = sel[live], S1[live], S2[live]
        if len(sel) == 0:
            continue

        w = np.linalg.eigvalsh(S2)
        wabs = np.abs(w)
        bad = (wabs.min(axis=1) == 0) | \
              (wabs.max(axis=1) > config.cond_threshold * wabs.min(axis=1))
        if bad.any():
            S2 = S2 + bad[:, None, None] * config.regularization * np.eye(3)
        step = 0.5 * np.linalg.solve(S2, S1[:, :, None])[:, :, 0]
        B[sel] = B[sel] - step

        mag = np.linalg.norm(B[sel], axis=1)
        out = mag > div_cap
        if out.any():
            gsel = sel[out]
            active[gsel] = False
            fail_reason[gsel] = "domain-exit"
        if config.basin_radius > 0 and known:
            karr = np.asarray(known)
            live_sel = sel[~out]
            if len(live_sel):
                d = np.linalg.norm(B[live_sel][:, None, :] - karr[None, :, :],
                                   axis=2).min(axis=1)
                dup = d < config.basin_radius
                if dup.any():
                    gsel = live_sel[dup]
                    active[gsel] = False
                    fail_reason[gsel] = "duplicate-basin"

    still = np.flatnonzero(active)
    fail_reason[still] = "iteration-cap"

    points = []
    for n in range(n_seeds):
        if conv_mask[n]:
            pair = (int(idx[n].min()), int(idx[n].max()))
            ok = np.linalg.norm(B[n]) < config.field_cap_search
            points.append(_finalize(
                site, B[n], pair, int(iters[n]), config, t2_model,
                converged=ok, failure=None if ok else "outside-search-cap"))
        elif keep_failures:
            pair = (int(idx[n].min()), int(idx[n].max()))
            Bn = B[n]
            if not np.all(np.isfinite(Bn)) or np.linalg.norm(Bn) > div_cap:
                Bn = np.asarray(seeds[n], dtype=float)
            points.append(_finalize(
                site, Bn, pair, int(iters[n]), config, t2_model,
                converged=False, failure=str(fail_reason[n])))
    return points


def search_transition(site: SiteTensors, transition, config: SearchConfig,
                      t2_model: T2Model | None = None,
                      seeds: np.ndarray | None = None,
                      keep_failures: bool = False) -> list[ZefozPoint]:
    """Run the seeded Newton search for a single transition."""
    if seeds is None:
        seeds = generate_seeds(config)
    return _search_batch(site, transition, seeds, config, t2_model,
                         keep_failures=keep_failures)


def search_site(site: SiteTensors, config: SearchConfig | None = None,
                t2_model: T2Model | None = None,
                transitions=None, progress=None) -> list[ZefozPoint]:
    """Search every requested transition (default: all 120 pairs) and return
    the deduplicated converged points."""
    config = config or SearchConfig()
    if transitions is None:
        transitions = [(i, j) for i in range(16) for j in range(i + 1, 16)]
    seeds = generate_seeds(config)
    points = []
    for pair in transitions:
        pts = search_transition(site, pair, config, t2_model, seeds=seeds)
        points.extend(p for p in pts if p.converged)
        if progress is not None:
            progress(pair, len(points))
    return deduplicate(points, config.dedup_radius)


def _same_key(p, q):
    return p.site == q.site and p.transition == q.transition


def deduplicate(points, dedup_radius: float) -> list[ZefozPoint]:
    """Merge points of the same transition within dedup_radius, keeping the
    lowest |S1|; symmetry partners under B -> -B and C2(b) are cross-tagged,
    not removed."""
    order = sorted(range(len(points)), key=lambda n: points[n].s1_norm)
    kept: list[ZefozPoint] = []
    for n in order:
        p = points[n]
        dup = False
        for q in kept:
            if _same_key(p, q) and np.linalg.norm(p.B - q.B) <= dedup_radius:
                dup = True
                break
        if not dup:
            kept.append(p)
    c2 = np.diag([-1.0, -1.0, 1.0])
    for a in range(len(kept)):
        for b in range(a + 1, len(kept)):
            p, q = kept[a], kept[b]
            if not _same_key(p, q):
                continue
            images = (-q.B, c2 @ q.B, -(c2 @ q.B))
            if any(np.linalg.norm(p.B - v) <= dedup_radius for v in images):
                kept[a] = replace(p, symmetry_partner=b)
                kept[b] = replace(q, symmetry_partner=a)
    return kept


def rank_and_tabulate(points, top_n: int = 10,
                      field_cap_report: float = 3000.0) -> list[ZefozPoint]:
    """Converged points within the report cap, sorted by T2 descending.

    Symmetry partners collapse to a single row (the tables quote one entry
    per +-theta pair), keyed by the shared canonical orientation.
    """
    ok = [p for p in points if p.converged
          and np.linalg.norm(p.B) <= field_cap_report]
    ok.sort(key=lambda p: (-(p.t2 if p.t2 is not None else -math.inf),
                           p.transition, float(np.linalg.norm(p.B))))
    ranked: list[ZefozPoint] = []
    seen: set[tuple] = set()
    for p in ok:
        sph = p.B_spherical
        key = (p.transition, round(sph.B, 1), round(sph.theta, 2),
               round(sph.phi, 2))
        if key in seen:
            continue
        seen.add(key)
        ranked.append(p)
        if len(ranked) == top_n:
            break
    return ranked


def format_table(points) -> str:
    """Ranked transitions rendered like the reference tables: transition,
    T2 (s), strength (MHz/T), frequency (MHz), B(T, deg, deg)."""
    lines = ["No. transition    T2_s       strength_MHz_per_T freq_MHz  B(T, theta_deg, phi_deg)"]
    for n, p in enumerate(points, start=1):
        sph = p.B_spherical
        strength = "" if p.strength is None else f"{p.strength * 1e3:.2f}"
        t2 = "" if p.t2 is None else f"{p.t2:.4g}"
        lines.append(
            f"{n:<3d} |{p.transition[0]}>-|{p.transition[1]}>".ljust(16)
            + f"{t2:<11}{strength:<19}{p.frequency:<10.1f}"
            + f"{sph.B / 1e3:.3f}, ±{sph.theta:.2f}, {sph.phi:.2f}")
    return "\n".join(lines)

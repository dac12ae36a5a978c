"""Derived studies built on the spin model, the noise model and the T2 model:
concentration sweeps, zero-field coherence maps, field sweeps, tolerance
scans, tensor anisotropy maps, point-cloud geometry fits and the stray-field
comparison of a field-insensitive versus a field-sensitive transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, SiteTensors, default_dataset
from .hamiltonian import (FieldSpherical, build_hamiltonian,
                          cartesian_to_spherical, spherical_to_cartesian)
from .noise import analytic_er_fluctuation, effective_delta_b
from .search import T2Model, ZefozPoint, t2_from_sensitivities
from .sensitivity import sensitivity


def delta_b_for_ppm(n_er_ppm: float, dataset: Dataset | None = None,
                    include_host: bool = True) -> float:
    """Per-component noise amplitude (microtesla) at an Er concentration,
    from the analytic Er curve and the calibrated host-bath mode."""
    ds = dataset or default_dataset()
    mode_er = analytic_er_fluctuation(n_er_ppm, ds.lattice, ds.calibration) \
        if n_er_ppm > 0 else 0.0
    mode_y = ds.calibration.y_bath_mode if include_host else 0.0
    return effective_delta_b(mode_y, mode_er)


def _t2_at(site, B, i, j, dB_uT, scalarization="worst_case_eig"):
    prof = sensitivity(site, B, i, j)
    return t2_from_sensitivities(prof, T2Model(dB_total=dB_uT,
                                               scalarization=scalarization))


@dataclass
class ConcentrationSweep:
    ppm: np.ndarray
    t2_er_only: np.ndarray       # seconds
    t2_full: np.ndarray          # Er and host bath in quadrature
    saturation_ppm: float | None


def concentration_sweep(site: SiteTensors, transition, ppm_values,
                        dataset: Dataset | None = None) -> ConcentrationSweep:
    """Zero-field T2 versus Er concentration, with and without the host bath.

    Saturation is the largest scanned concentration at which the full-model
    T2 is still within 10% of its host-limited ceiling.
    """
    ds = dataset or default_dataset()
    i, j = transition
    prof = sensitivity(site, np.zeros(3), i, j)
    ppm = np.asarray(ppm_values, dtype=float)
    t2_er, t2_full = [], []
    for n in ppm:
        t2_er.append(t2_from_sensitivities(
            prof, T2Model(dB_total=delta_b_for_ppm(n, ds, include_host=False))))
        t2_full.append(t2_from_sensitivities(
            prof, T2Model(dB_total=delta_b_for_ppm(n, ds, include_host=True))))
    t2_er = np.array(t2_er)
    t2_full = np.array(t2_full)
    ceiling = t2_from_sensitivities(
        prof, T2Model(dB_total=effective_delta_b(ds.calibration.y_bath_mode, 0.0)))
    sat = None
    ok = t2_full >= 0.9 * ceiling
    if ok.any():
        sat = float(ppm[ok].max())
    return ConcentrationSweep(ppm=ppm, t2_er_only=t2_er, t2_full=t2_full,
                              saturation_ppm=sat)


@dataclass
class ZeroFieldMap:
    site: int
    n_er_ppm: float
    values: np.ndarray           # (16, 16), T2 seconds on i < j, NaN elsewhere

    @property
    def t2_min(self) -> float:
        return float(np.nanmin(self.values))

    @property
    def t2_max(self) -> float:
        return float(np.nanmax(self.values))


def zero_field_t2_map(site: SiteTensors, n_er_ppm: float,
                      dataset: Dataset | None = None) -> ZeroFieldMap:
    """T2 of all 120 transitions at zero field."""
    ds = dataset or default_dataset()
    dB = delta_b_for_ppm(n_er_ppm, ds)
    vals = np.full((16, 16), np.nan)
    for i in range(16):
        for j in range(i + 1, 16):
            vals[i, j] = _t2_at(site, np.zeros(3), i, j, dB)
    return ZeroFieldMap(site=site.site_id, n_er_ppm=n_er_ppm, values=vals)


@dataclass
class FieldSweep:
    B: np.ndarray                # mT
    frequency: np.ndarray        # MHz
    t2: np.ndarray               # seconds
    turning_points: list         # B values where d(nu)/dB = 0
    t2_peak_fwhm: float | None   # mT


def field_sweep_response(site: SiteTensors, transition, theta: float,
                         phi: float, B_values, n_er_ppm: float,
                         dataset: Dataset | None = None) -> FieldSweep:
    """Transition frequency and T2 along a fixed field direction.

    Levels are followed through avoided crossings by eigenvector overlap
    between consecutive grid points.
    """
    ds = dataset or default_dataset()
    dB = delta_b_for_ppm(n_er_ppm, ds)
    u = spherical_to_cartesian(FieldSpherical(B=1.0, theta=theta, phi=phi))
    Bv = np.asarray(B_values, dtype=float)
    i, j = transition
    nus, t2s = [], []
    Vprev = None
    for mag in Bv:
        Bvec = mag * u
        H = build_hamiltonian(site, Bvec)
        E, V = np.linalg.eigh(H)
        if Vprev is not None:
            ov = np.abs(V.conj().T @ Vprev[:, [i, j]])
            i, j = int(np.argmax(ov[:, 0])), int(np.argmax(ov[:, 1]))
            i, j = min(i, j), max(i, j)
        Vprev = V
        nus.append(E[j] - E[i])
        t2s.append(_t2_at(site, Bvec, i, j, dB))
    nus = np.array(nus)
    t2s = np.array(t2s)

    turning = []
    dnu = np.gradient(nus, Bv)
    for k in range(len(Bv) - 1):
        if dnu[k] == 0.0 or dnu[k] * dnu[k + 1] < 0:
            # linear interpolation of the derivative zero
            frac = abs(dnu[k]) / (abs(dnu[k]) + abs(dnu[k + 1]))
            turning.append(float(Bv[k] + frac * (Bv[k + 1] - Bv[k])))

    fwhm = None
    k0 = int(np.argmax(t2s))
    if 0 < k0 < len(Bv) - 1:
        half = t2s[k0] / 2.0
        left = right = None
        for k in range(k0, 0, -1):
            if t2s[k - 1] < half <= t2s[k]:
                f = (half - t2s[k - 1]) / (t2s[k] - t2s[k - 1])
                left = Bv[k - 1] + f * (Bv[k] - Bv[k - 1])
                break
        for k in range(k0, len(Bv) - 1):
            if t2s[k + 1] < half <= t2s[k]:
                f = (t2s[k] - half) / (t2s[k] - t2s[k + 1])
                right = Bv[k] + f * (Bv[k + 1] - Bv[k])
                break
        if left is not None and right is not None:
            fwhm = float(right - left)
    return FieldSweep(B=Bv, frequency=nus, t2=t2s,
                      turning_points=turning, t2_peak_fwhm=fwhm)


@dataclass
class ScanGrid2D:
    axis1: str
    axis1_values: np.ndarray
    axis2: str
    axis2_values: np.ndarray
    values: np.ndarray             # T2 seconds, shape (len(axis1), len(axis2))
    center: dict = field(default_factory=dict)
    drop_radius: float | None = None   # axis units; one-decade T2 drop
    resolution_warning: bool = False


_PLANES = {("B", "theta"), ("B", "phi"), ("theta", "phi")}


def tolerance_scan(site: SiteTensors, transition, center: ZefozPoint,
                   plane: tuple, spans: tuple, steps: tuple,
                   n_er_ppm: float,
                   dataset: Dataset | None = None) -> ScanGrid2D:
    """T2 over a 2-D grid around a converged point, in one of the planes
    (B, theta), (B, phi) or (theta, phi); spans are half-widths (mT or deg).

    Also extracts the worst-case radial distance at which T2 falls one order
    of magnitude below the center value.
    """
    if not center.converged:
        raise ValueError("scan center must be a converged point")
    if tuple(plane) not in _PLANES:
        raise ValueError(f"unknown scan plane {plane!r}")
    ds = dataset or default_dataset()
    dB = delta_b_for_ppm(n_er_ppm, ds)
    i, j = transition
    # scan around the field as converged, not its symmetry-canonical image:
    # the C2 image belongs to the other subsite and is not a stationary
    # point of this site's tensors
    sph = cartesian_to_spherical(center.B)
    base = {"B": sph.B, "theta": sph.theta, "phi": sph.phi}
    a1 = np.linspace(-spans[0], spans[0], steps[0])
    a2 = np.linspace(-spans[1], spans[1], steps[1])
    vals = np.empty((steps[0], steps[1]))
    for m, d1 in enumerate(a1):
        for n, d2 in enumerate(a2):
            coord = dict(base)
            coord[plane[0]] += d1
            coord[plane[1]] += d2
            Bvec = spherical_to_cartesian(FieldSpherical(
                B=max(coord["B"], 0.0), theta=coord["theta"], phi=coord["phi"]))
            vals[m, n] = _t2_at(site, Bvec, i, j, dB)

    drop, warn = _one_decade_drop(a1, a2, vals)
    return ScanGrid2D(
        axis1=plane[0], axis1_values=base[plane[0]] + a1,
        axis2=plane[1], axis2_values=base[plane[1]] + a2,
        values=vals,
        center={"B_mT": sph.B, "theta_deg": sph.theta, "phi_deg": sph.phi,
                "transition": list(transition)},
        drop_radius=drop, resolution_warning=warn,
    )


def _one_decade_drop(a1, a2, vals, n_rays: int = 16):
    """Worst-case radius (over ray directions from the grid center) at which
    log10 T2 drops by one; bilinear interpolation along each ray."""
    c1 = (len(a1) - 1) / 2.0
    c2 = (len(a2) - 1) / 2.0
    logv = np.log10(vals)
    center_val = _bilinear(logv, c1, c2)
    h1 = a1[1] - a1[0] if len(a1) > 1 else 1.0
    h2 = a2[1] - a2[0] if len(a2) > 1 else 1.0
    radii = []
    warn = False
    for ang in np.linspace(0, 2 * np.pi, n_rays, endpoint=False):
        d1, d2 = np.cos(ang), np.sin(ang)
        # march in physical units; convert to index units per axis
        r_max = min(abs(a1[-1]) / abs(d1) if d1 else np.inf,
                    abs(a2[-1]) / abs(d2) if d2 else np.inf)
        r = None
        n_steps = 400
        prev = center_val
        for k in range(1, n_steps + 1):
            rr = r_max * k / n_steps
            g1 = c1 + rr * d1 / h1
            g2 = c2 + rr * d2 / h2
            if not (0 <= g1 <= len(a1) - 1 and 0 <= g2 <= len(a2) - 1):
                break
            cur = _bilinear(logv, g1, g2)
            if cur <= center_val - 1.0:
                f = (prev - (center_val - 1.0)) / max(prev - cur, 1e-30)
                r = rr - (1 - f) * r_max / n_steps
                break
            prev = cur
        if r is None:
            warn = True
        else:
            radii.append(r)
    if not radii:
        return None, True
    return float(min(radii)), warn


def _bilinear(grid, x, y):
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x0 = min(max(x0, 0), grid.shape[0] - 2) if grid.shape[0] > 1 else 0
    y0 = min(max(y0, 0), grid.shape[1] - 2) if grid.shape[1] > 1 else 0
    fx, fy = x - x0, y - y0
    if grid.shape[0] == 1:
        fx = 0.0
    if grid.shape[1] == 1:
        fy = 0.0
    x1 = min(x0 + 1, grid.shape[0] - 1)
    y1 = min(y0 + 1, grid.shape[1] - 1)
    return ((1 - fx) * (1 - fy) * grid[x0, y0] + fx * (1 - fy) * grid[x1, y0]
            + (1 - fx) * fy * grid[x0, y1] + fx * fy * grid[x1, y1])


@dataclass
class AnisotropyMap:
    tensor: str
    theta_deg: np.ndarray
    phi_deg: np.ndarray
    values: np.ndarray           # (n_theta, n_phi), sqrt(u^T M^T M u)

    @property
    def maximum(self):
        k = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.values[k]), (float(self.theta_deg[k[0]]),
                                       float(self.phi_deg[k[1]]))

    @property
    def minimum(self):
        k = np.unravel_index(np.argmin(self.values), self.values.shape)
        return float(self.values[k]), (float(self.theta_deg[k[0]]),
                                       float(self.phi_deg[k[1]]))


def anisotropy_map(site: SiteTensors, tensor: str, n_theta: int = 91,
                   n_phi: int = 181) -> AnisotropyMap:
    """Directional magnitude sqrt(u^T M^T M u) = |M u| of one interaction
    tensor over the sphere."""
    M = {"A": site.A, "Q": site.Q, "g_e": site.g_e}.get(tensor)
    if M is None:
        raise ValueError(f"unknown tensor {tensor!r}; use A, Q or g_e")
    th = np.linspace(0.0, 180.0, n_theta)
    ph = np.linspace(-180.0, 180.0, n_phi)
    T, P = np.meshgrid(np.radians(th), np.radians(ph), indexing="ij")
    u = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)],
                 axis=-1)
    vals = np.linalg.norm(u @ M.T, axis=-1)
    return AnisotropyMap(tensor=tensor, theta_deg=th, phi_deg=ph, values=vals)


@dataclass
class GeometryFit:
    kind: str                    # "line" or "plane"
    direction: np.ndarray        # line direction or plane normal, unit
    centroid: np.ndarray         # mT
    rms_residual: float          # mT
    inlier_fraction: float
    degenerate: bool = False


def fit_point_cloud(points, kind: str) -> GeometryFit:
    """Total-least-squares line or plane fit via the second-moment
    eigen-decomposition of the point cloud."""
    pts = np.asarray(points, dtype=float)
    need = 2 if kind == "line" else 3
    if kind not in ("line", "plane"):
        raise ValueError("kind must be 'line' or 'plane'")
    if len(pts) < need:
        raise ValueError(f"{kind} fit needs at least {need} points")
    centroid = pts.mean(axis=0)
    X = pts - centroid
    w, V = np.linalg.eigh(X.T @ X / len(pts))
    scale = max(w.max(), 1e-30)
    if kind == "line":
        direction = V[:, -1]
        degenerate = w[-1] / scale < 1e-12      # all points coincident
        resid = np.linalg.norm(X - np.outer(X @ direction, direction), axis=1)
    else:
        direction = V[:, 0]
        # collinear or coincident points leave the normal undetermined
        degenerate = w[1] / scale < 1e-12
        resid = np.abs(X @ direction)
    rms = float(np.sqrt(np.mean(resid**2)))
    if rms > 0:
        inliers = float(np.mean(resid <= 3.0 * rms))
    else:
        inliers = 1.0
    return GeometryFit(kind=kind, direction=direction, centroid=centroid,
                       rms_residual=rms, inlier_fraction=inliers,
                       degenerate=degenerate)


@dataclass
class StrayFieldStudy:
    n_er_ppm: float
    B: np.ndarray                # mT, along D1
    t2_a: np.ndarray             # transition (0, 2), field-sensitive
    t2_d: np.ndarray             # transition (7, 9), field-insensitive at 0
    rows: list                   # (B_mT, t2_a, t2_d) at the reference fields
    crossover_mT: float | None   # where t2_a first exceeds t2_d
    ratio_at_1mT: float


def stray_field_study(site: SiteTensors, n_er_ppm: float = 50.0,
                      b_max: float = 1.0, n_points: int = 101,
                      dataset: Dataset | None = None) -> StrayFieldStudy:
    """Coherence of transitions A = (0, 2) and D = (7, 9) under a small
    uncompensated field applied along D1."""
    ds = dataset or default_dataset()
    dB = delta_b_for_ppm(n_er_ppm, ds)
    Bv = np.linspace(0.0, b_max, n_points)
    t2a = np.array([_t2_at(site, [b, 0, 0], 0, 2, dB) for b in Bv])
    t2d = np.array([_t2_at(site, [b, 0, 0], 7, 9, dB) for b in Bv])
    rows = [(b, _t2_at(site, [b, 0, 0], 0, 2, dB),
             _t2_at(site, [b, 0, 0], 7, 9, dB))
            for b in (0.0, 0.1, 0.3, 1.0)]
    crossover = None
    for k in range(len(Bv) - 1):
        if t2a[k] <= t2d[k] and t2a[k + 1] > t2d[k + 1]:
            crossover = float(Bv[k] + (Bv[k + 1] - Bv[k]) *
                              (t2d[k] - t2a[k]) /
                              ((t2d[k] - t2a[k]) + (t2a[k + 1] - t2d[k + 1])))
            break
    ratio = float(_t2_at(site, [1.0, 0, 0], 0, 2, dB)
                  / _t2_at(site, [1.0, 0, 0], 7, 9, dB))
    return StrayFieldStudy(n_er_ppm=n_er_ppm, B=Bv, t2_a=t2a, t2_d=t2d,
                           rows=rows, crossover_mT=crossover,
                           ratio_at_1mT=ratio)

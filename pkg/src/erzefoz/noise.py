"""Monte-Carlo and analytic models of the magnetic field fluctuations felt by
an Er ion, from the host 89Y nuclear bath and from other Er electron spins.

Positions are handled in Angstrom, moments in J/T, fields in microtesla.
Bath realizations are drawn at the known site density with uniformly random
positions; each Monte-Carlo sample uses its own deterministic substream of
the master seed, so results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, curve_fit

from .constants import MU0_OVER_4PI, MU_B_J_PER_T, MU_N_J_PER_T
from .dataset import (CalibrationConstants, Dataset, LatticeSpec, SiteTensors,
                      default_dataset)


@dataclass(frozen=True)
class FluctuationSample:
    dB: np.ndarray        # (3,) microtesla
    magnitude: float      # ||dB||


@dataclass(frozen=True)
class FluctuationDistribution:
    samples: np.ndarray          # magnitudes, microtesla
    bin_edges: np.ndarray
    counts: np.ndarray
    mb_sigma: float              # fitted Maxwell-Boltzmann scale, microtesla
    mode: float                  # sigma * sqrt(2)
    raw_mode: float              # histogram argmax, for comparison
    fwhm: float
    n_samples: int
    seed: int
    fit_failed: bool = False


def _random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _sample_positions(rng, density, r_min, r_max) -> np.ndarray:
    """Poisson-sample positions uniformly in the shell r_min < r < r_max."""
    vol = 4.0 / 3.0 * np.pi * (r_max**3 - r_min**3)
    n = rng.poisson(density * vol)
    radii = rng.uniform(r_min**3, r_max**3, n) ** (1.0 / 3.0)
    return radii[:, None] * _random_directions(rng, n)


def generate_y_bath(lattice: LatticeSpec, radius: float, rng,
                    exclusion: float | None = None,
                    calibration: CalibrationConstants | None = None):
    """Random 89Y bath inside a sphere: (positions Angstrom, moments J/T).

    Y sites are populated at the lattice density 16/V; each nucleus carries a
    fixed moment magnitude |g_n| mu_N I with isotropic random orientation.
    """
    if radius <= lattice.a:
        raise ValueError("bath radius must exceed one lattice constant")
    cal = calibration or default_dataset().calibration
    excl = cal.y_exclusion_radius if exclusion is None else exclusion
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    pos = _sample_positions(rng, lattice.y_density, excl, radius)
    mu_y = 0.2748 * MU_N_J_PER_T * 0.5      # |g_n(89Y)| mu_N I
    mom = mu_y * _random_directions(rng, len(pos))
    return pos, mom


def generate_er_bath(lattice: LatticeSpec, n_er_ppm: float, radius: float,
                     site: SiteTensors, rng,
                     exclusion: float | None = None,
                     calibration: CalibrationConstants | None = None):
    """Random Er electron-spin bath: (positions Angstrom, moments J/T).

    Y sites are replaced by Er with probability n_er_ppm * 1e-6; each Er
    carries mu_B g_e . s with s a random orientation of length 1/2, scaled by
    the calibrated fluctuating-moment fraction.
    """
    if not 0.0 <= n_er_ppm <= 1e6:
        raise ValueError("n_er_ppm out of range")
    cal = calibration or default_dataset().calibration
    excl = cal.er_exclusion_radius if exclusion is None else exclusion
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    density = lattice.y_density * n_er_ppm * 1e-6
    pos = _sample_positions(rng, density, excl, radius)
    s = 0.5 * _random_directions(rng, len(pos))
    mom = cal.er_moment_fraction * MU_B_J_PER_T * (s @ site.g_e.T)
    return pos, mom


def dipole_field_sum(positions, moments, exclusion: float = 0.0) -> FluctuationSample:
    """Total dipolar field at the origin from all bath spins, in microtesla."""
    positions = np.asarray(positions, dtype=float)
    moments = np.asarray(moments, dtype=float)
    if len(positions) == 0:
        return FluctuationSample(dB=np.zeros(3), magnitude=0.0)
    rn = np.linalg.norm(positions, axis=1, keepdims=True)
    if exclusion > 0.0 and rn.min() < exclusion:
        raise ValueError("bath spin inside the exclusion radius")
    r = positions * 1e-10            # to metres
    rm = rn * 1e-10
    mdotr = np.sum(moments * r, axis=1, keepdims=True)
    B = MU0_OVER_4PI * np.sum(3.0 * mdotr * r / rm**5 - moments / rm**3, axis=0)
    B_uT = B * 1e6
    return FluctuationSample(dB=B_uT, magnitude=float(np.linalg.norm(B_uT)))


def _maxwell_boltzmann(x, amp, sigma):
    return amp * x**2 * np.exp(-(x**2) / (2.0 * sigma**2))


def _mb_fwhm(sigma: float) -> float:
    """FWHM of the Maxwell-Boltzmann magnitude density with scale sigma."""
    if sigma <= 0:
        return 0.0
    # peak value 2/e at u = sqrt(2) in units of sigma; solve for half of it
    # on both sides of the peak
    g = lambda u: u**2 * np.exp(-(u**2) / 2.0) - 1.0 / np.e
    lo = brentq(g, 1e-9, np.sqrt(2.0))
    hi = brentq(g, np.sqrt(2.0), 12.0)
    return (hi - lo) * sigma


def _locate_peak(samples: np.ndarray, nbins: int = 60) -> float:
    """Iteratively shrink the histogram window onto the density peak.

    The Er-bath magnitude distribution is heavy-tailed, so a fixed histogram
    range pulls the argmax far from the actual peak; re-binning around the
    current argmax until it stabilizes is robust for both bath kinds.
    """
    upper = float(np.quantile(samples, 0.9))
    rough = 0.0
    for _ in range(8):
        h, e = np.histogram(samples, bins=nbins, range=(0.0, upper))
        c = 0.5 * (e[:-1] + e[1:])
        new = float(c[np.argmax(h)])
        if rough > 0 and abs(new - rough) < 0.02 * rough:
            rough = new
            break
        rough = new
        upper = 3.5 * rough
    return rough


def fit_maxwell_boltzmann(samples: np.ndarray, nbins: int = 60):
    """Fit f(x) = a x^2 exp(-x^2 / 2 sigma^2) around the histogram peak.

    Returns (sigma, raw_mode, fit_failed).
    """
    samples = np.asarray(samples, dtype=float)
    if np.all(samples == 0.0):
        return 0.0, 0.0, False
    rough = _locate_peak(samples, nbins)
    if rough <= 0.0:
        return 0.0, 0.0, True
    h, e = np.histogram(samples, bins=nbins, range=(0.0, 3.0 * rough), density=True)
    c = 0.5 * (e[:-1] + e[1:])
    try:
        popt, _ = curve_fit(_maxwell_boltzmann, c, h,
                            p0=[1.0, rough / np.sqrt(2.0)], maxfev=20000)
        return abs(float(popt[1])), rough, False
    except RuntimeError:
        return 0.0, rough, True


def _sample_magnitude(kind, n_er_ppm, rng, lattice, cal, bath_site, radius):
    if kind == "host_Y":
        pos, mom = generate_y_bath(lattice, radius, rng, calibration=cal)
    else:
        if n_er_ppm == 0.0:
            return 0.0
        pos, mom = generate_er_bath(lattice, n_er_ppm, radius, bath_site, rng,
                                    calibration=cal)
    return dipole_field_sum(pos, mom).magnitude


def _mc_chunk(kind, n_er_ppm, rng_seed, lo, hi, site_id, radius):
    """Worker entry point: magnitudes for sample indices [lo, hi)."""
    ds = default_dataset()
    bath_site = ds.site(site_id) if kind == "dopant_Er" else None
    return [
        _sample_magnitude(kind, n_er_ppm, np.random.default_rng([rng_seed, k]),
                          ds.lattice, ds.calibration, bath_site, radius)
        for k in range(lo, hi)
    ]


def run_fluctuation_mc(kind: str, n_er_ppm: float = 0.0, n_samples: int = 6000,
                       rng_seed: int = 0, site: SiteTensors | None = None,
                       dataset: Dataset | None = None,
                       y_bath_radius: float | None = None,
                       er_bath_radius_factor: float | None = None,
                       nbins: int = 60, workers: int = 1) -> FluctuationDistribution:
    """Monte-Carlo distribution of |dB| over independent bath realizations.

    kind is "host_Y" or "dopant_Er".  Sample k draws from the deterministic
    substream (rng_seed, k), so the result is reproducible and independent of
    evaluation order and of the worker count.
    """
    if kind not in ("host_Y", "dopant_Er"):
        raise ValueError(f"unknown bath kind {kind!r}")
    if n_samples < 100:
        raise ValueError("need at least 100 samples for a meaningful fit")
    ds = dataset or default_dataset()
    cal = ds.calibration
    lattice = ds.lattice

    if kind == "host_Y":
        radius = cal.y_bath_radius if y_bath_radius is None else y_bath_radius
        bath_site = None
    else:
        if n_er_ppm < 0 or n_er_ppm > 1e6:
            raise ValueError("n_er_ppm out of range")
        bath_site = site or ds.site(2)
        factor = (cal.er_bath_radius_factor if er_bath_radius_factor is None
                  else er_bath_radius_factor)
        radius = (factor * er_spacing(n_er_ppm, lattice)
                  if n_er_ppm > 0 else 0.0)

    if workers > 1 and dataset is None and site is None:
        from concurrent.futures import ProcessPoolExecutor
        bounds = np.linspace(0, n_samples, 4 * workers + 1).astype(int)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = pool.map(
                _mc_chunk, *zip(*[(kind, n_er_ppm, rng_seed, lo, hi,
                                   2, radius)
                                  for lo, hi in zip(bounds[:-1], bounds[1:])]))
        mags = np.array([m for chunk in chunks for m in chunk])
    else:
        mags = np.array([
            _sample_magnitude(kind, n_er_ppm,
                              np.random.default_rng([rng_seed, k]),
                              lattice, cal, bath_site, radius)
            for k in range(n_samples)
        ])

    sigma, raw_mode, failed = fit_maxwell_boltzmann(mags, nbins)
    hist_range = (0.0, float(mags.max())) if mags.max() > 0 else (0.0, 1.0)
    counts, edges = np.histogram(mags, bins=nbins, range=hist_range)
    return FluctuationDistribution(
        samples=mags, bin_edges=edges, counts=counts,
        mb_sigma=sigma, mode=sigma * np.sqrt(2.0), raw_mode=raw_mode,
        fwhm=_mb_fwhm(sigma), n_samples=n_samples, seed=rng_seed,
        fit_failed=failed,
    )


def er_spacing(n_er_ppm: float, lattice: LatticeSpec | None = None) -> float:
    """Mean Er-Er distance (Angstrom) at a number-fraction concentration."""
    if n_er_ppm <= 0:
        raise ValueError("concentration must be positive")
    lattice = lattice or default_dataset().lattice
    return (lattice.volume / (lattice.n_y_per_cell * n_er_ppm * 1e-6)) ** (1.0 / 3.0)


def weight_to_number_ppm(m_er_weight_ppm: float, masses: dict | None = None) -> float:
    """Convert a weight-ppm Er concentration to number ppm per Y site.

    Uses the stoichiometry of Y2SiO5: P = M (2 m_Y + m_Si + 5 m_O) / m_Er.
    """
    masses = masses or default_dataset().masses
    for key in ("Y", "Si", "O", "Er"):
        if masses[key] <= 0:
            raise ValueError("masses must be positive")
    formula = 2 * masses["Y"] + masses["Si"] + 5 * masses["O"]
    return m_er_weight_ppm * formula / masses["Er"]


def analytic_er_fluctuation(n_er_ppm: float,
                            lattice: LatticeSpec | None = None,
                            calibration: CalibrationConstants | None = None) -> float:
    """Closed-form Er-bath fluctuation amplitude in microtesla, linear in ppm.

    Based on the nearest-neighbour dipole field 2 mu0 mu_B g_eff / (4 pi r^3)
    at the mean spacing r, scaled by the calibrated prefactor that matches the
    Monte-Carlo distribution mode.
    """
    if n_er_ppm <= 0:
        raise ValueError("concentration must be positive")
    cal = calibration or default_dataset().calibration
    r_m = er_spacing(n_er_ppm, lattice) * 1e-10
    dB_T = cal.analytic_prefactor * 2.0 * MU0_OVER_4PI * MU_B_J_PER_T * cal.g_eff / r_m**3
    return dB_T * 1e6


def frozen_core(dB_y_mode: float, lattice: LatticeSpec | None = None,
                calibration: CalibrationConstants | None = None):
    """Er concentration at which the Er-bath fluctuation equals the Y-bath one.

    Returns (n_ppm, radius_Angstrom, y_count): the crossover concentration,
    the corresponding mean Er spacing, and the number of Y sites inside a
    sphere of that radius.
    """
    if dB_y_mode <= 0:
        raise ValueError("Y-bath mode must be positive")
    lattice = lattice or default_dataset().lattice
    per_ppm = analytic_er_fluctuation(1.0, lattice, calibration)
    n_ppm = dB_y_mode / per_ppm
    radius = er_spacing(n_ppm, lattice)
    y_count = 4.0 / 3.0 * np.pi * radius**3 * lattice.y_density
    return n_ppm, radius, y_count


def effective_delta_b(mode_y_uT: float, mode_er_uT: float) -> float:
    """Per-component field-noise amplitude (microtesla) for the T2 model.

    Independent baths combine in quadrature; dividing the combined vector
    mode by sqrt(2) recovers the standard deviation of each Cartesian
    component of the fluctuation.
    """
    return float(np.hypot(mode_y_uT, mode_er_uT) / np.sqrt(2.0))

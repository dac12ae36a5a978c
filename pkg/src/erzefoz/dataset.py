"""Built-in parameter dataset: interaction tensors, isotopes, lattice data.

The dataset ships as a versioned TOML file.  Users may point the loader at an
alternative file with the same layout to override any of the values.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass(frozen=True)
class IsotopeData:
    name: str
    abundance: float
    I: float
    mu_over_mu_n: float     # |mu| / mu_N
    gamma_over_2pi: float   # MHz/T
    g_n: float
    mass: float             # u

    def __post_init__(self):
        if not 0.0 <= self.abundance <= 1.0:
            raise ValueError("abundance must lie in [0, 1]")


@dataclass(frozen=True)
class LatticeSpec:
    a: float = 14.411       # Angstrom
    b: float = 6.726
    c: float = 10.419
    beta_deg: float = 122.2
    n_y_per_cell: int = 16
    n_si_per_cell: int = 8
    n_o_per_cell: int = 40

    @property
    def volume(self) -> float:
        """Unit-cell volume in cubic Angstrom (monoclinic, V = abc sin beta)."""
        return self.a * self.b * self.c * np.sin(np.radians(self.beta_deg))

    @property
    def y_density(self) -> float:
        """Number density of Y sites, Angstrom^-3."""
        return self.n_y_per_cell / self.volume


def _check_symmetric(M: np.ndarray, name: str, rtol: float = 1e-9) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"{name} must be a 3x3 matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.T).max() > rtol * scale:
        raise ValueError(f"{name} is not symmetric within tolerance")
    return M


@dataclass(frozen=True)
class SiteTensors:
    """Interaction tensors defining one crystallographic site.

    A (hyperfine) and Q (quadrupole) are in MHz, g_e is dimensionless.  All
    three are symmetric 3x3 matrices in the optical frame (D1, D2, b).
    """

    site_id: int
    A: np.ndarray
    Q: np.ndarray
    g_e: np.ndarray
    g_n: float = -0.1618
    S: float = 0.5
    I: float = 3.5

    def __post_init__(self):
        object.__setattr__(self, "A", _check_symmetric(self.A, "A"))
        object.__setattr__(self, "Q", _check_symmetric(self.Q, "Q"))
        object.__setattr__(self, "g_e", _check_symmetric(self.g_e, "g_e"))


@dataclass(frozen=True)
class CalibrationConstants:
    y_exclusion_radius: float = 2.85      # Angstrom
    er_exclusion_radius: float = 3.4      # Angstrom
    y_bath_radius: float = 40.0           # Angstrom
    er_bath_radius_factor: float = 8.0    # multiple of the mean Er spacing
    er_moment_fraction: float = 0.26
    analytic_prefactor: float = 0.2076
    g_eff: float = 14.7
    y_bath_mode: float = 4.45             # microtesla


@dataclass(frozen=True)
class Dataset:
    version: str
    sites: dict = field(default_factory=dict)        # site_id -> SiteTensors
    isotopes: dict = field(default_factory=dict)     # name -> IsotopeData
    lattice: LatticeSpec = field(default_factory=LatticeSpec)
    masses: dict = field(default_factory=dict)       # element -> u
    calibration: CalibrationConstants = field(default_factory=CalibrationConstants)

    def site(self, site_id: int) -> SiteTensors:
        try:
            return self.sites[int(site_id)]
        except KeyError:
            raise ValueError(f"unknown site id {site_id!r}") from None


def load_dataset(path: str | None = None) -> Dataset:
    """Load the built-in dataset, or a user-supplied TOML file of the same layout."""
    if path is None:
        ref = importlib.resources.files("erzefoz.data") / "er167_yso.toml"
        raw = tomllib.loads(ref.read_text())
    else:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)

    lat = raw.get("lattice", {})
    lattice = LatticeSpec(
        a=lat.get("a", 14.411), b=lat.get("b", 6.726), c=lat.get("c", 10.419),
        beta_deg=lat.get("beta_deg", 122.2),
        n_y_per_cell=lat.get("n_y_per_cell", 16),
        n_si_per_cell=lat.get("n_si_per_cell", 8),
        n_o_per_cell=lat.get("n_o_per_cell", 40),
    )

    sites = {}
    for sid in (1, 2):
        key = f"site{sid}"
        if key in raw:
            sec = raw[key]
            sites[sid] = SiteTensors(
                site_id=sid,
                A=np.array(sec["A"], dtype=float),
                Q=np.array(sec["Q"], dtype=float),
                g_e=np.array(sec["g_e"], dtype=float),
                g_n=float(sec.get("g_n", -0.1618)),
            )

    isotopes = {}
    for iso in raw.get("isotopes", []):
        isotopes[iso["name"]] = IsotopeData(
            name=iso["name"], abundance=float(iso["abundance"]),
            I=float(iso["I"]), mu_over_mu_n=float(iso["mu_over_mu_n"]),
            gamma_over_2pi=float(iso["gamma_over_2pi"]),
            g_n=float(iso["g_n"]), mass=float(iso["mass"]),
        )

    cal = raw.get("calibration", {})
    calibration = CalibrationConstants(**cal) if cal else CalibrationConstants()

    return Dataset(
        version=str(raw.get("dataset", {}).get("version", "unversioned")),
        sites=sites, isotopes=isotopes, lattice=lattice,
        masses=dict(raw.get("masses", {})), calibration=calibration,
    )


_DEFAULT: Dataset | None = None


def default_dataset() -> Dataset:
    """Cached accessor for the built-in dataset."""
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_dataset()
    return _DEFAULT

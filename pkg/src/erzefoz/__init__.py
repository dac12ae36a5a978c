"""Hyperfine structure, ZEFOZ point search and spin-coherence prediction for
167Er(3+) in Y2SiO5."""

from .dataset import (CalibrationConstants, Dataset, IsotopeData, LatticeSpec,
                      SiteTensors, default_dataset, load_dataset)
from .hamiltonian import (FieldSpherical, HyperfineSpectrum, build_hamiltonian,
                          cartesian_to_spherical, diagonalize,
                          spectrum_at, spherical_to_cartesian,
                          transition_frequency)
from .operators import SpinOperators, angular_momentum, build_spin_operators
from .sensitivity import (DegeneratePointError, SensitivityProfile,
                          TrackingLostError, electron_zeeman_splitting,
                          magnetic_moment_operators, sensitivity,
                          transition_strength)
from .noise import (FluctuationDistribution, FluctuationSample,
                    analytic_er_fluctuation, dipole_field_sum,
                    effective_delta_b, er_spacing, frozen_core,
                    generate_er_bath, generate_y_bath, run_fluctuation_mc,
                    weight_to_number_ppm)
from .search import (SearchConfig, T2Model, ZefozPoint, UNBOUNDED_T2,
                     deduplicate, format_table, generate_seeds, newton_step,
                     rank_and_tabulate, refine_to_zefoz, search_site,
                     search_transition, t2_from_sensitivities)
from .analysis import (AnisotropyMap, GeometryFit, ScanGrid2D,
                       anisotropy_map, concentration_sweep, delta_b_for_ppm,
                       field_sweep_response, fit_point_cloud,
                       stray_field_study, tolerance_scan, zero_field_t2_map)

__version__ = "0.1.0"

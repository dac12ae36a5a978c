import numpy as np
import pytest

from erzefoz.analysis import (anisotropy_map, concentration_sweep,
                              delta_b_for_ppm, field_sweep_response,
                              fit_point_cloud, stray_field_study,
                              tolerance_scan, zero_field_t2_map)
from erzefoz.search import SearchConfig, T2Model, deduplicate, search_transition


@pytest.fixture(scope="module")
def site2_best(site2):
    cfg = SearchConfig()
    pts = search_transition(site2, (14, 15), cfg, T2Model(dB_total=3.236))
    pts = deduplicate([p for p in pts if p.converged], cfg.dedup_radius)
    return max(pts, key=lambda p: p.t2)


def test_delta_b_monotone_in_concentration(dataset):
    vals = [delta_b_for_ppm(n) for n in (0.0, 10.0, 100.0, 1000.0)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # host-only floor: removing the Er term leaves the calibrated Y mode
    assert delta_b_for_ppm(0.0) == pytest.approx(
        dataset.calibration.y_bath_mode / np.sqrt(2.0))


def test_concentration_sweep_shapes_and_monotonicity(site1):
    ppm = np.logspace(1, 4, 7)
    sweep = concentration_sweep(site1, (7, 9), ppm)
    assert sweep.t2_er_only.shape == ppm.shape
    assert np.all(np.diff(sweep.t2_er_only) < 0)
    assert np.all(np.diff(sweep.t2_full) < 0)
    # the host bath can only reduce coherence
    assert np.all(sweep.t2_full <= sweep.t2_er_only)


def test_concentration_sweep_quadratic_scaling(site1):
    # at zero field the linear term vanishes, so the Er-only T2 of a
    # zero-field point scales as 1 / dB^2, i.e. as 1 / ppm^2
    ppm = np.array([100.0, 200.0, 400.0])
    sweep = concentration_sweep(site1, (7, 9), ppm)
    r = sweep.t2_er_only[:-1] / sweep.t2_er_only[1:]
    assert np.allclose(r, 4.0, rtol=1e-6)


def test_concentration_sweep_saturation(site1):
    ppm = np.logspace(0, 5, 11)
    sweep = concentration_sweep(site1, (7, 9), ppm)
    assert sweep.saturation_ppm in ppm
    ceiling = sweep.t2_full[0]
    k = int(np.where(ppm == sweep.saturation_ppm)[0][0])
    assert sweep.t2_full[k] >= 0.9 * ceiling
    if k + 1 < len(ppm):
        assert sweep.t2_full[k + 1] < 0.9 * ceiling


def test_zero_field_map_structure(site1):
    m = zero_field_t2_map(site1, 10.0)
    iu = np.triu_indices(16, k=1)
    assert np.all(np.isfinite(m.values[iu]))
    assert np.all(np.isnan(m.values[np.tril_indices(16)]))
    assert m.t2_min <= m.t2_max
    assert m.t2_min > 0


def test_field_sweep_peak_at_optimum(site2, site2_best):
    from erzefoz.hamiltonian import cartesian_to_spherical
    sph = cartesian_to_spherical(site2_best.B)
    sweep = field_sweep_response(site2, (14, 15), sph.theta, sph.phi,
                                 np.linspace(sph.B - 10, sph.B + 10, 201),
                                 10.0)
    k = int(np.argmax(sweep.t2))
    assert abs(sweep.B[k] - sph.B) < 0.5
    assert sweep.t2_peak_fwhm is not None and sweep.t2_peak_fwhm > 0
    # a frequency extremum accompanies the T2 peak
    assert any(abs(t - sph.B) < 1.0 for t in sweep.turning_points)


def test_tolerance_scan_center_consistency(site2, site2_best):
    scan = tolerance_scan(site2, (14, 15), site2_best, ("theta", "phi"),
                          (0.05, 0.05), (11, 11), 10.0)
    center_val = scan.values[5, 5]
    assert center_val == scan.values.max()
    assert scan.drop_radius is None or scan.drop_radius > 0


def test_tolerance_scan_validation(site2, site2_best):
    from dataclasses import replace
    with pytest.raises(ValueError):
        tolerance_scan(site2, (14, 15), site2_best, ("theta", "B"),
                       (0.1, 0.1), (5, 5), 10.0)
    bad = replace(site2_best, converged=False)
    with pytest.raises(ValueError):
        tolerance_scan(site2, (14, 15), bad, ("theta", "phi"),
                       (0.1, 0.1), (5, 5), 10.0)


def test_anisotropy_isotropic_tensor():
    from erzefoz.dataset import SiteTensors
    site = SiteTensors(site_id=1, A=3.0 * np.eye(3), Q=np.zeros((3, 3)),
                       g_e=np.eye(3))
    m = anisotropy_map(site, "A", n_theta=19, n_phi=37)
    assert np.allclose(m.values, 3.0, atol=1e-12)


def test_anisotropy_principal_axes():
    from erzefoz.dataset import SiteTensors
    site = SiteTensors(site_id=1, A=np.diag([1.0, 2.0, 5.0]),
                       Q=np.zeros((3, 3)), g_e=np.eye(3))
    m = anisotropy_map(site, "A", n_theta=181, n_phi=361)
    vmax, (th_max, _) = m.maximum
    vmin, (th_min, ph_min) = m.minimum
    assert vmax == pytest.approx(5.0, abs=1e-3)
    assert th_max in (0.0, 180.0)
    assert vmin == pytest.approx(1.0, abs=1e-3)
    assert th_min == pytest.approx(90.0, abs=1.0)
    assert abs(ph_min) in (0.0, 180.0)


def test_anisotropy_antipodal_symmetry(site1):
    # |M u| is invariant under u -> -u, i.e. (theta, phi) -> (180 - theta,
    # phi - 180); check a handful of antipodal grid pairs
    m = anisotropy_map(site1, "g_e", n_theta=19, n_phi=37)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ti = rng.integers(0, 19)
        pi = rng.integers(0, 37)
        phi2 = m.phi_deg[pi] - 180.0
        if phi2 < -180.0:
            phi2 += 360.0
        pj = int(np.argmin(np.abs(m.phi_deg - phi2)))
        assert m.values[ti, pi] == pytest.approx(
            m.values[18 - ti, pj], abs=1e-9)


def test_anisotropy_unknown_tensor(site1):
    with pytest.raises(ValueError):
        anisotropy_map(site1, "Z")


def test_fit_collinear_points_exact():
    t = np.linspace(-5, 5, 40)
    d = np.array([0.3, -0.5, 0.8])
    d = d / np.linalg.norm(d)
    pts = np.array([10.0, 2.0, -4.0]) + t[:, None] * d
    fit = fit_point_cloud(pts, "line")
    assert fit.rms_residual < 1e-9
    assert abs(abs(fit.direction @ d) - 1.0) < 1e-9
    assert not fit.degenerate


def test_fit_noisy_plane_normal():
    rng = np.random.default_rng(12)
    n = np.array([0.702, 0.532, -0.471])
    n = n / np.linalg.norm(n)
    e1 = np.cross(n, [0.0, 0.0, 1.0])
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    uv = rng.uniform(-100, 100, (300, 2))
    pts = uv[:, :1] * e1 + uv[:, 1:] * e2 + rng.normal(0, 1.0, (300, 1)) * n
    fit = fit_point_cloud(pts, "plane")
    ang = np.degrees(np.arccos(min(1.0, abs(fit.direction @ n))))
    assert ang < 1.0
    assert fit.inlier_fraction > 0.9


def test_fit_degenerate_cloud():
    pts = np.tile([1.0, 2.0, 3.0], (10, 1))
    fit = fit_point_cloud(pts, "plane")
    assert fit.degenerate
    with pytest.raises(ValueError):
        fit_point_cloud(pts[:1], "line")
    with pytest.raises(ValueError):
        fit_point_cloud(pts, "circle")


def test_stray_field_study_structure(site1):
    st = stray_field_study(site1, 50.0, b_max=1.0, n_points=51)
    assert len(st.rows) == 4
    assert st.rows[0][0] == 0.0 and st.rows[-1][0] == 1.0
    # the zero-field-insensitive transition starts far ahead, then loses
    assert st.rows[0][2] > st.rows[0][1]
    assert st.rows[-1][1] > st.rows[-1][2]
    assert st.crossover_mT is not None and 0.0 < st.crossover_mT < 1.0
    assert st.ratio_at_1mT == pytest.approx(st.rows[-1][1] / st.rows[-1][2])

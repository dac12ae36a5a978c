import math

import numpy as np
import pytest

from erzefoz.search import (SearchConfig, T2Model, UNBOUNDED_T2,
                            canonical_field, deduplicate, format_table,
                            generate_seeds, newton_step, newton_update,
                            rank_and_tabulate, refine_to_zefoz,
                            search_transition, t2_from_sensitivities)
from erzefoz.sensitivity import SensitivityProfile, sensitivity


def _profile(S1, S2):
    S1 = np.asarray(S1, float)
    S2 = np.asarray(S2, float)
    return SensitivityProfile(transition=(0, 1), S1=S1, S2=S2,
                              s2_max=float(np.abs(np.linalg.eigvalsh(S2)).max()),
                              method="perturbative")


def test_seed_grid_counts():
    cfg = SearchConfig()
    seeds = generate_seeds(cfg)
    n_fine = len(np.arange(cfg.radial_fine_step, cfg.radial_fine_max,
                           cfg.radial_fine_step))
    n_coarse = len(np.arange(cfg.radial_coarse_start, cfg.radial_coarse_max,
                             cfg.radial_coarse_step))
    assert len(seeds) == 6**3 + 26 * (n_fine + n_coarse)
    # deterministic ordering
    assert np.array_equal(seeds, generate_seeds(cfg))


def test_seed_grid_empty_spec():
    cfg = SearchConfig(cartesian_values=(), radial_fine_step=0.0,
                       radial_coarse_step=0.0)
    assert generate_seeds(cfg).shape == (0, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(s1_tolerance=0.0)
    with pytest.raises(ValueError):
        SearchConfig(field_cap_report=5000.0, field_cap_search=4000.0)


def test_newton_update_quadratic_surface():
    # for an exactly quadratic frequency surface nu(B) = (B-B*)^T M (B-B*),
    # the gradient is S1 = 2 M (B-B*) and the half-Hessian is S2 = M, so a
    # single update must land on B* exactly
    rng = np.random.default_rng(3)
    A = rng.normal(size=(3, 3))
    M = A @ A.T + 0.5 * np.eye(3)
    B_star = np.array([120.0, -40.0, 310.0])
    B = np.array([90.0, 10.0, 260.0])
    S1 = 2.0 * M @ (B - B_star)
    step = newton_update(S1, M, SearchConfig())
    assert np.abs((B + step) - B_star).max() < 1e-9


def test_newton_step_fixed_point():
    # a site with no couplings has S1 = 0 everywhere, so every field is a
    # fixed point of the update
    from erzefoz.dataset import SiteTensors
    site = SiteTensors(site_id=1, A=np.zeros((3, 3)), Q=np.zeros((3, 3)),
                       g_e=np.zeros((3, 3)), g_n=0.0)
    B = np.array([55.0, -10.0, 30.0])
    assert np.array_equal(newton_step(site, (0, 1), B, SearchConfig()), B)


def test_newton_step_domain_exit(site2):
    cfg = SearchConfig(field_cap_search=10.0, field_cap_report=10.0)
    with pytest.raises(RuntimeError):
        B = np.array([9.0, 0.0, 0.0])
        for _ in range(50):
            B = newton_step(site2, (0, 1), B, cfg)


@pytest.fixture(scope="module")
def site2_1415(site2):
    """Deduplicated converged points of the site-2 (14, 15) transition from
    the full default seed grid."""
    cfg = SearchConfig()
    model = T2Model(dB_total=3.236)
    pts = search_transition(site2, (14, 15), cfg, model)
    return deduplicate([p for p in pts if p.converged], cfg.dedup_radius)


def test_refine_from_converged_field_is_stable(site2, site2_1415):
    cfg = SearchConfig()
    model = T2Model(dB_total=3.236)
    best = max(site2_1415, key=lambda p: p.t2)
    p = refine_to_zefoz(site2, (14, 15), best.B, cfg, model)
    assert p.converged
    assert p.s1_norm < cfg.s1_tolerance
    assert np.abs(p.B - best.B).max() < 1e-9
    assert p.frequency == pytest.approx(796.3, abs=1.0)


def test_refine_reports_failures(site2):
    cfg = SearchConfig(max_iterations=0)
    p = refine_to_zefoz(site2, (14, 15), [380.0, -70.0, 500.0], cfg)
    assert not p.converged
    assert p.failure is not None


def test_canonical_field_octant():
    rng = np.random.default_rng(8)
    c2 = np.diag([-1.0, -1.0, 1.0])
    for _ in range(50):
        B = rng.uniform(-500, 500, 3)
        v, orient = canonical_field(B)
        sph_set = {tuple(np.round(canonical_field(img)[0], 9))
                   for img in (B, -B, c2 @ B, -(c2 @ B))}
        assert len(sph_set) == 1          # all images share one canonical rep
        assert v[2] >= 0 and v[0] >= 0    # theta in [0,90], phi in (-90,90]
        assert orient in (1, 2)


def test_deduplicate_keeps_lowest_gradient(site2, site2_1415):
    cfg = SearchConfig()
    base = max(site2_1415, key=lambda p: p.t2)
    from dataclasses import replace
    worse = replace(base, B=base.B + 0.3, s1_norm=base.s1_norm + 1e-6,
                    symmetry_partner=None)
    kept = deduplicate([worse, replace(base, symmetry_partner=None)],
                       cfg.dedup_radius)
    assert len(kept) == 1
    assert kept[0].s1_norm == base.s1_norm


def test_deduplicate_tags_symmetry_partners(site2, site2_1415):
    cfg = SearchConfig()
    model = T2Model(dB_total=3.236)
    best = max(site2_1415, key=lambda p: p.t2)
    a = refine_to_zefoz(site2, (14, 15), best.B, cfg, model)
    b = refine_to_zefoz(site2, (14, 15), -best.B, cfg, model)
    kept = deduplicate([a, b], cfg.dedup_radius)
    assert len(kept) == 2
    assert kept[0].symmetry_partner == 1 and kept[1].symmetry_partner == 0
    sa, sb = kept[0].B_spherical, kept[1].B_spherical
    assert sa.theta == pytest.approx(sb.theta, abs=1e-6)
    assert sa.phi == pytest.approx(sb.phi, abs=1e-6)


def test_t2_unbounded_sentinel():
    model = T2Model(dB_total=3.0)
    prof = _profile(np.zeros(3), np.zeros((3, 3)))
    assert t2_from_sensitivities(prof, model) == UNBOUNDED_T2


def test_t2_linear_term_dominates_far_from_optimum():
    model = T2Model(dB_total=3.0)
    prof = _profile([1e-3, 0.0, 0.0], np.zeros((3, 3)))
    dB_mT = 3.0e-3
    expected = 1.0 / (math.pi * (1e-3 * 2 * dB_mT) * 1e9)
    assert t2_from_sensitivities(prof, model) == pytest.approx(expected)


def test_t2_quadratic_term_at_optimum():
    model = T2Model(dB_total=3.0)
    prof = _profile(np.zeros(3), np.diag([2e-7, -5e-8, 1e-8]))
    dB_mT = 3.0e-3
    expected = 1.0 / (math.pi * 4 * dB_mT**2 * 2e-7 * 1e9)
    assert t2_from_sensitivities(prof, model) == pytest.approx(expected)


def test_t2_scalarization_options():
    prof = _profile([0.0, 0.0, 0.0], np.diag([2e-7, 0.0, 0.0]))
    worst = t2_from_sensitivities(prof, T2Model(3.0, "worst_case_eig"))
    trace = t2_from_sensitivities(prof, T2Model(3.0, "isotropic_trace"))
    assert trace == pytest.approx(3.0 * worst)
    directional = t2_from_sensitivities(prof, T2Model(3.0, "directional"))
    assert worst < directional < trace
    with pytest.raises(ValueError):
        t2_from_sensitivities(prof, T2Model(3.0, "nope"))
    with pytest.raises(ValueError):
        t2_from_sensitivities(prof, T2Model(0.0))


def test_t2_population_decay_limit():
    prof = _profile(np.zeros(3), np.zeros((3, 3)))
    model = T2Model(dB_total=3.0, T1=0.5)
    assert t2_from_sensitivities(prof, model) == pytest.approx(1.0)


def test_rank_and_tabulate_filters_and_sorts(site2, site2_1415):
    cfg = SearchConfig()
    model = T2Model(dB_total=3.236)
    best = max(site2_1415, key=lambda p: p.t2)
    pts = [refine_to_zefoz(site2, (14, 15), s * best.B, cfg, model)
           for s in (1.0, -1.0)]
    pts = deduplicate(pts, cfg.dedup_radius)
    top = rank_and_tabulate(pts, top_n=10, field_cap_report=3000.0)
    assert len(top) == 1                       # +-B partners collapse
    assert rank_and_tabulate(pts, top_n=10, field_cap_report=100.0) == []
    table = format_table(top)
    assert "|14>-|15>" in table


def test_search_transition_finds_reference_point(site2_1415):
    best = max(site2_1415, key=lambda p: p.t2)
    sph = best.B_spherical
    assert sph.B == pytest.approx(633.5, abs=1.0)
    assert sph.theta == pytest.approx(37.54, abs=0.05)
    assert sph.phi == pytest.approx(-10.94, abs=0.05)

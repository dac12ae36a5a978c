"""Command-line front end.

Every command embeds a configuration hash, the master seed and the dataset
version in its output files, uses fixed float formatting, and derives all
randomness from per-sample substreams, so repeated runs with the same seed
are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys

import numpy as np

from . import analysis, noise
from .dataset import Dataset, default_dataset, load_dataset
from .hamiltonian import (FieldSpherical, spherical_to_cartesian, spectrum_at,
                          cartesian_to_spherical)
from .io_utils import config_hash, read_points_csv, write_csv, write_json
from .search import (SearchConfig, T2Model, ZefozPoint, format_table,
                     rank_and_tabulate, refine_to_zefoz, search_site)


class UsageError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    site: int = 1
    n_er_ppm: float = 10.0
    samples: int = 6000
    rng_seed: int = 0
    out: str = "."
    workers: int = 1
    dataset_path: str | None = None
    search: SearchConfig = dataclasses.field(default_factory=SearchConfig)


_RUN_KEYS = {"site", "n_er_ppm", "samples", "rng_seed", "out", "workers",
             "dataset_path"}
_SEARCH_KEYS = {f.name for f in dataclasses.fields(SearchConfig)}


def load_run_config(path: str) -> RunConfig:
    """Parse a flat key = value config file with [run] and [search] sections.

    Unknown keys or sections are rejected so that typos in physics parameters
    fail loudly instead of being silently ignored.
    """
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise UsageError(f"config file not found: {path}")
    cfg = RunConfig()
    for section in parser.sections():
        if section == "run":
            for key, val in parser.items("run"):
                if key not in _RUN_KEYS:
                    raise UsageError(f"unknown config key run.{key}")
                cur = getattr(cfg, key)
                setattr(cfg, key, type(cur)(val) if cur is not None else val)
        elif section == "search":
            kwargs = {}
            for key, val in parser.items("search"):
                if key not in _SEARCH_KEYS:
                    raise UsageError(f"unknown config key search.{key}")
                kwargs[key] = float(val) if "." in val or "e" in val.lower() \
                    else int(val)
            cfg.search = dataclasses.replace(cfg.search, **kwargs)
        else:
            raise UsageError(f"unknown config section [{section}]")
    if cfg.dataset_path and not os.path.exists(cfg.dataset_path):
        raise UsageError(f"dataset file not found: {cfg.dataset_path}")
    return cfg


def _meta(cfg: RunConfig, ds: Dataset, extra=None) -> dict:
    # the hash covers only physics-relevant configuration, so identical runs
    # into different output directories still produce identical files
    hashed = dataclasses.replace(cfg, out=".", workers=1)
    meta = {"config_hash": config_hash(hashed), "seed": cfg.rng_seed,
            "dataset_version": ds.version}
    meta.update(extra or {})
    return meta


def _parse_vec(text, n, what):
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated values")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"could not parse {what}: {text!r}") from None


def _field_from_args(args):
    if args.B is not None and args.sph is not None:
        raise UsageError("give either --B or --sph, not both")
    if args.B is not None:
        return np.array(_parse_vec(args.B, 3, "--B"))
    if args.sph is not None:
        mag, theta, phi = _parse_vec(args.sph, 3, "--sph")
        return spherical_to_cartesian(FieldSpherical(B=mag, theta=theta, phi=phi))
    return np.zeros(3)


def _t2_model(cfg: RunConfig, ds: Dataset) -> T2Model:
    return T2Model(dB_total=analysis.delta_b_for_ppm(cfg.n_er_ppm, ds))


def _out(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def cmd_spectrum(cfg, ds, args):
    site = ds.site(cfg.site)
    B = _field_from_args(args)
    spec = spectrum_at(site, B)
    rows = [(n, spec.energies[n], spec.labels[n][0], spec.labels[n][1])
            for n in range(16)]
    path = _out(cfg, "spectrum.csv")
    write_csv(path, ["level", "energy_MHz", "Sz", "Iz"], rows,
              _meta(cfg, ds, {"site": cfg.site, "B_mT": list(B)}))
    print(f"site {cfg.site}  B = ({B[0]:g}, {B[1]:g}, {B[2]:g}) mT")
    for n, e, sz, iz in rows:
        print(f"  |{n:>2}>  {e:12.4f} MHz   Sz={sz:+.1f} Iz={iz:+.1f}")
    if args.transitions:
        trows = [(i, j, spec.energies[j] - spec.energies[i])
                 for i in range(16) for j in range(i + 1, 16)]
        write_csv(_out(cfg, "transitions.csv"), ["i", "j", "freq_MHz"], trows,
                  _meta(cfg, ds, {"site": cfg.site}))
    return 0


def cmd_noise(cfg, ds, args):
    kind = {"Y": "host_Y", "Er": "dopant_Er"}.get(args.kind)
    if kind is None:
        raise UsageError("--kind must be Y or Er")
    dist = noise.run_fluctuation_mc(kind, n_er_ppm=cfg.n_er_ppm,
                                    n_samples=cfg.samples,
                                    rng_seed=cfg.rng_seed, dataset=None
                                    if cfg.dataset_path is None else ds,
                                    workers=cfg.workers)
    centers = 0.5 * (dist.bin_edges[:-1] + dist.bin_edges[1:])
    write_csv(_out(cfg, "noise_hist.csv"), ["bin_center_uT", "count"],
              zip(centers, dist.counts),
              _meta(cfg, ds, {"kind": args.kind, "n_er_ppm": cfg.n_er_ppm}))
    write_json(_out(cfg, "noise_fit.json"), {
        "sigma_uT": dist.mb_sigma, "mode_uT": dist.mode,
        "raw_mode_uT": dist.raw_mode, "fwhm_uT": dist.fwhm,
        "n_samples": dist.n_samples, "fit_failed": dist.fit_failed,
    }, _meta(cfg, ds, {"kind": args.kind, "n_er_ppm": cfg.n_er_ppm}))
    print(f"{args.kind} bath: mode = {dist.mode:.4g} uT "
          f"(sigma = {dist.mb_sigma:.4g}, raw peak = {dist.raw_mode:.4g}, "
          f"{dist.n_samples} samples)")
    return 0


_POINT_COLUMNS = ["site", "orientation", "i", "j", "B_D1_mT", "B_D2_mT",
                  "B_b_mT", "B_mag_mT", "theta_deg", "phi_deg", "freq_MHz",
                  "S1_GHz_per_mT", "S2max_GHz_per_mT2", "T2_s",
                  "strength_MHz_per_T", "iterations", "converged"]


def _point_row(p: ZefozPoint):
    sph = p.B_spherical
    return (p.site, p.orientation, p.transition[0], p.transition[1],
            p.B[0], p.B[1], p.B[2], float(np.linalg.norm(p.B)),
            sph.theta, sph.phi, p.frequency, p.s1_norm, p.s2_max,
            p.t2, None if p.strength is None else p.strength * 1e3,
            p.iterations_used, p.converged)


def write_points(path_base, points, cfg, ds):
    write_csv(path_base + ".csv", _POINT_COLUMNS,
              (_point_row(p) for p in points), _meta(cfg, ds))
    payload = {"points": [dict(zip(_POINT_COLUMNS, _point_row(p)),
                               S2_GHz_per_mT2=p.S2.tolist())
                          for p in points]}
    write_json(path_base + ".json", payload, _meta(cfg, ds))


def cmd_search(cfg, ds, args):
    site = ds.site(cfg.site)
    model = _t2_model(cfg, ds)
    if args.transition:
        i, j = (int(v) for v in _parse_vec(args.transition, 2, "--transition"))
        transitions = [(i, j)]
    else:
        transitions = None
    points = search_site(site, cfg.search, t2_model=model,
                         transitions=transitions)
    write_points(_out(cfg, "zefoz_points"), points, cfg, ds)
    top = rank_and_tabulate(points, top_n=args.top,
                            field_cap_report=cfg.search.field_cap_report)
    print(f"site {cfg.site}: {len(points)} distinct converged points, "
          f"top {len(top)} within the report cap:")
    print(format_table(top))
    return 0


def _center_point(cfg, ds, args, transition):
    site = ds.site(cfg.site)
    mag, theta, phi = _parse_vec(args.center, 3, "--center")
    seed = spherical_to_cartesian(FieldSpherical(B=mag, theta=theta, phi=phi))
    pt = refine_to_zefoz(site, transition, seed, cfg.search,
                         t2_model=_t2_model(cfg, ds))
    if not pt.converged:
        raise RuntimeError(f"center did not converge: {pt.failure}")
    return pt


def cmd_scan(cfg, ds, args):
    site = ds.site(cfg.site)
    i, j = (int(v) for v in _parse_vec(args.transition, 2, "--transition"))
    plane = tuple(args.plane.split(","))
    spans = _parse_vec(args.span, 2, "--span")
    steps = [int(v) for v in _parse_vec(args.steps, 2, "--steps")]
    center = _center_point(cfg, ds, args, (i, j))
    grid = analysis.tolerance_scan(site, (i, j), center, plane, spans, steps,
                                   cfg.n_er_ppm, ds)
    rows = [(a1, a2, grid.values[m, n])
            for m, a1 in enumerate(grid.axis1_values)
            for n, a2 in enumerate(grid.axis2_values)]
    unit1 = "mT" if grid.axis1 == "B" else "deg"
    unit2 = "mT" if grid.axis2 == "B" else "deg"
    write_csv(_out(cfg, "scan.csv"),
              [f"{grid.axis1}_{unit1}", f"{grid.axis2}_{unit2}", "T2_s"],
              rows, _meta(cfg, ds, {"site": cfg.site}))
    write_json(_out(cfg, "scan.json"), {
        "site": cfg.site, "transition": [i, j], "center": grid.center,
        "plane": list(plane), "spans": list(spans), "steps": list(steps),
        "drop_radius": grid.drop_radius,
        "resolution_warning": grid.resolution_warning,
    }, _meta(cfg, ds))
    drop = "not resolved" if grid.drop_radius is None \
        else f"{grid.drop_radius:.4g}"
    print(f"one-decade T2 drop radius: {drop}")
    return 0


def cmd_map(cfg, ds, args):
    site = ds.site(cfg.site)
    tmap = analysis.zero_field_t2_map(site, cfg.n_er_ppm, ds)
    rows = [(i, j, tmap.values[i, j])
            for i in range(16) for j in range(i + 1, 16)]
    write_csv(_out(cfg, "t2_map.csv"), ["i", "j", "T2_s"], rows,
              _meta(cfg, ds, {"site": cfg.site, "n_er_ppm": cfg.n_er_ppm}))
    print(f"site {cfg.site} zero-field T2 map at {cfg.n_er_ppm:g} ppm: "
          f"min = {tmap.t2_min:.4g} s, max = {tmap.t2_max:.4g} s")
    return 0


def cmd_sweep(cfg, ds, args):
    site = ds.site(cfg.site)
    i, j = (int(v) for v in _parse_vec(args.transition, 2, "--transition"))
    theta, phi = _parse_vec(args.direction, 2, "--direction")
    b0, b1, n = _parse_vec(args.brange, 3, "--brange")
    Bv = np.linspace(b0, b1, int(n))
    sweep = analysis.field_sweep_response(site, (i, j), theta, phi, Bv,
                                          cfg.n_er_ppm, ds)
    write_csv(_out(cfg, "sweep.csv"), ["B_mT", "freq_MHz", "T2_s"],
              zip(sweep.B, sweep.frequency, sweep.t2),
              _meta(cfg, ds, {"site": cfg.site, "theta_deg": theta,
                              "phi_deg": phi}))
    tp = ", ".join(f"{b:.3f}" for b in sweep.turning_points) or "none"
    fwhm = "unresolved" if sweep.t2_peak_fwhm is None \
        else f"{sweep.t2_peak_fwhm:.3g} mT"
    print(f"turning points (mT): {tp}; T2 peak FWHM: {fwhm}")
    return 0


def cmd_stray_field(cfg, ds, args):
    site = ds.site(cfg.site)
    study = analysis.stray_field_study(site, n_er_ppm=cfg.n_er_ppm, dataset=ds)
    write_csv(_out(cfg, "stray_field.csv"), ["B_mT", "T2_A_s", "T2_D_s"],
              zip(study.B, study.t2_a, study.t2_d),
              _meta(cfg, ds, {"site": cfg.site, "n_er_ppm": cfg.n_er_ppm}))
    print("B (mT)   T2(0,2)      T2(7,9)")
    for b, ta, td in study.rows:
        print(f"{b:6.2f}  {ta:10.4g} s {td:10.4g} s")
    cross = "none" if study.crossover_mT is None \
        else f"{study.crossover_mT:.3f} mT"
    print(f"crossover: {cross}; T2(A)/T2(D) at 1 mT = {study.ratio_at_1mT:.2f}")
    return 0


def cmd_frozen_core(cfg, ds, args):
    n_ppm, radius, y_count = noise.frozen_core(args.y_mode, ds.lattice,
                                               ds.calibration)
    write_json(_out(cfg, "frozen_core.json"), {
        "dB_y_mode_uT": args.y_mode, "n_er_ppm": n_ppm,
        "radius_Angstrom": radius, "y_count": y_count,
    }, _meta(cfg, ds))
    print(f"crossover concentration: {n_ppm:.1f} ppm, "
          f"radius {radius:.2f} Angstrom, {y_count:.0f} Y sites enclosed")
    return 0


def cmd_table(cfg, ds, args):
    rows = [r for r in read_points_csv(args.points)
            if r.get("converged") == "true"
            and r.get("B_mag_mT", 1e30) <= cfg.search.field_cap_report]
    rows.sort(key=lambda r: -(r["T2_s"] if isinstance(r["T2_s"], float)
                              else -1.0))
    print("No. transition    T2_s       strength_MHz_per_T freq_MHz  "
          "B(T, theta_deg, phi_deg)")
    for n, r in enumerate(rows[:args.top], start=1):
        print(f"{n:<3d} |{int(r['i'])}>-|{int(r['j'])}>".ljust(16)
              + f"{r['T2_s']:<11.4g}{r['strength_MHz_per_T']:<19.2f}"
              + f"{r['freq_MHz']:<10.1f}"
              + f"{r['B_mag_mT'] / 1e3:.3f}, ±{r['theta_deg']:.2f}, "
              + f"{r['phi_deg']:.2f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--site", type=int, choices=(1, 2))
    common.add_argument("--ppm", type=float, help="Er concentration, number ppm")
    common.add_argument("--samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)
    common.add_argument("--dataset", help="override parameter dataset (TOML)")

    ap = argparse.ArgumentParser(
        prog="erzefoz",
        description="Hyperfine structure, ZEFOZ search and coherence "
                    "prediction for 167Er:Y2SiO5")
    sub = ap.add_subparsers(dest="command", required=True)

    def sub_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = sub_parser("spectrum", help="energy levels at one field point")
    p.add_argument("--B", help="field D1,D2,b in mT")
    p.add_argument("--sph", help="field magnitude_mT,theta_deg,phi_deg")
    p.add_argument("--transitions", action="store_true",
                   help="also write all 120 transition frequencies")
    p.set_defaults(func=cmd_spectrum)

    p = sub_parser("noise", help="Monte-Carlo bath fluctuation distribution")
    p.add_argument("--kind", required=True, help="Y or Er")
    p.set_defaults(func=cmd_noise)

    p = sub_parser("search", help="seeded Newton search for ZEFOZ points")
    p.add_argument("--transition", help="restrict to one pair i,j")
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.add_argument("--s1-tol", type=float, dest="s1_tol")
    p.set_defaults(func=cmd_search)

    p = sub_parser("scan", help="T2 on a 2-D grid around a ZEFOZ point")
    p.add_argument("--transition", required=True)
    p.add_argument("--plane", required=True, help="e.g. theta,phi")
    p.add_argument("--center", required=True,
                   help="seed magnitude_mT,theta_deg,phi_deg")
    p.add_argument("--span", required=True, help="half-widths, axis units")
    p.add_argument("--steps", required=True, help="grid steps n1,n2")
    p.set_defaults(func=cmd_scan)

    p = sub_parser("map", help="zero-field T2 of all 120 transitions")
    p.add_argument("--zero-field", action="store_true", default=True)
    p.set_defaults(func=cmd_map)

    p = sub_parser("sweep", help="frequency and T2 along one direction")
    p.add_argument("--transition", required=True)
    p.add_argument("--direction", required=True, help="theta_deg,phi_deg")
    p.add_argument("--brange", required=True, help="B0_mT,B1_mT,steps")
    p.set_defaults(func=cmd_sweep)

    p = sub_parser("stray-field",
                       help="coherence of transitions (0,2) and (7,9) under "
                            "a small field along D1")
    p.set_defaults(func=cmd_stray_field)

    p = sub_parser("frozen-core",
                       help="Er concentration matching a given host-bath mode")
    p.add_argument("--y-mode", type=float, default=None, dest="y_mode",
                   help="host-bath fluctuation mode in uT")
    p.set_defaults(func=cmd_frozen_core)

    p = sub_parser("table", help="re-rank a saved zefoz_points.csv")
    p.add_argument("--points", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_table)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_run_config(args.config) if args.config else RunConfig()
        if args.site is not None:
            cfg.site = args.site
        if args.ppm is not None:
            cfg.n_er_ppm = args.ppm
        if args.samples is not None:
            cfg.samples = args.samples
        if args.seed is not None:
            cfg.rng_seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None:
            cfg.workers = args.workers
        if args.dataset is not None:
            cfg.dataset_path = args.dataset
        if getattr(args, "max_iter", None) is not None:
            cfg.search = dataclasses.replace(cfg.search,
                                             max_iterations=args.max_iter)
        if getattr(args, "s1_tol", None) is not None:
            cfg.search = dataclasses.replace(cfg.search,
                                             s1_tolerance=args.s1_tol)
        ds = load_dataset(cfg.dataset_path) if cfg.dataset_path \
            else default_dataset()
        if getattr(args, "y_mode", None) is None and args.command == "frozen-core":
            args.y_mode = ds.calibration.y_bath_mode
        return args.func(cfg, ds, args)
    except UsageError as exc:
        print(json.dumps({"error": str(exc), "kind": "usage"}),
              file=sys.stderr)
        return 2
    except Exception as exc:
        print(json.dumps({"error": str(exc), "kind": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

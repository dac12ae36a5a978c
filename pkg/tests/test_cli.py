import json
import os

import pytest

from erzefoz.cli import UsageError, load_run_config, main
from erzefoz.io_utils import config_hash, format_value, write_csv, write_json


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_stdout_and_csv(tmp_path, capsys):
    code, out, err = run(["spectrum", "--site", "1", "--B", "0,0,0",
                          "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "|15>" in out
    text = (tmp_path / "spectrum.csv").read_text()
    assert text.startswith("#")
    assert "level,energy_MHz,Sz,Iz" in text


def test_spectrum_transitions_file(tmp_path, capsys):
    code, _, _ = run(["spectrum", "--site", "2", "--sph", "633.52,37.5383,-10.9417",
                      "--transitions", "--out", str(tmp_path)], capsys)
    assert code == 0
    lines = [l for l in (tmp_path / "transitions.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    assert len(lines) == 121          # header + 120 pairs


def test_conflicting_field_flags_exit_2(tmp_path, capsys):
    code, _, err = run(["spectrum", "--B", "1,2,3", "--sph", "5,0,0",
                        "--out", str(tmp_path)], capsys)
    assert code == 2
    assert json.loads(err)["kind"] == "usage"


def test_noise_determinism_byte_identical(tmp_path, capsys):
    for sub in ("a", "b"):
        code, _, _ = run(["noise", "--kind", "Er", "--ppm", "100",
                          "--samples", "150", "--seed", "7",
                          "--out", str(tmp_path / sub)], capsys)
        assert code == 0
    for name in ("noise_hist.csv", "noise_fit.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_noise_zero_ppm_mode_zero(tmp_path, capsys):
    code, _, _ = run(["noise", "--kind", "Er", "--ppm", "0",
                      "--samples", "120", "--seed", "1",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    fit = json.loads((tmp_path / "noise_fit.json").read_text())
    assert fit["mode_uT"] == 0.0


def test_noise_bad_kind_exit_2(tmp_path, capsys):
    code, _, err = run(["noise", "--kind", "Si", "--out", str(tmp_path)],
                       capsys)
    assert code == 2


def test_search_single_transition_outputs(tmp_path, capsys):
    code, out, _ = run(["search", "--site", "2", "--transition", "14,15",
                        "--top", "3", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "|14>-|15>" in out
    assert (tmp_path / "zefoz_points.csv").exists()
    payload = json.loads((tmp_path / "zefoz_points.json").read_text())
    assert all(p["converged"] for p in payload["points"])
    assert any(abs(p["B_mag_mT"] - 633.5) < 1.0 for p in payload["points"])


def test_table_reranks_saved_points(tmp_path, capsys):
    run(["search", "--site", "2", "--transition", "14,15",
         "--out", str(tmp_path)], capsys)
    code, out, _ = run(["table", "--points",
                        str(tmp_path / "zefoz_points.csv"), "--top", "2"],
                       capsys)
    assert code == 0
    assert "|14>-|15>" in out


def test_frozen_core_default_mode(tmp_path, capsys):
    code, out, _ = run(["frozen-core", "--out", str(tmp_path)], capsys)
    assert code == 0
    data = json.loads((tmp_path / "frozen_core.json").read_text())
    assert data["n_er_ppm"] == pytest.approx(42.0, rel=0.02)


def test_config_file_round_trip(tmp_path, capsys):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text("[run]\nsite = 2\nn_er_ppm = 25\nrng_seed = 3\n"
                        "[search]\nmax_iterations = 100\n")
    cfg = load_run_config(str(cfg_file))
    assert cfg.site == 2 and cfg.n_er_ppm == 25.0 and cfg.rng_seed == 3
    assert cfg.search.max_iterations == 100


def test_config_file_unknown_key_rejected(tmp_path):
    cfg_file = tmp_path / "run.ini"
    cfg_file.write_text("[run]\nbanana = 1\n")
    with pytest.raises(UsageError):
        load_run_config(str(cfg_file))
    cfg_file.write_text("[physics]\nsite = 1\n")
    with pytest.raises(UsageError):
        load_run_config(str(cfg_file))
    with pytest.raises(UsageError):
        load_run_config(str(tmp_path / "missing.ini"))


def test_config_hash_stability():
    from erzefoz.cli import RunConfig
    a, b = RunConfig(), RunConfig()
    assert config_hash(a) == config_hash(b)
    b.rng_seed = 1
    assert config_hash(a) != config_hash(b)


def test_format_value_conventions():
    assert format_value(True) == "true"
    assert format_value(None) == ""
    assert format_value(0.1 + 0.2) == format_value(0.30000000000000004)
    assert format_value(42) == "42"


def test_write_read_round_trip(tmp_path):
    from erzefoz.io_utils import read_points_csv
    path = tmp_path / "pts.csv"
    write_csv(str(path), ["i", "j", "T2_s", "converged"],
              [(0, 1, 2.5, True), (3, 4, None, False)], {"seed": 0})
    rows = read_points_csv(str(path))
    assert rows[0]["T2_s"] == 2.5 and rows[0]["converged"] == "true"
    assert rows[1]["converged"] == "false"


def test_write_json_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_json(str(p1), {"b": 1, "a": [1.5, None]}, {"seed": 9})
    write_json(str(p2), {"a": [1.5, None], "b": 1}, {"seed": 9})
    assert p1.read_bytes() == p2.read_bytes()

import csv
import json

import pytest

from vardiff_lab.cli import main
from vardiff_lab.errors import ConfigError
from vardiff_lab.presets import STRIPS, SURFACES, list_presets
from vardiff_lab.runner import ExperimentConfig, fit_order, run


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_catalog_lists_required_presets():
    names = {p["name"] for p in list_presets()}
    assert {"plane-wave", "harmonic-xy", "flat-strip", "flat", "bulged"} <= names
    assert all(p["definition"] and p["exercises"] for p in list_presets())


def test_strip_presets_have_exact_action():
    for name, p in STRIPS.items():
        assert p.exact_value is not None, name


def test_surface_exact_action_flat_strip():
    assert SURFACES["flat-strip"].exact_action() == pytest.approx(-0.5, abs=1e-10)


def test_presets_command(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "plane-wave" in out and "harmonic-xy" in out
    assert main(["presets", "--json"]) == 0
    assert isinstance(json.loads(capsys.readouterr().out), list)


@pytest.mark.parametrize(
    "cfg,key",
    [
        ({"suite": "action-check", "geometry": {"preset": "flat-strip"}, "bogus": 1}, "bogus"),
        ({"suite": "action-check", "geometry": {"preset": "flat-strip", "extra": 1}}, "geometry.extra"),
        ({"suite": "eikonal-verify", "geometry": {"preset": "plane-wave"}, "tolerances": {"nope": 1}}, "tolerances.nope"),
        ({"suite": "quantum-evolve", "quantum": {"Mx": 1}}, "quantum.Mx"),
        ({"suite": "nope"}, "suite"),
    ],
)
def test_config_rejects_unknown_keys(cfg, key):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(cfg)
    assert key in str(exc.value)


def test_config_resolution_rules():
    with pytest.raises(ConfigError, match="strictly increasing"):
        ExperimentConfig.from_dict({"suite": "action-check", "geometry": {"preset": "flat-strip"}, "resolutions": [9, 9]})
    with pytest.raises(ConfigError, match="odd"):
        ExperimentConfig.from_dict({"suite": "eikonal-verify", "geometry": {"preset": "plane-wave"}, "resolutions": [18]})


def test_config_digest_ignores_output():
    a = ExperimentConfig.from_dict({"suite": "action-check", "geometry": {"preset": "flat-strip"}, "output": "a"})
    b = ExperimentConfig.from_dict({"suite": "action-check", "geometry": {"preset": "flat-strip"}, "output": "b"})
    assert a.digest() == b.digest()


def test_fit_order_recovers_slope():
    hs = [0.1, 0.05, 0.025]
    fit = fit_order(hs, [3 * h ** 2 for h in hs])
    assert fit["order"] == pytest.approx(2.0, abs=1e-12)


def test_action_check_run(tmp_path, capsys):
    cfg = write(tmp_path, {"suite": "action-check", "geometry": {"preset": "flat-strip"}, "resolutions": [5, 9]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["passed"] and report["schema_version"] == 1
    for case in report["cases"]:
        assert case["values"]["J"] == pytest.approx(-0.5, abs=1e-12)
    assert (tmp_path / "o" / "metadata.json").exists()
    assert capsys.readouterr().out.count("PASS") == 2


def test_reports_are_byte_identical(tmp_path):
    cfg = write(tmp_path, {"suite": "eikonal-verify", "geometry": {"preset": "harmonic-xy"}, "resolutions": [17, 33]})
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    with open(tmp_path / "a" / "case-00.csv") as fh:
        header = next(csv.reader(fh))
    assert header[0] == "tau" and "fd_px" in header and "hj_residual" in header and "constraint_residual" in header


def test_exit_codes(tmp_path, capsys):
    bad = write(tmp_path, {"suite": "action-check", "geometry": {"preset": "flat-strip"}, "typo": 1})
    assert main(["run", "--config", bad]) == 2
    assert "typo" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 1
    failing = write(
        tmp_path,
        {"suite": "eikonal-verify", "geometry": {"preset": "harmonic-xy"}, "resolutions": [17], "tolerances": {"fd_relative": 1e-12}},
        "f.json",
    )
    assert main(["run", "--config", failing, "--out", str(tmp_path / "f")]) == 1


def test_hj_verify_plane_wave(tmp_path):
    cfg = ExperimentConfig.from_dict({"suite": "hj-verify", "geometry": {"preset": "plane-wave"}, "resolutions": [17]})
    report = run(cfg, out=str(tmp_path))
    assert report["passed"]
    assert report["cases"][0]["residuals"]["hj_analytic"] <= 1e-12


def test_quantum_run_writes_snapshot(tmp_path):
    cfg = ExperimentConfig.from_dict(
        {"suite": "quantum-evolve", "quantum": {"M": 1, "G": 64, "steps": 200, "A": 0.2, "tol_step": None}}
    )
    report = run(cfg, out=str(tmp_path))
    assert report["passed"], report["cases"]
    assert (tmp_path / "case-00-final.bin").exists()
    assert (tmp_path / "case-00-evolution.json").exists()

import json

import numpy as np
import pytest

from sparseheat.cli import main, _resolve_config
from sparseheat.errors import ConfigError


TINY_RECONSTRUCT = {
    "T": 0.1,
    "truth": [{"x": [0.5, 0.5], "beta": 5.0}],
    "mesh_n": 8,
    "time_steps": 8,
    "dg_order": 0,
    "alpha": 0.001,
    "noise_level": 0.0,
    "seed": 3,
    "pdap": {"tol": 1e-8},
}


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def artifact_bytes(outdir):
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir())}


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for command in ("reconstruct", "study-space", "study-time", "study-smoothing", "selftest"):
        assert command in out


def test_missing_config_is_usage_error(capsys):
    assert main(["reconstruct", "--config", "no_such_file.json"]) == 1
    assert "error" in capsys.readouterr().err


def test_invalid_config_key_is_usage_error(tmp_path, capsys):
    cfg = dict(TINY_RECONSTRUCT)
    cfg["surprise"] = 1
    path = write_config(tmp_path, cfg)
    assert main(["reconstruct", "--config", path]) == 1


def test_missing_subcommand_is_usage_error(capsys):
    assert main([]) == 1


def test_reconstruct_writes_artifacts(tmp_path, capsys):
    path = write_config(tmp_path, TINY_RECONSTRUCT)
    out = tmp_path / "out"
    assert main(["reconstruct", "--config", path, "--out", str(out)]) == 0
    summary = capsys.readouterr().out
    assert "reconstruct:" in summary
    for name in ("measure.json", "measure_lumped.json", "log.csv", "field.csv"):
        assert (out / name).exists()


def test_reconstruct_deterministic_artifacts(tmp_path):
    path = write_config(tmp_path, TINY_RECONSTRUCT)
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["reconstruct", "--config", path, "--out", str(out1)]) == 0
    assert main(["reconstruct", "--config", path, "--out", str(out2)]) == 0
    assert artifact_bytes(out1) == artifact_bytes(out2)


def test_seed_override_changes_noise(tmp_path):
    cfg = dict(TINY_RECONSTRUCT)
    cfg["noise_level"] = 0.05
    path = write_config(tmp_path, cfg)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["reconstruct", "--config", path, "--out", str(out1)]) == 0
    assert main(["reconstruct", "--config", path, "--out", str(out2), "--seed", "77"]) == 0
    assert (
        (out1 / "field.csv").read_bytes() != (out2 / "field.csv").read_bytes()
    )


def test_study_smoothing_cli(tmp_path, capsys):
    payload = {
        "T": 0.1,
        "mesh_n": 16,
        "time_steps": [2, 4, 8, 64],
        "dg_order": 0,
        "smoothing": {"x0": [0.5, 0.5], "sweep": "time"},
    }
    path = write_config(tmp_path, payload, "smooth.json")
    out = tmp_path / "sm"
    assert main(["study-smoothing", "--config", path, "--out", str(out)]) == 0
    assert (out / "errors.csv").exists()
    assert "slope=" in capsys.readouterr().out


def test_study_time_cli(tmp_path, capsys):
    payload = {
        "T": 0.1,
        "truth": [{"x": [0.5, 0.5], "beta": 5.0}],
        "mesh_n": 8,
        "time_steps": [4, 8, 16],
        "dg_order": 0,
        "alpha": 0.001,
        "pdap": {"tol": 1e-8},
    }
    path = write_config(tmp_path, payload, "time.json")
    out = tmp_path / "ti"
    assert main(["study-time", "--config", path, "--out", str(out)]) == 0
    assert (out / "errors.csv").exists()


def test_bundled_configs_resolve_and_parse():
    from sparseheat.experiments import load_config

    for name in (
        "paper_10_1.json",
        "paper_fig4.json",
        "paper_fig5_dg0.json",
        "paper_fig5_dg1.json",
        "smoothing_time_dg0.json",
        "smoothing_time_dg1.json",
        "smoothing_space.json",
    ):
        cfg = load_config(_resolve_config(name))
        assert cfg.T == 0.1


def test_resolve_config_missing():
    with pytest.raises(ConfigError):
        _resolve_config("definitely_not_here.json")


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "adjoint identity" in out
    assert "FAIL" not in out


def test_module_entry_point():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "sparseheat", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "reconstruct" in proc.stdout

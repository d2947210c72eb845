import json
from pathlib import Path

import pytest

from maglab.cli import ExperimentConfig, build_parser, config_from_args, main, run


def _read(d: Path, name: str) -> bytes:
    return (d / name).read_bytes()


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(experiment="orbit", lam=0.4, surface=ExperimentConfig().surface)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_file(path).to_dict() == cfg.to_dict()


def test_unknown_config_field_rejected():
    with pytest.raises(ValueError, match="unknown config fields"):
        ExperimentConfig.from_dict({"lambda": 0.3})


def test_flags_override_config(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lam": 0.1, "T": 3.0, "surface": "perturbed"}))
    ns = build_parser().parse_args(["orbit", "--config", str(path), "--lam", "0.25"])
    cfg = config_from_args(ns)
    assert cfg.lam == 0.25 and cfg.T == 3.0
    assert cfg.surface["label"] == "perturbed"


def test_cohomology_requires_task():
    with pytest.raises(SystemExit):
        config_from_args(build_parser().parse_args(["cohomology"]))


def test_theorem_a_refusal_names_hypothesis(tmp_path, capsys):
    code = main(["cohomology", "theorem-a", "--lam", "0.8", "-o", str(tmp_path)])
    assert code == 2
    report = json.loads((tmp_path / "report.json").read_text())
    assert "2lambda^2+K(x)<0 for all x in M" in report["refused"]
    assert "refused" in capsys.readouterr().out


def test_solve_refusal_names_hypothesis(tmp_path):
    code = main(["cohomology", "solve", "--lam", "0.8", "--N", "1", "-o", str(tmp_path)])
    assert code == 2
    assert "max{(N+1),2}" in json.loads((tmp_path / "report.json").read_text())["refused"]


def test_surface_command_writes_outputs(tmp_path):
    code = main(["surface", "--surface", "perturbed", "-o", str(tmp_path)])
    assert code == 0
    for name in ("report.json", "config.json", "checks.csv", "surface_samples.csv"):
        assert (tmp_path / name).exists()
    echo = json.loads((tmp_path / "config.json").read_text())
    assert echo["surface"]["label"] == "perturbed"


def test_failing_check_gives_exit_status_one(tmp_path):
    cfg = ExperimentConfig(experiment="orbit", lam=0.3, T=2.0, dt=0.2, output=str(tmp_path))
    rep = run(cfg)
    assert not rep.passed and rep.exit_code == 1


@pytest.mark.parametrize("argv", [["orbit", "--T", "2", "--lam", "0.4"], ["surface", "--seed", "3"]])
def test_repeated_runs_are_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(argv + ["-o", str(a)]) == 0
    assert main(argv + ["-o", str(b)]) == 0
    names = sorted(p.name for p in a.glob("*.csv"))
    assert names
    for n in names:
        assert _read(a, n) == _read(b, n)

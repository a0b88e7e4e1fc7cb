from pathlib import Path

import pytest

from mixedeig.config import RunConfig
from mixedeig.exceptions import ConfigurationError


@pytest.mark.parametrize(
    "overrides",
    [
        {"command": "plot"},
        {"command": "verify", "domain": "disk"},
        {"command": "square", "k": 4},
        {"command": "lshape", "k": 1},
        {"command": "square", "levels": 0},
        {"command": "square", "levels": 8},
        {"command": "lshape", "k": 2, "max_dofs": 0},
        {"command": "square", "k": 3, "quad_degree": 11},
        {"command": "square", "quad_degree": 31},
        {"command": "square", "tol": 0.0},
        {"command": "square", "tol": 1.0},
        {"command": "square", "max_iter": 0},
        {"command": "square", "deterministic": False},
    ],
)
def test_invalid_configurations(overrides):
    with pytest.raises(ConfigurationError):
        RunConfig(**overrides)


def test_default_output_path(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = RunConfig(command="lshape", k=3)
    assert config.output == (tmp_path / "lshape_k3.csv").resolve()
    assert config.dat_path is None


def test_paths_are_resolved(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    config = RunConfig(command="square", output="out/study.csv", dat_path="study.dat")
    assert config.output == (tmp_path / "out" / "study.csv").resolve()
    assert config.dat_path == Path(tmp_path / "study.dat").resolve()


def test_verify_accepts_both_domains():
    assert RunConfig(command="verify", domain="lshape").domain == "lshape"
    assert RunConfig(command="verify", k=3, quad_degree=12).quad_degree == 12

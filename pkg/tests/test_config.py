"""Pipeline YAML and .env loading."""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from divplan.config import PipelineConfig, load_env
from divplan.errors import InvariantViolation, ParseError
from divplan.planner import PlannerConfig


def test_defaults_when_empty() -> None:
    assert PipelineConfig.from_dict(None) == PipelineConfig()
    assert PipelineConfig.from_dict({}) == PipelineConfig()


def test_partial_sections_keep_defaults(tmp_path: Path) -> None:
    path = tmp_path / "pipeline.yaml"
    path.write_text("planner:\n  n: 8\n  prm_samples: 200\nrender:\n  image_size: [280, 280]\n")
    cfg = PipelineConfig.load(path)
    assert cfg.planner == PlannerConfig(n=8, prm_samples=200)
    assert cfg.render.image_size == (280, 280)
    assert cfg.cluster.k == 5


def test_dump_load_round_trip(tmp_path: Path) -> None:
    cfg = PipelineConfig().with_overrides(n=12, k=4, seed=9, jobs=2)
    again = PipelineConfig.load(cfg.dump(tmp_path / "pipeline.yaml"))
    assert again == cfg
    assert again.render.palette[0] == ("red", (228, 26, 28))


@pytest.mark.parametrize(
    ("text", "error"),
    [
        ("planner:\n  speed: 3\n", InvariantViolation),
        ("judges: {}\n", InvariantViolation),
        ("planner: 3\n", ParseError),
        ("- a\n- b\n", ParseError),
        ("planner: {n: [1, 2}\n", ParseError),
        ("planner:\n  n: 0\n", InvariantViolation),
        ("planner:\n  n: lots\n", ParseError),
    ],
)
def test_bad_config_files(tmp_path: Path, text: str, error: type[Exception]) -> None:
    path = tmp_path / "pipeline.yaml"
    path.write_text(text)
    with pytest.raises(error):
        PipelineConfig.load(path)


def test_missing_config_file(tmp_path: Path) -> None:
    with pytest.raises(ParseError, match="not found"):
        PipelineConfig.load(tmp_path / "nope.yaml")


def test_with_seed_and_overrides() -> None:
    cfg = PipelineConfig().with_seed(42)
    assert (cfg.planner.seed, cfg.cluster.seed) == (42, 42)
    same = cfg.with_overrides(n=None, k=None, seed=None, jobs=None)
    assert same == cfg
    out = cfg.with_overrides(n=3, k=2, jobs=4)
    assert (out.planner.n, out.cluster.k, out.planner.jobs, out.planner.seed) == (3, 2, 4, 42)


def test_load_env_prefers_cwd_and_keeps_existing(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    home = tmp_path / "home"
    work = tmp_path / "work"
    home.mkdir()
    work.mkdir()
    (home / ".env").write_text("DIVPLAN_JUDGE_MODEL=from-home\n")
    (work / ".env").write_text("DIVPLAN_JUDGE_MODEL=from-cwd\nDIVPLAN_JUDGE_URL=http://cwd\n")
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.chdir(work)
    monkeypatch.setenv("DIVPLAN_JUDGE_MODEL", "")
    monkeypatch.delenv("DIVPLAN_JUDGE_MODEL")
    monkeypatch.setenv("DIVPLAN_JUDGE_URL", "http://already-set")

    assert load_env() == work / ".env"
    assert os.environ["DIVPLAN_JUDGE_MODEL"] == "from-cwd"
    assert os.environ["DIVPLAN_JUDGE_URL"] == "http://already-set"


def test_load_env_without_files(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.chdir(tmp_path)
    assert load_env() is None

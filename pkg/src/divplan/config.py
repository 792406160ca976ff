"""Pipeline configuration: one YAML file, one frozen dataclass per concern.

    planner:   {n: 50, max_iterations: 5000, extend_step: 0.25, ...}
    cluster:   {k: 5, m: 32, max_iter: 100, seed: 0}
    render:    {image_size: [560, 560], dot_spacing: 12, ...}
    oracle:    {sigma: 1.0, turn_eps: 0.05, ...}
    tokens:    {patch: 28}

Missing sections and keys keep their defaults; unknown ones are rejected.
Precedence is CLI flags > environment > YAML file (``--config``) > defaults.
Judge credentials come from the environment, optionally via a ``.env`` file
found in the working directory or the home directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml
from dotenv import load_dotenv

from divplan.constraints import OracleConfig
from divplan.diversity import ClusterConfig
from divplan.errors import DivplanError, InvariantViolation, ParseError
from divplan.planner import PlannerConfig
from divplan.render import RenderConfig
from divplan.vlm.tokens import TokenizerConfig

PIPELINE_FILE = "pipeline.yaml"


def load_env() -> Path | None:
    """Load the first ``.env`` found (cwd, then home). Existing variables win."""
    for env_path in (Path.cwd() / ".env", Path.home() / ".env"):
        if env_path.exists():
            load_dotenv(env_path, override=False)
            return env_path
    return None


def _tuples(value: Any) -> Any:
    return tuple(_tuples(v) for v in value) if isinstance(value, list) else value


def _lists(value: Any) -> Any:
    if isinstance(value, (list, tuple)):
        return [_lists(v) for v in value]
    if isinstance(value, dict):
        return {k: _lists(v) for k, v in value.items()}
    return value


def _section(cls: type[Any], data: Any, name: str) -> Any:
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ParseError(f"config section {name!r} must be a mapping, got {data!r}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvariantViolation(f"config section {name!r}: unknown keys {unknown} (known: {sorted(known)})")
    try:
        return cls(**{k: _tuples(v) for k, v in data.items()})
    except DivplanError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"config section {name!r}: {exc}") from exc


@dataclass(frozen=True)
class PipelineConfig:
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    tokens: TokenizerConfig = field(default_factory=TokenizerConfig)

    @classmethod
    def from_dict(cls, data: Any) -> PipelineConfig:
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ParseError(f"pipeline config must be a mapping, got {type(data).__name__}")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - set(sections))
        if unknown:
            raise InvariantViolation(f"pipeline config: unknown sections {unknown}")
        return cls(
            planner=_section(PlannerConfig, data.get("planner"), "planner"),
            cluster=_section(ClusterConfig, data.get("cluster"), "cluster"),
            render=_section(RenderConfig, data.get("render"), "render"),
            oracle=_section(OracleConfig, data.get("oracle"), "oracle"),
            tokens=_section(TokenizerConfig, data.get("tokens"), "tokens"),
        )

    def to_dict(self) -> dict[str, Any]:
        return _lists(dataclasses.asdict(self))

    @classmethod
    def load(cls, path: str | Path) -> PipelineConfig:
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise ParseError(f"{path}: config file not found") from exc
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: not valid YAML ({exc})") from exc
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")
        return path

    def with_seed(self, seed: int) -> PipelineConfig:
        """Planner and cluster seeds set to ``seed`` (per-record seeding)."""
        return dataclasses.replace(
            self,
            planner=dataclasses.replace(self.planner, seed=seed),
            cluster=dataclasses.replace(self.cluster, seed=seed),
        )

    def with_overrides(
        self, *, n: int | None = None, k: int | None = None, seed: int | None = None, jobs: int | None = None
    ) -> PipelineConfig:
        planner = {key: v for key, v in (("n", n), ("seed", seed), ("jobs", jobs)) if v is not None}
        cluster = {key: v for key, v in (("k", k), ("seed", seed)) if v is not None}
        return dataclasses.replace(
            self,
            planner=dataclasses.replace(self.planner, **planner),
            cluster=dataclasses.replace(self.cluster, **cluster),
        )

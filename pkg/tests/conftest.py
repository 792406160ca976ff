"""Shared fixtures: small in-memory scenes, the bundled corpus, a live mock judge."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import pytest

from divplan.config import PipelineConfig
from divplan.constraints import OracleConfig
from divplan.diversity import ClusterConfig
from divplan.planner import PlannerConfig
from divplan.vlm.client import JudgeClient, JudgeEndpoint
from divplan.vlm.mock_server import MockJudgeServer
from divplan.world import Environment, parse_scene

REPO = Path(__file__).resolve().parents[1]
CORPUS = REPO / "corpus"
FIXTURES = Path(__file__).resolve().parent / "fixtures"


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--update-golden",
        action="store_true",
        default=False,
        help="rewrite tests/fixtures/render_golden.json from the current renderer",
    )


@pytest.fixture
def update_golden(request: pytest.FixtureRequest) -> bool:
    return bool(request.config.getoption("--update-golden"))


# ---------------------------------------------------------------------------
# scenes
# ---------------------------------------------------------------------------


@pytest.fixture
def empty_scene() -> Environment:
    return parse_scene({"bounds": [0, 0, 10, 10], "obstacles": []}, source="empty")


@pytest.fixture
def gap_wall_scene() -> Environment:
    """Vertical wall at x in [4.5, 5.5] with a 1.5 m gap around y = 5."""
    return parse_scene(
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"shape": "rect", "rect": [4.5, 0.0, 5.5, 4.25], "label": "wall"},
                {"shape": "rect", "rect": [4.5, 5.75, 5.5, 10.0]},
            ],
        },
        source="gap_wall",
    )


@pytest.fixture
def pillar_scene() -> Environment:
    """One central round object: two homotopy classes between left and right."""
    return parse_scene(
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"shape": "circle", "center": [5.0, 5.0], "radius": 1.5, "label": "pillar"},
                {"shape": "circle", "center": [5.0, 9.0], "radius": 0.5, "label": "lamp"},
            ],
        },
        source="pillar",
    )


@pytest.fixture
def enclosed_scene() -> Environment:
    """Goal (8, 8) is boxed in by four walls."""
    return parse_scene(
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"shape": "rect", "rect": [6.5, 6.5, 9.5, 7.0]},
                {"shape": "rect", "rect": [6.5, 9.0, 9.5, 9.5]},
                {"shape": "rect", "rect": [6.5, 6.5, 7.0, 9.5]},
                {"shape": "rect", "rect": [9.0, 6.5, 9.5, 9.5]},
            ],
        },
        source="enclosed",
    )


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


@pytest.fixture
def fast_planner() -> PlannerConfig:
    return PlannerConfig(n=4, max_iterations=2000, prm_samples=120, prm_radius=2.5, collision_step=0.05)


@pytest.fixture
def fast_pipeline(fast_planner: PlannerConfig) -> PipelineConfig:
    return PipelineConfig(planner=fast_planner, cluster=ClusterConfig(k=3), oracle=OracleConfig(min_margin=1.0))


# ---------------------------------------------------------------------------
# live judge
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def live_judge() -> Iterator[MockJudgeServer]:
    """Real HTTP mock judge on an ephemeral port, chaos off."""
    with MockJudgeServer(port=0, chaos=0.0, seed=0) as server:
        yield server


@pytest.fixture
def judge_client(live_judge: MockJudgeServer) -> Iterator[JudgeClient]:
    endpoint = JudgeEndpoint(live_judge.url, model="mock", send_geometry=True, backoff=0.0)
    with JudgeClient(endpoint) as client:
        yield client

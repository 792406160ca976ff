"""Constraint parsing and the geometric oracle.

Guards: exact scores for each preference on hand-built paths, scores stay in
[0, 100], unknown objects fail before scoring, argmax ties break to the lowest
index, and the JSON form round-trips.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from divplan.constraints import (
    Constraint,
    OracleConfig,
    Proximity,
    Style,
    compute_metrics,
    constraint_from_dict,
    constraint_to_dict,
    oracle_score,
    oracle_scores,
    oracle_select,
)
from divplan.errors import InvariantViolation, ParseError, UnknownObject
from divplan.planner import Path
from divplan.world import Environment, parse_scene


@pytest.fixture
def room() -> Environment:
    return parse_scene(
        {
            "bounds": [0, 0, 10, 10],
            "obstacles": [
                {"shape": "rect", "rect": [0, 0, 10, 1], "label": "wall"},
                {"shape": "circle", "center": [2, 5], "radius": 0.5, "label": "chair"},
                {"shape": "circle", "center": [8, 5], "radius": 0.5, "label": "lamp"},
            ],
        },
        source="room",
    )


def _line(*pts: tuple[float, float]) -> Path:
    return Path(np.array(pts, dtype=float))


def _near(obj: str) -> Constraint:
    return Constraint(f"stay near the {obj}", Proximity("near", obj))


def _style(kind: str) -> Constraint:
    return Constraint(f"take a {kind} route", Style(kind))  # type: ignore[arg-type]


def _semicircle(n: int = 64) -> Path:
    a = np.linspace(math.pi, 0.0, n)
    return Path(np.column_stack([5 + 4 * np.cos(a), 5 + 4 * np.sin(a)]))


def _sine(amplitude: float = 1.5) -> Path:
    x = np.linspace(1.0, 9.0, 200)
    return Path(np.column_stack([x, 5 + amplitude * np.sin(2 * math.pi * (x - 1.0) / 4.0)]))


# ---------------------------------------------------------------------------
# JSON form
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "data",
    [
        {"instruction": "pass between the chair and the lamp",
         "spec": {"type": "proximity", "mode": "between", "object_a": "chair", "object_b": "lamp"}},
        {"instruction": "keep away from the wall", "spec": {"type": "proximity", "mode": "far", "object_a": "wall"}},
        {"instruction": "zig and zag", "spec": {"type": "style", "kind": "zigzag"}},
    ],
)
def test_constraint_json_round_trip(data: dict) -> None:
    assert constraint_to_dict(constraint_from_dict(data)) == data


def test_kind_and_category() -> None:
    c = constraint_from_dict({"instruction": "x", "spec": {"type": "style", "kind": "shortest"}})
    assert (c.kind, c.category) == ("shortest", "path_style")
    assert (_near("wall").kind, _near("wall").category) == ("near", "proximity")


@pytest.mark.parametrize(
    "data",
    [
        [],
        {"spec": {"type": "style", "kind": "curved"}},
        {"instruction": "  ", "spec": {"type": "style", "kind": "curved"}},
        {"instruction": "x", "spec": {"type": "speed", "kind": "fast"}},
        {"instruction": "x", "spec": {"type": "proximity", "mode": "near", "object_a": 3}},
    ],
)
def test_malformed_constraints_fail_to_parse(data: object) -> None:
    with pytest.raises(ParseError):
        constraint_from_dict(data)


def test_proximity_arity_is_checked() -> None:
    with pytest.raises(InvariantViolation):
        Proximity("between", "chair")
    with pytest.raises(InvariantViolation):
        Proximity("near", "chair", "lamp")
    with pytest.raises(InvariantViolation):
        Style("loopy")  # type: ignore[arg-type]


def test_unknown_object_fails_before_scoring(room: Environment) -> None:
    with pytest.raises(UnknownObject, match="oven"):
        oracle_score(_line((1, 3), (9, 3)), room, _near("oven"))


# ---------------------------------------------------------------------------
# proximity
# ---------------------------------------------------------------------------


def test_near_and_far_on_parallel_path(room: Environment) -> None:
    path = _line((1, 3), (9, 3))  # distance 2 from the wall everywhere
    assert oracle_score(path, room, _near("wall")) == pytest.approx(100 * math.exp(-2))
    far = Constraint("avoid the wall", Proximity("far", "wall"))
    assert oracle_score(path, room, far) == pytest.approx(100 * (1 - math.exp(-2)))
    assert oracle_score(path, room, far, OracleConfig(sigma=2.0)) == pytest.approx(100 * (1 - math.exp(-1)))


def test_closer_path_scores_higher_for_near(room: Environment) -> None:
    close = _line((1, 1.5), (9, 1.5))
    distant = _line((1, 8), (9, 8))
    scores = oracle_scores([distant, close], room, _near("wall"))
    assert scores[1] > scores[0]
    assert oracle_select([distant, close], room, _near("wall"))[0] == 1


def test_far_uses_raw_waypoints(room: Environment) -> None:
    # one raw vertex touches the chair; resampling alone could miss it
    path = _line((1, 9), (2, 5.5), (3, 9))
    far = Constraint("avoid the chair", Proximity("far", "chair"))
    assert oracle_score(path, room, far) == pytest.approx(0.0)


def test_between_requires_crossing_outside_both_objects(room: Environment) -> None:
    between = Constraint("go between the chair and the lamp", Proximity("between", "chair", "lamp"))
    assert oracle_score(_line((5, 2), (5, 9)), room, between) == 100.0
    assert oracle_score(_line((1, 2), (9, 2)), room, between) == 0.0
    # crosses the centroid segment only inside the chair
    assert oracle_score(_line((2.2, 2), (2.2, 9)), room, between) == 0.0
    mt = compute_metrics(_line((5, 2), (5, 9)), room, between)
    assert mt.between_crossing
    assert set(mt.min_obj_distance) == {"chair", "lamp"}


# ---------------------------------------------------------------------------
# path style
# ---------------------------------------------------------------------------


def test_straight(room: Environment) -> None:
    assert oracle_score(_line((1, 5), (9, 5)), room, _style("straight")) == pytest.approx(100.0)
    # length 10 over chord 6
    bent = _line((2, 2), (5, 6), (8, 2))
    assert oracle_score(bent, room, _style("straight")) == pytest.approx(100 * (2 - 10 / 6))
    loop = _line((2, 2), (5, 6), (2, 2))
    assert oracle_score(loop, room, _style("straight")) == 0.0


def test_straight_slack_narrows_the_clamp(room: Environment) -> None:
    kink = _line((1, 5), (5, 6), (9, 5))
    s = 2 * math.hypot(4, 1) / 8
    assert oracle_score(kink, room, _style("straight")) == pytest.approx(100 * (2 - s))
    tight = OracleConfig(straight_slack=0.1)
    assert oracle_score(kink, room, _style("straight"), tight) == pytest.approx(100 * (1 - (s - 1) / 0.1))
    assert oracle_score(_line((2, 2), (5, 6), (8, 2)), room, _style("straight"), tight) == 0.0


def test_shortest_is_relative_to_the_candidate_set(room: Environment) -> None:
    short = _line((2, 2), (8, 2))
    long = _line((2, 2), (2, 8), (8, 8), (8, 2))
    assert oracle_scores([short, long], room, _style("shortest")) == pytest.approx([100.0, 100 * 6 / 18])
    assert oracle_score(long, room, _style("shortest")) == pytest.approx(100.0)


def test_curved_prefers_one_sweeping_bend(room: Environment) -> None:
    arc = oracle_score(_semicircle(), room, _style("curved"))
    assert arc > 90.0
    assert oracle_score(_line((1, 5), (9, 5)), room, _style("curved")) == 0.0
    assert oracle_score(_sine(), room, _style("curved")) < 0.5 * arc


def test_zigzag_prefers_alternating_bends(room: Environment) -> None:
    wiggle = _sine()
    mt = compute_metrics(wiggle, room, _style("zigzag"))
    assert mt.curvature_sign_flips == 3
    assert mt.straightness > 1.2
    assert oracle_score(wiggle, room, _style("zigzag")) == pytest.approx(100.0)
    assert oracle_score(_semicircle(), room, _style("zigzag")) == 0.0
    # flips present but barely longer than the chord
    flat = oracle_score(_sine(amplitude=0.15), room, _style("zigzag"))
    assert flat < 50.0


def test_scores_stay_in_range(room: Environment) -> None:
    rng = np.random.default_rng(8)
    paths = [Path(np.vstack([[1, 5], rng.uniform(1.5, 9.5, size=(5, 2)), [9, 5]])) for _ in range(20)]
    constraints = [
        _near("lamp"),
        Constraint("far", Proximity("far", "chair")),
        Constraint("between", Proximity("between", "chair", "lamp")),
        *(_style(k) for k in ("straight", "curved", "zigzag", "shortest")),
    ]
    for c in constraints:
        for s in oracle_scores(paths, room, c):
            assert 0.0 <= s <= 100.0


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def test_oracle_select_ties_go_to_lowest_index(room: Environment) -> None:
    p = _line((1, 5), (9, 5))
    index, scores = oracle_select([p, p, p], room, _style("straight"))
    assert index == 0
    assert scores == [100.0, 100.0, 100.0]


def test_oracle_select_rejects_empty(room: Environment) -> None:
    with pytest.raises(InvariantViolation):
        oracle_select([], room, _style("straight"))


@pytest.mark.parametrize("kwargs", [{"sigma": 0}, {"zigzag_ramp": (1.2, 1.0)}, {"m": 1}, {"straight_slack": 0}, {"min_margin": 0.5}])
def test_oracle_config_validation(kwargs: dict) -> None:
    with pytest.raises(InvariantViolation):
        OracleConfig(**kwargs)

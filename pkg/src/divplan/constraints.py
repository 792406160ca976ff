"""Motion preferences and the geometric oracle that scores paths against them.

Two preference categories:

  proximity   near A | far from A | between B and C      (named scene objects)
  path_style  straight | curved | zigzag | shortest

A ``Constraint`` pairs one structured preference with the free-form
instruction text shown to a remote judge. The oracle never reads the text; it
maps ``PathMetrics`` to a score in [0, 100]:

  near      100 * exp(-mean_distance / sigma)
  far       100 * (1 - exp(-min_distance / sigma))
  between   100 if the path crosses the centroid segment between B and C, else 0
  straight  100 * clamp(1 - (straightness - 1) / slack, 0, 1)     (slack 1: 2 - straightness)
  shortest  100 * shortest_candidate_length / length
  curved    100 * clamp(total_turning / pi, 0, 1) / (1 + sign_flips)
  zigzag    100 * min(1, sign_flips / 3) * clamp((straightness - 1) / 0.2, 0, 1)

"curved" rewards a single sweeping bend and "zigzag" rewards alternating
bends on a detour; their thresholds and the straightness slack live in
``OracleConfig``. ``min_margin`` is the best-to-runner-up score ratio a
record needs before annotation accepts the oracle pick as ground truth.

Constraint JSON (inside dataset records)::

    {"instruction": "...", "spec": {"type": "proximity", "mode": "near", "object_a": "sofa"}}
    {"instruction": "...", "spec": {"type": "style", "kind": "zigzag"}}
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from divplan.diversity import resample
from divplan.errors import InvariantViolation, ParseError
from divplan.planner import Path
from divplan.world import Environment

ProximityMode = Literal["near", "far", "between"]
StyleKind = Literal["straight", "curved", "zigzag", "shortest"]
Category = Literal["proximity", "path_style"]

PROXIMITY_MODES: tuple[ProximityMode, ...] = ("near", "far", "between")
STYLE_KINDS: tuple[StyleKind, ...] = ("straight", "curved", "zigzag", "shortest")
CONSTRAINT_KINDS: tuple[str, ...] = PROXIMITY_MODES + STYLE_KINDS


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Proximity:
    mode: ProximityMode
    object_a: str
    object_b: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in PROXIMITY_MODES:
            raise InvariantViolation(f"proximity mode must be one of {PROXIMITY_MODES}, got {self.mode!r}")
        if self.mode == "between" and not self.object_b:
            raise InvariantViolation("proximity 'between' needs object_b")
        if self.mode != "between" and self.object_b is not None:
            raise InvariantViolation(f"proximity {self.mode!r} takes one object, got object_b={self.object_b!r}")

    @property
    def objects(self) -> tuple[str, ...]:
        return (self.object_a,) if self.object_b is None else (self.object_a, self.object_b)


@dataclass(frozen=True)
class Style:
    kind: StyleKind

    def __post_init__(self) -> None:
        if self.kind not in STYLE_KINDS:
            raise InvariantViolation(f"style kind must be one of {STYLE_KINDS}, got {self.kind!r}")

    @property
    def objects(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Constraint:
    instruction: str
    spec: Proximity | Style

    @property
    def kind(self) -> str:
        return self.spec.mode if isinstance(self.spec, Proximity) else self.spec.kind

    @property
    def category(self) -> Category:
        return "proximity" if isinstance(self.spec, Proximity) else "path_style"

    def validate(self, env: Environment) -> None:
        """Raise UnknownObject if the preference names an object ``env`` lacks."""
        for name in self.spec.objects:
            env.obstacle_named(name)


@dataclass(frozen=True)
class OracleConfig:
    sigma: float = 1.0
    turn_eps: float = 0.05
    curved_full_turn: float = math.pi
    zigzag_full_flips: int = 3
    zigzag_ramp: tuple[float, float] = (1.0, 1.2)
    straight_slack: float = 1.0
    m: int = 32
    min_margin: float = 2.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise InvariantViolation(f"oracle sigma must be > 0, got {self.sigma!r}")
        if self.turn_eps < 0 or not self.curved_full_turn > 0 or self.zigzag_full_flips < 1:
            raise InvariantViolation("oracle turn thresholds must be positive")
        lo, hi = self.zigzag_ramp
        if not hi > lo:
            raise InvariantViolation(f"zigzag_ramp must increase, got {self.zigzag_ramp!r}")
        if self.m < 2:
            raise InvariantViolation(f"oracle m must be >= 2, got {self.m!r}")
        if not self.straight_slack > 0:
            raise InvariantViolation(f"straight_slack must be > 0, got {self.straight_slack!r}")
        if not self.min_margin >= 1:
            raise InvariantViolation(f"min_margin must be >= 1, got {self.min_margin!r}")


@dataclass(frozen=True)
class PathMetrics:
    length: float
    chord: float
    straightness: float
    total_turning: float
    curvature_sign_flips: int
    min_obj_distance: dict[str, float] = field(default_factory=dict)
    mean_obj_distance: dict[str, float] = field(default_factory=dict)
    between_crossing: bool = False


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def constraint_from_dict(data: Any, where: str = "constraint") -> Constraint:
    if not isinstance(data, dict):
        raise ParseError(f"{where} must be an object, got {data!r}")
    instruction = data.get("instruction")
    spec = data.get("spec")
    if not isinstance(instruction, str) or not instruction.strip():
        raise ParseError(f"{where}.instruction must be a non-empty string, got {instruction!r}")
    if not isinstance(spec, dict):
        raise ParseError(f"{where}.spec must be an object, got {spec!r}")
    kind = spec.get("type")
    if kind == "proximity":
        a, b = spec.get("object_a"), spec.get("object_b")
        if not isinstance(a, str) or (b is not None and not isinstance(b, str)):
            raise ParseError(f"{where}.spec objects must be strings, got {a!r}, {b!r}")
        return Constraint(instruction, Proximity(spec.get("mode"), a, b))  # type: ignore[arg-type]
    if kind == "style":
        return Constraint(instruction, Style(spec.get("kind")))  # type: ignore[arg-type]
    raise ParseError(f"{where}.spec.type must be 'proximity' or 'style', got {kind!r}")


def constraint_to_dict(c: Constraint) -> dict[str, Any]:
    if isinstance(c.spec, Proximity):
        spec: dict[str, Any] = {"type": "proximity", "mode": c.spec.mode, "object_a": c.spec.object_a}
        if c.spec.object_b is not None:
            spec["object_b"] = c.spec.object_b
    else:
        spec = {"type": "style", "kind": c.spec.kind}
    return {"instruction": c.instruction, "spec": spec}


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _turns(w: np.ndarray) -> np.ndarray:
    """Signed heading change at every interior waypoint, wrapped to (-pi, pi]."""
    d = np.diff(w, axis=0)
    d = d[np.hypot(d[:, 0], d[:, 1]) > 0]
    if len(d) < 2:
        return np.empty(0)
    heading = np.arctan2(d[:, 1], d[:, 0])
    return (np.diff(heading) + math.pi) % (2 * math.pi) - math.pi


def _sign_flips(turns: np.ndarray, eps: float) -> int:
    signs = np.sign(turns[np.abs(turns) > eps])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _crosses_between(w: np.ndarray, env: Environment, a: str, b: str) -> bool:
    """Does polyline ``w`` cross the centroid segment a->b at a point outside both objects?"""
    ca = env.obstacle_named(a).shape.centroid().as_array()
    cb = env.obstacle_named(b).shape.centroid().as_array()
    r = cb - ca
    p, q = w[:-1], w[1:]
    s = q - p
    denom = r[0] * s[:, 1] - r[1] * s[:, 0]
    rel = p - ca
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * s[:, 1] - rel[:, 1] * s[:, 0]) / denom  # along a->b
        u = (rel[:, 0] * r[1] - rel[:, 1] * r[0]) / denom  # along the path segment
    hit = (denom != 0) & (t > 0) & (t < 1) & (u >= 0) & (u <= 1)
    if not np.any(hit):
        return False
    xs = ca + t[hit, None] * r
    outside = (env.objects[a].shape.distance(xs) > 0) & (env.objects[b].shape.distance(xs) > 0)
    return bool(np.any(outside))


def compute_metrics(
    path: Path, env: Environment, constraint: Constraint, m: int = 32, *, turn_eps: float = 0.05
) -> PathMetrics:
    constraint.validate(env)
    w = path.waypoints
    rs = resample(path, m).waypoints
    length = path.length
    chord = float(np.hypot(*(w[-1] - w[0])))
    if chord > 0:
        straightness = max(1.0, length / chord)
    else:
        straightness = 1.0 if length == 0 else math.inf
    turns = _turns(rs)

    # min over resampled and raw waypoints, mean over the uniform resampling
    samples = np.concatenate([rs, w])
    mins: dict[str, float] = {}
    means: dict[str, float] = {}
    for name in constraint.spec.objects:
        shape = env.objects[name].shape
        mins[name] = float(shape.distance(samples).min())
        means[name] = float(shape.distance(rs).mean())

    crossing = False
    spec = constraint.spec
    if isinstance(spec, Proximity) and spec.mode == "between":
        assert spec.object_b is not None
        crossing = _crosses_between(w, env, spec.object_a, spec.object_b)

    return PathMetrics(
        length=length,
        chord=chord,
        straightness=straightness,
        total_turning=float(np.abs(turns).sum()),
        curvature_sign_flips=_sign_flips(turns, turn_eps),
        min_obj_distance=mins,
        mean_obj_distance=means,
        between_crossing=crossing,
    )


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def score_metrics(
    mt: PathMetrics, constraint: Constraint, cfg: OracleConfig, shortest_length: float | None = None
) -> float:
    spec = constraint.spec
    if isinstance(spec, Proximity):
        if spec.mode == "near":
            return 100.0 * math.exp(-mt.mean_obj_distance[spec.object_a] / cfg.sigma)
        if spec.mode == "far":
            return 100.0 * (1.0 - math.exp(-mt.min_obj_distance[spec.object_a] / cfg.sigma))
        return 100.0 if mt.between_crossing else 0.0

    if spec.kind == "straight":
        return 100.0 * _clamp01(1.0 - (mt.straightness - 1.0) / cfg.straight_slack)
    if spec.kind == "shortest":
        if mt.length == 0:
            return 100.0
        best = mt.length if shortest_length is None else min(shortest_length, mt.length)
        return 100.0 * best / mt.length
    if spec.kind == "curved":
        return 100.0 * _clamp01(mt.total_turning / cfg.curved_full_turn) / (1 + mt.curvature_sign_flips)
    lo, hi = cfg.zigzag_ramp
    flips = min(1.0, mt.curvature_sign_flips / cfg.zigzag_full_flips)
    return 100.0 * flips * _clamp01((mt.straightness - lo) / (hi - lo))


def oracle_score(
    path: Path,
    env: Environment,
    constraint: Constraint,
    cfg: OracleConfig | None = None,
    shortest_length: float | None = None,
) -> float:
    """Score in [0, 100]. ``shortest_length`` is the shortest candidate's length
    for the "shortest" preference; without it a path is compared to itself."""
    cfg = cfg or OracleConfig()
    mt = compute_metrics(path, env, constraint, cfg.m, turn_eps=cfg.turn_eps)
    return score_metrics(mt, constraint, cfg, shortest_length)


def oracle_scores(
    candidates: Sequence[Path], env: Environment, constraint: Constraint, cfg: OracleConfig | None = None
) -> list[float]:
    cfg = cfg or OracleConfig()
    shortest = min(p.length for p in candidates) if candidates else None
    return [oracle_score(p, env, constraint, cfg, shortest) for p in candidates]


def oracle_select(
    candidates: Sequence[Path], env: Environment, constraint: Constraint, cfg: OracleConfig | None = None
) -> tuple[int, list[float]]:
    """Argmax of ``oracle_score``; ties go to the lowest index."""
    if not candidates:
        raise InvariantViolation("oracle_select needs at least one candidate")
    scores = oracle_scores(candidates, env, constraint, cfg)
    return int(np.argmax(scores)), scores

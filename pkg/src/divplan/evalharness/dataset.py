"""Dataset files.

A dataset directory holds ``dataset.jsonl`` (one record per line) plus the
scene files its records reference, with paths relative to the directory::

    {"id": "nav-03", "scene": "scenes/room_a.json", "start": [0.5, 0.5],
     "goal": [9.5, 7.5], "constraint": {"instruction": "...", "spec": {...}},
     "ground_truth_index": 2, "planner_seed": 3, "category": "proximity",
     "task_kind": "navigation", "k": 5, "n": 50, "margin": 3.4}

``problems.jsonl`` uses the same schema without the annotation fields
(``ground_truth_index``, ``k``, ``n``, ``margin``); ``annotate_problems``
in ``runner`` produces the former from the latter.
``margin`` is the oracle's best-to-runner-up ratio: null when the runner-up
scored 0, absent when ground truth was authored rather than measured.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Literal

from divplan.constraints import Category, Constraint, constraint_from_dict, constraint_to_dict
from divplan.errors import DivplanError, InvariantViolation, MissingScene, ParseError
from divplan.planner import PlanningProblem
from divplan.world import Environment, Point, load_scene

TaskKind = Literal["navigation", "manipulation"]
TASK_KINDS: tuple[TaskKind, ...] = ("navigation", "manipulation")
CATEGORIES: tuple[Category, ...] = ("proximity", "path_style")
DATASET_FILE = "dataset.jsonl"
PROBLEMS_FILE = "problems.jsonl"
DEFAULT_K = 5


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    scene: str  # as written in the file, relative to the dataset directory
    scene_path: Path
    start: Point
    goal: Point
    constraint: Constraint
    planner_seed: int
    category: Category
    task_kind: TaskKind
    ground_truth_index: int | None = None
    k: int | None = None
    n: int | None = None
    margin: float | None = None

    @property
    def annotated(self) -> bool:
        return self.ground_truth_index is not None


def _point(value: Any, what: str) -> Point:
    if not isinstance(value, list) or len(value) != 2 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ParseError(f"{what} must be [x, y], got {value!r}")
    return Point(float(value[0]), float(value[1]))


def _opt_int(data: dict[str, Any], key: str, where: str) -> int | None:
    v = data.get(key)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(f"{where}: {key} must be an integer, got {v!r}")
    return v


def _margin(data: dict[str, Any]) -> float | None:
    """Absent: never measured. null: the runner-up scored 0."""
    if "margin" not in data:
        return None
    return math.inf if data["margin"] is None else float(data["margin"])


def record_from_dict(data: Any, base: Path, where: str, require_truth: bool = True) -> DatasetRecord:
    if not isinstance(data, dict):
        raise ParseError(f"{where}: record must be a JSON object")
    rid = data.get("id")
    if not isinstance(rid, str) or not rid:
        raise ParseError(f"{where}: id must be a non-empty string, got {rid!r}")
    where = f"record {rid!r}"
    scene = data.get("scene")
    if not isinstance(scene, str) or not scene:
        raise ParseError(f"{where}: scene must be a file path, got {scene!r}")
    constraint = constraint_from_dict(data.get("constraint"), f"{where}.constraint")

    category = data.get("category")
    if category not in CATEGORIES:
        raise ParseError(f"{where}: category must be one of {CATEGORIES}, got {category!r}")
    if category != constraint.category:
        raise InvariantViolation(
            f"{where}: category {category!r} does not match a {constraint.kind!r} constraint"
        )
    task_kind = data.get("task_kind")
    if task_kind not in TASK_KINDS:
        raise ParseError(f"{where}: task_kind must be one of {TASK_KINDS}, got {task_kind!r}")

    seed = _opt_int(data, "planner_seed", where)
    if seed is None or seed < 0 or seed >= 2**64:
        raise ParseError(f"{where}: planner_seed must be a 64-bit unsigned integer, got {seed!r}")
    truth = _opt_int(data, "ground_truth_index", where)
    k = _opt_int(data, "k", where)
    n = _opt_int(data, "n", where)
    if require_truth and truth is None:
        raise ParseError(f"{where}: ground_truth_index is required")
    if truth is not None:
        limit = DEFAULT_K if k is None else k
        if not 0 <= truth < limit:
            raise InvariantViolation(f"{where}: ground_truth_index {truth} outside 0..{limit - 1} (k={limit})")
    margin = data.get("margin")
    if margin is not None and (not isinstance(margin, (int, float)) or isinstance(margin, bool) or not margin >= 0):
        raise ParseError(f"{where}: margin must be a non-negative number or null, got {margin!r}")

    return DatasetRecord(
        id=rid,
        scene=scene,
        scene_path=base / scene,
        start=_point(data.get("start"), f"{where}: start"),
        goal=_point(data.get("goal"), f"{where}: goal"),
        constraint=constraint,
        planner_seed=seed,
        category=category,
        task_kind=task_kind,
        ground_truth_index=truth,
        k=k,
        n=n,
        margin=_margin(data),
    )


def record_to_dict(r: DatasetRecord, base: Path | None = None) -> dict[str, Any]:
    """Inverse of ``record_from_dict``; with ``base`` the scene path is rewritten relative to it."""
    scene = r.scene if base is None else Path(os.path.relpath(r.scene_path, base)).as_posix()
    out: dict[str, Any] = {
        "id": r.id,
        "scene": scene,
        "start": [r.start.x, r.start.y],
        "goal": [r.goal.x, r.goal.y],
        "constraint": constraint_to_dict(r.constraint),
        "planner_seed": r.planner_seed,
        "category": r.category,
        "task_kind": r.task_kind,
    }
    if r.ground_truth_index is not None:
        out["ground_truth_index"] = r.ground_truth_index
    for key in ("k", "n"):
        if getattr(r, key) is not None:
            out[key] = getattr(r, key)
    if r.margin is not None:
        out["margin"] = round(r.margin, 4) if math.isfinite(r.margin) else None
    return out


def problem_of(record: DatasetRecord, env: Environment) -> PlanningProblem:
    return PlanningProblem(env, record.start, record.goal)


def _read(path: Path, require_truth: bool) -> list[DatasetRecord]:
    if not path.exists():
        raise ParseError(f"{path}: dataset file not found")
    base = path.parent
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    scenes: dict[Path, Environment] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{path.name}:{lineno}"
        try:
            data = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{where}: not valid JSON ({exc})") from exc
        rec = record_from_dict(data, base, where, require_truth)
        if rec.id in seen:
            raise InvariantViolation(f"{where}: duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.scene_path not in scenes:
            if not rec.scene_path.is_file():
                raise MissingScene(f"record {rec.id!r}: scene file {rec.scene_path} not found")
            scenes[rec.scene_path] = load_scene(rec.scene_path)
        env = scenes[rec.scene_path]
        try:
            rec.constraint.validate(env)
            problem_of(rec, env)
        except DivplanError as exc:
            raise type(exc)(f"record {rec.id!r}: {exc}") from exc
        records.append(rec)
    return records


def load_dataset(directory: str | Path, filename: str = DATASET_FILE) -> list[DatasetRecord]:
    """Validated annotated records in file order."""
    return _read(Path(directory) / filename, require_truth=True)


def load_problems(directory: str | Path, filename: str = PROBLEMS_FILE) -> list[DatasetRecord]:
    """Authored problems; annotation fields optional."""
    return _read(Path(directory) / filename, require_truth=False)


def save_dataset(records: list[DatasetRecord], directory: str | Path, filename: str = DATASET_FILE) -> Path:
    path = Path(directory) / filename
    path.write_text("".join(json.dumps(record_to_dict(r, path.parent)) + "\n" for r in records), encoding="utf-8")
    return path

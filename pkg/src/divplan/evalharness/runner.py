"""Per-problem pipeline and batch evaluation.

    record -> load scene -> generate_candidates -> cluster -> representatives
           -> judge (oracle, or remote method over HTTP) -> chosen == ground truth?

Everything is seeded by the record's ``planner_seed``, so the representatives a
record yields depend only on the record and the PipelineConfig. Errors are
data: a failing record carries the exception class name and message and the
batch moves on. Results are sorted by record id before aggregation, so worker
count never changes the output.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import threading
from collections import Counter
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
import pandas as pd
from tqdm import tqdm

from divplan.config import PipelineConfig
from divplan.constraints import Constraint, oracle_scores, oracle_select
from divplan.diversity import cluster, representatives_of
from divplan.errors import DivplanError, InvariantViolation
from divplan.evalharness.dataset import CATEGORIES, TASK_KINDS, DatasetRecord, problem_of
from divplan.planner import Path, generate_candidates
from divplan.render import CandidateSet
from divplan.vlm.client import JudgeClient
from divplan.vlm.prompts import Method
from divplan.vlm.select import Selection, select_path
from divplan.world import Environment, load_scene

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# judges
# ---------------------------------------------------------------------------


class Judge(Protocol):
    @property
    def name(self) -> str: ...

    budget: int | None

    def choose(self, candidates: CandidateSet, constraint: Constraint, cfg: PipelineConfig) -> Selection: ...

    def with_budget(self, budget: int | None) -> Judge: ...


@dataclass(frozen=True)
class OracleJudge:
    """Geometric oracle; reads paths, never images, so budgets do not apply."""

    budget: int | None = None

    @property
    def name(self) -> str:
        return "oracle"

    def choose(self, candidates: CandidateSet, constraint: Constraint, cfg: PipelineConfig) -> Selection:
        index, _ = oracle_select(candidates.paths, candidates.env, constraint, cfg.oracle)
        return Selection(index)

    def with_budget(self, budget: int | None) -> OracleJudge:
        return dataclasses.replace(self, budget=budget)


@dataclass(frozen=True)
class RemoteJudge:
    method: Method
    client: JudgeClient = field(compare=False)
    budget: int | None = None

    @property
    def name(self) -> str:
        return self.method

    def choose(self, candidates: CandidateSet, constraint: Constraint, cfg: PipelineConfig) -> Selection:
        return select_path(candidates, constraint, self.method, self.client, cfg.render, self.budget)

    def with_budget(self, budget: int | None) -> RemoteJudge:
        return dataclasses.replace(self, budget=budget)


# ---------------------------------------------------------------------------
# planning (cached across methods and budgets)
# ---------------------------------------------------------------------------


def record_config(record: DatasetRecord, cfg: PipelineConfig) -> PipelineConfig:
    """``cfg`` seeded by the record, with the record's annotated n and k if present."""
    out = cfg.with_seed(record.planner_seed)
    return out.with_overrides(n=record.n, k=record.k)


class PlanCache:
    """Thread-safe memo of (scene, representatives) per record and config."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._scenes: dict[str, Environment] = {}
        self._plans: dict[tuple[Any, ...], tuple[Environment, list[Path]] | DivplanError] = {}

    def scene(self, record: DatasetRecord) -> Environment:
        key = str(record.scene_path)
        with self._lock:
            env = self._scenes.get(key)
        if env is None:
            env = load_scene(record.scene_path)
            with self._lock:
                self._scenes.setdefault(key, env)
        return env

    def representatives(self, record: DatasetRecord, cfg: PipelineConfig) -> tuple[Environment, list[Path]]:
        rcfg = record_config(record, cfg)
        key = (record.id, record.scene, record.start, record.goal, rcfg.planner, rcfg.cluster)
        with self._lock:
            hit = self._plans.get(key)
        if hit is None:
            try:
                env = self.scene(record)
                candidates = generate_candidates(problem_of(record, env), rcfg.planner)
                reps = representatives_of(candidates, cluster(candidates, rcfg.cluster))
                hit = (env, reps)
            except DivplanError as exc:
                hit = exc
            with self._lock:
                self._plans.setdefault(key, hit)
        if isinstance(hit, DivplanError):
            raise hit
        return hit


def plan_representatives(record: DatasetRecord, cfg: PipelineConfig) -> tuple[Environment, list[Path]]:
    return PlanCache().representatives(record, cfg)


# ---------------------------------------------------------------------------
# per-record
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemResult:
    id: str
    category: str
    task_kind: str
    judge: str
    budget: int | None
    ground_truth_index: int | None
    chosen: int | None = None
    correct: bool | None = None
    tokens_used: int = 0
    requests: int = 0
    error: str | None = None
    error_message: str | None = None
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["warnings"] = list(self.warnings)
        return d


def run_problem(
    record: DatasetRecord, judge: Judge, cfg: PipelineConfig, cache: PlanCache | None = None
) -> ProblemResult:
    base = ProblemResult(
        id=record.id,
        category=record.category,
        task_kind=record.task_kind,
        judge=judge.name,
        budget=judge.budget,
        ground_truth_index=record.ground_truth_index,
    )
    cache = cache or PlanCache()
    try:
        env, reps = cache.representatives(record, cfg)
        candidates = CandidateSet.of(env, reps, cfg.render)
        sel = judge.choose(candidates, record.constraint, cfg)
    except DivplanError as exc:
        logger.debug("record %s failed: %s: %s", record.id, exc.kind, exc)
        return dataclasses.replace(base, error=exc.kind, error_message=str(exc))
    correct = None if record.ground_truth_index is None else sel.index == record.ground_truth_index
    return dataclasses.replace(
        base,
        chosen=sel.index,
        correct=correct,
        tokens_used=sel.tokens_used,
        requests=sel.requests,
        warnings=sel.warnings,
    )


# ---------------------------------------------------------------------------
# batch
# ---------------------------------------------------------------------------


def _accuracy(correct: int, attempted: int) -> float | None:
    return correct / attempted if attempted else None


@dataclass(frozen=True)
class EvalResult:
    judge: str
    budget: int | None
    results: tuple[ProblemResult, ...]

    def frame(self) -> pd.DataFrame:
        cols = [f.name for f in dataclasses.fields(ProblemResult)]
        return pd.DataFrame([r.to_dict() for r in self.results], columns=cols)

    def _split(self, df: pd.DataFrame, column: str, keys: Sequence[str]) -> dict[str, dict[str, Any]]:
        out: dict[str, dict[str, Any]] = {}
        ok = df[df["error"].isna()]
        for key in keys:
            part = ok[ok[column] == key]
            total = int((df[column] == key).sum())
            if total == 0:
                continue
            correct = int(part["correct"].fillna(False).astype(bool).sum())
            out[key] = {
                "total": total,
                "attempted": len(part),
                "correct": correct,
                "accuracy": _accuracy(correct, len(part)),
            }
        return out

    def summary(self) -> dict[str, Any]:
        df = self.frame()
        ok = df[df["error"].isna()]
        attempted = len(ok)
        correct = int(ok["correct"].fillna(False).astype(bool).sum())
        requests = int(ok["requests"].sum())
        tokens = int(ok["tokens_used"].sum())
        return {
            "judge": self.judge,
            "budget": self.budget,
            "total": len(df),
            "attempted": attempted,
            "errored": len(df) - attempted,
            "correct": correct,
            "accuracy": _accuracy(correct, attempted),
            "by_category": self._split(df, "category", CATEGORIES),
            "by_task_kind": self._split(df, "task_kind", TASK_KINDS),
            "tokens_used": tokens,
            "requests": requests,
            "mean_tokens": tokens / requests if requests else None,
            "errors_by_kind": dict(sorted(Counter(df["error"].dropna()).items())),
        }


def run_eval(
    records: Sequence[DatasetRecord],
    judge: Judge,
    cfg: PipelineConfig,
    jobs: int = 1,
    cache: PlanCache | None = None,
    progress: bool = False,
) -> EvalResult:
    """Every record through ``run_problem``; errors are recorded, never raised."""
    if not records:
        raise InvariantViolation("run_eval needs at least one record")
    cache = cache or PlanCache()
    bar = tqdm(total=len(records), desc=f"eval {judge.name}", disable=not progress, leave=False)

    def one(record: DatasetRecord) -> ProblemResult:
        res = run_problem(record, judge, cfg, cache)
        bar.update(1)
        return res

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(one, records))
        else:
            results = [one(r) for r in records]
    finally:
        bar.close()
    results.sort(key=lambda r: r.id)
    return EvalResult(judge.name, judge.budget, tuple(results))


@dataclass(frozen=True)
class SweepRow:
    budget: int
    accuracy: float | None
    mean_tokens: float | None
    attempted: int
    errored: int
    errors_by_kind: dict[str, int]


def token_sweep(
    records: Sequence[DatasetRecord],
    judge: Judge,
    budgets: Sequence[int],
    cfg: PipelineConfig,
    jobs: int = 1,
    cache: PlanCache | None = None,
    progress: bool = False,
) -> tuple[list[SweepRow], list[EvalResult]]:
    """One ``run_eval`` per budget (ascending); planning is shared across budgets."""
    if list(budgets) != sorted(budgets) or not budgets:
        raise InvariantViolation(f"budgets must be a non-empty ascending list, got {list(budgets)}")
    cache = cache or PlanCache()
    rows: list[SweepRow] = []
    evals: list[EvalResult] = []
    for b in budgets:
        ev = run_eval(records, judge.with_budget(b), cfg, jobs, cache, progress)
        s = ev.summary()
        rows.append(SweepRow(b, s["accuracy"], s["mean_tokens"], s["attempted"], s["errored"], s["errors_by_kind"]))
        evals.append(ev)
    return rows, evals


# ---------------------------------------------------------------------------
# ground-truth annotation
# ---------------------------------------------------------------------------


def annotate_one(record: DatasetRecord, cfg: PipelineConfig, cache: PlanCache | None = None) -> DatasetRecord:
    """Stamp ground truth: the oracle's pick among the record's representatives.

    Raises InvariantViolation when the pick does not beat the runner-up by
    ``cfg.oracle.min_margin``. A lone representative, or a best score of 0,
    has margin 1.
    """
    env, reps = (cache or PlanCache()).representatives(record, cfg)
    scores = oracle_scores(reps, env, record.constraint, cfg.oracle)
    best = int(np.argmax(scores))
    rest = sorted((s for i, s in enumerate(scores) if i != best), reverse=True)
    runner_up = rest[0] if rest else scores[best]
    if scores[best] <= 0:
        margin = 1.0
    else:
        margin = scores[best] / runner_up if runner_up > 0 else math.inf
    if margin < cfg.oracle.min_margin:
        raise InvariantViolation(
            f"record {record.id!r}: oracle margin {margin:.2f}x below {cfg.oracle.min_margin:g}x "
            f"(scores {[round(s, 1) for s in scores]})"
        )
    rcfg = record_config(record, cfg)
    return dataclasses.replace(record, ground_truth_index=best, k=len(reps), n=rcfg.planner.n, margin=margin)


def annotate_problems(
    problems: Sequence[DatasetRecord], cfg: PipelineConfig, jobs: int = 1, progress: bool = False
) -> list[DatasetRecord]:
    """Annotated records in input order; problems that fail to plan or fall below
    the margin are dropped with a warning."""
    cache = PlanCache()
    bar = tqdm(total=len(problems), desc="annotate", disable=not progress, leave=False)

    def one(record: DatasetRecord) -> DatasetRecord | None:
        try:
            return annotate_one(record, cfg, cache)
        except DivplanError as exc:
            logger.warning("record %r not annotated: %s: %s", record.id, exc.kind, exc)
            return None
        finally:
            bar.update(1)

    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                out = list(pool.map(one, problems))
        else:
            out = [one(p) for p in problems]
    finally:
        bar.close()
    return [r for r in out if r is not None]

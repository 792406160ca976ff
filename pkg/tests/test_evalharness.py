"""Dataset files, annotation, batch evaluation and reports.

Guards:
  * every bundled problem loads and validates; the category and task mix is fixed
  * the shipped dataset covers every constraint kind and stays above the margin
  * malformed records fail with the right error class and name the record
  * annotate-then-evaluate with the oracle is exact, and so is the mock judge
  * failing records become error rows excluded from accuracy
  * worker count never changes results or report bytes
  * token sweeps spend more tokens as the budget grows
"""

from __future__ import annotations

import dataclasses
import json
import math
from collections import Counter
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import pytest

from divplan import planner
from divplan.config import PIPELINE_FILE, PipelineConfig
from divplan.constraints import OracleConfig
from divplan.diversity import ClusterConfig
from divplan.errors import (
    CandidateGenerationFailed,
    InvariantViolation,
    MissingScene,
    ParseError,
    UnknownObject,
)
from divplan.evalharness import runner
from divplan.evalharness.dataset import (
    DatasetRecord,
    load_dataset,
    load_problems,
    record_from_dict,
    record_to_dict,
    save_dataset,
)
from divplan.evalharness.report import (
    CATEGORY_CSV,
    METHOD_CSV,
    REPORT_CSV,
    REPORT_JSON,
    SWEEP_CSV,
    report_json,
    summary_markdown,
    write_report,
)
from divplan.evalharness.runner import (
    OracleJudge,
    PlanCache,
    RemoteJudge,
    annotate_one,
    annotate_problems,
    record_config,
    run_eval,
    run_problem,
    token_sweep,
)
from divplan.planner import PlannerConfig
from divplan.vlm.client import JudgeClient, JudgeEndpoint
from divplan.vlm.mock_server import MockJudgeServer
from divplan.world import load_scene

from .conftest import CORPUS

# accept any margin on the tiny scenes
CFG = PipelineConfig(
    planner=PlannerConfig(n=4, max_iterations=2000, prm_samples=120, prm_radius=2.5, collision_step=0.05),
    cluster=ClusterConfig(k=3),
    oracle=OracleConfig(min_margin=1.0),
)

PILLAR = {
    "bounds": [0, 0, 10, 10],
    "obstacles": [
        {"shape": "circle", "center": [5.0, 5.0], "radius": 1.5, "label": "pillar"},
        {"shape": "circle", "center": [5.0, 9.0], "radius": 0.5, "label": "lamp"},
    ],
}
ENCLOSED = {
    "bounds": [0, 0, 10, 10],
    "obstacles": [
        {"shape": "rect", "rect": [6.5, 6.5, 9.5, 7.0], "label": "box"},
        {"shape": "rect", "rect": [6.5, 9.0, 9.5, 9.5]},
        {"shape": "rect", "rect": [6.5, 6.5, 7.0, 9.5]},
        {"shape": "rect", "rect": [9.0, 6.5, 9.5, 9.5]},
    ],
}


def _problem(rid: str, seed: int, spec: dict[str, Any], **extra: Any) -> dict[str, Any]:
    category = "proximity" if spec["type"] == "proximity" else "path_style"
    return {
        "id": rid,
        "scene": "scenes/pillar.json",
        "start": [1.0, 5.0],
        "goal": [9.0, 5.0],
        "constraint": {"instruction": f"instruction for {rid}", "spec": spec},
        "planner_seed": seed,
        "category": category,
        "task_kind": "navigation" if category == "proximity" else "manipulation",
        **extra,
    }


PROBLEMS = [
    _problem("p-between", 3, {"type": "proximity", "mode": "between", "object_a": "pillar", "object_b": "lamp"}),
    _problem("p-curved", 5, {"type": "style", "kind": "curved"}),
    _problem("p-far", 2, {"type": "proximity", "mode": "far", "object_a": "pillar"}),
    _problem("p-near", 1, {"type": "proximity", "mode": "near", "object_a": "lamp"}),
    _problem("p-straight", 4, {"type": "style", "kind": "straight"}),
]
# goal sits inside a closed box
BOXED = _problem("p-boxed", 9, {"type": "style", "kind": "straight"}, scene="scenes/enclosed.json", goal=[8.0, 8.0])
TINY = PipelineConfig(
    planner=PlannerConfig(n=2, max_iterations=200, prm_samples=60, prm_radius=2.0), oracle=OracleConfig(min_margin=1.0)
)


def _write_dir(root: Path, lines: list[dict[str, Any]], filename: str = "problems.jsonl") -> Path:
    (root / "scenes").mkdir(parents=True, exist_ok=True)
    (root / "scenes" / "pillar.json").write_text(json.dumps(PILLAR))
    (root / "scenes" / "enclosed.json").write_text(json.dumps(ENCLOSED))
    (root / filename).write_text("".join(json.dumps(line) + "\n" for line in lines))
    return root


@pytest.fixture(scope="module")
def annotated(tmp_path_factory: pytest.TempPathFactory) -> tuple[Path, list[DatasetRecord]]:
    root = _write_dir(tmp_path_factory.mktemp("ds"), PROBLEMS)
    records = annotate_problems(load_problems(root), CFG)
    save_dataset(records, root)
    return root, load_dataset(root)


@pytest.fixture(scope="module")
def mock_client() -> Any:
    with MockJudgeServer(chaos=0.0, seed=0) as server:
        with JudgeClient(JudgeEndpoint(server.url, send_geometry=True, backoff=0.0)) as client:
            yield client


# ---------------------------------------------------------------------------
# bundled corpus
# ---------------------------------------------------------------------------


def test_bundled_problems_load_and_validate() -> None:
    problems = load_problems(CORPUS)
    assert len(problems) == 42
    assert Counter(p.category for p in problems) == {"proximity": 30, "path_style": 12}
    assert Counter(p.task_kind for p in problems) == {"navigation": 30, "manipulation": 12}
    styles = Counter(p.constraint.kind for p in problems if p.category == "path_style")
    assert styles == {"straight": 3, "curved": 3, "zigzag": 3, "shortest": 3}
    assert len({p.planner_seed for p in problems}) == 42
    assert not any(p.annotated for p in problems)
    # three-lane rooms cluster into 3, the rest into 2
    assert {p.k for p in problems} == {2, 3}


def test_bundled_dataset_covers_every_kind() -> None:
    records = load_dataset(CORPUS)
    pipeline = PipelineConfig.load(CORPUS / PIPELINE_FILE)
    assert len(records) >= 40
    assert {r.constraint.kind for r in records} == {
        "near", "far", "between", "straight", "curved", "zigzag", "shortest",
    }  # fmt: skip
    assert [r.id for r in records] == [p.id for p in load_problems(CORPUS)]
    assert pipeline.oracle.min_margin == 2.0
    for r in records:
        assert r.k is not None and 0 <= r.ground_truth_index < r.k
        assert r.n == pipeline.planner.n
        assert r.margin is None or r.margin >= pipeline.oracle.min_margin


def test_problems_file_is_not_a_dataset() -> None:
    with pytest.raises(ParseError, match="ground_truth_index is required"):
        load_dataset(CORPUS, "problems.jsonl")


# ---------------------------------------------------------------------------
# record validation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    ("mutate", "error", "match"),
    [
        (lambda d: d.update(category="path_style"), InvariantViolation, "does not match"),
        (lambda d: d.update(task_kind="flying"), ParseError, "task_kind"),
        (lambda d: d.update(planner_seed=-1), ParseError, "planner_seed"),
        (lambda d: d.update(planner_seed=True), ParseError, "planner_seed"),
        (lambda d: d.update(start=[1.0]), ParseError, "start"),
        (lambda d: d.update(start=[5.0, 5.0]), InvariantViolation, "p-near"),
        (lambda d: d["constraint"]["spec"].update(object_a="oven"), UnknownObject, "p-near"),
        (lambda d: d.update(scene="scenes/missing.json"), MissingScene, "p-near"),
        (lambda d: d.update(ground_truth_index=5, k=3), InvariantViolation, "outside"),
        (lambda d: d.update(margin="big"), ParseError, "margin"),
    ],
)
def test_malformed_records(tmp_path: Path, mutate: Any, error: type[Exception], match: str) -> None:
    rec = json.loads(json.dumps(PROBLEMS[3]))
    mutate(rec)
    root = _write_dir(tmp_path, [rec])
    with pytest.raises(error, match=match):
        load_problems(root)


def test_duplicate_ids_and_bad_json(tmp_path: Path) -> None:
    root = _write_dir(tmp_path, [PROBLEMS[0], PROBLEMS[0]])
    with pytest.raises(InvariantViolation, match="duplicate"):
        load_problems(root)
    (root / "problems.jsonl").write_text("{not json\n")
    with pytest.raises(ParseError, match="problems.jsonl:1"):
        load_problems(root)
    with pytest.raises(ParseError, match="not found"):
        load_dataset(tmp_path / "nowhere")


def test_blank_lines_are_skipped(tmp_path: Path) -> None:
    root = _write_dir(tmp_path, [PROBLEMS[0]])
    text = (root / "problems.jsonl").read_text()
    (root / "problems.jsonl").write_text("\n" + text + "\n\n")
    assert [r.id for r in load_problems(root)] == ["p-between"]


# ---------------------------------------------------------------------------
# annotation
# ---------------------------------------------------------------------------


def test_annotation_stamps_truth_and_sizes(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    _, records = annotated
    assert [r.id for r in records] == [p["id"] for p in PROBLEMS]
    for r in records:
        assert r.annotated
        assert r.n == 4
        assert r.k is not None and 1 <= r.k <= 3
        assert r.ground_truth_index is not None and 0 <= r.ground_truth_index < r.k
        assert r.margin is None or r.margin >= 1.0


def test_annotation_is_deterministic(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    _, records = annotated
    again = annotate_problems(load_problems(annotated[0]), CFG, jobs=3)
    assert [(r.ground_truth_index, r.k) for r in again] == [(r.ground_truth_index, r.k) for r in records]


def test_annotation_drops_unplannable_problems(tmp_path: Path) -> None:
    root = _write_dir(tmp_path, [PROBLEMS[4], BOXED])
    out = annotate_problems(load_problems(root), TINY)
    assert [r.id for r in out] == ["p-straight"]


@pytest.mark.parametrize(
    ("scores", "margin"),
    [
        ([90.0, 40.0, 10.0], 2.25),
        ([80.0, 0.0, 0.0], math.inf),
        ([60.0, 40.0, 10.0], None),
        ([0.0, 0.0, 0.0], None),
    ],
)
def test_annotation_rejects_picks_below_min_margin(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch, scores: list[float], margin: float | None
) -> None:
    root = _write_dir(tmp_path, [PROBLEMS[3]])
    problem = load_problems(root)[0]
    env = load_scene(root / "scenes" / "pillar.json")
    reps = [planner.Path(np.array([[1.0, 5.0], [5.0, y], [9.0, 5.0]])) for y in (8.0, 2.0, 0.5)]
    monkeypatch.setattr(PlanCache, "representatives", lambda self, record, cfg: (env, reps))
    monkeypatch.setattr(runner, "oracle_scores", lambda *args: list(scores))
    strict = dataclasses.replace(CFG, oracle=OracleConfig())
    if margin is None:
        with pytest.raises(InvariantViolation, match="below 2x"):
            annotate_one(problem, strict)
        assert annotate_problems([problem], strict) == []
    else:
        record = annotate_one(problem, strict)
        assert (record.ground_truth_index, record.k, record.margin) == (0, 3, pytest.approx(margin))


def test_lone_representative_is_not_ground_truth(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    root = _write_dir(tmp_path, [PROBLEMS[3]])
    env = load_scene(root / "scenes" / "pillar.json")
    lone = [planner.Path(np.array([[1.0, 5.0], [9.0, 5.0]]))]
    monkeypatch.setattr(PlanCache, "representatives", lambda self, record, cfg: (env, lone))
    with pytest.raises(InvariantViolation, match="margin 1.00x"):
        annotate_one(load_problems(root)[0], dataclasses.replace(CFG, oracle=OracleConfig()))


def test_save_dataset_rewrites_scene_paths(tmp_path: Path, annotated: tuple[Path, list[DatasetRecord]]) -> None:
    root, records = annotated
    other = tmp_path / "elsewhere"
    other.mkdir()
    path = save_dataset(records, other)
    first = json.loads(path.read_text().splitlines()[0])
    assert first["scene"].endswith("scenes/pillar.json") and first["scene"].startswith("..")
    reloaded = load_dataset(other)
    assert [record_to_dict(r, other) for r in reloaded] == [record_to_dict(r, other) for r in records]


def test_infinite_margin_is_written_as_null(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    root, records = annotated
    d = record_to_dict(dataclasses.replace(records[0], margin=float("inf")))
    assert d["margin"] is None
    again = record_from_dict(d, root, "x")
    assert again.margin == math.inf and again.ground_truth_index == records[0].ground_truth_index

    unmeasured = record_to_dict(dataclasses.replace(records[0], margin=None))
    assert "margin" not in unmeasured
    assert record_from_dict(unmeasured, root, "x").margin is None


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def test_oracle_evaluation_is_exact(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    _, records = annotated
    ev = run_eval(records, OracleJudge(), CFG)
    s = ev.summary()
    assert (s["total"], s["attempted"], s["errored"], s["correct"]) == (5, 5, 0, 5)
    assert s["accuracy"] == 1.0
    assert s["by_category"]["proximity"] == {"total": 3, "attempted": 3, "correct": 3, "accuracy": 1.0}
    assert s["by_task_kind"]["manipulation"]["total"] == 2
    assert s["mean_tokens"] is None and s["requests"] == 0


@pytest.mark.parametrize("method", ["single_image", "gallery", "visual_context"])
def test_mock_judge_matches_ground_truth(
    annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient, method: str
) -> None:
    _, records = annotated
    ev = run_eval(records, RemoteJudge(method, mock_client), CFG, jobs=2)  # type: ignore[arg-type]
    s = ev.summary()
    assert s["accuracy"] == 1.0
    assert s["requests"] == (10 if method == "visual_context" else 5)
    assert s["mean_tokens"] > 0


def test_multi_image_spends_one_request_per_candidate(
    annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient
) -> None:
    _, records = annotated
    s = run_eval(records, RemoteJudge("multi_image", mock_client), CFG).summary()
    assert s["requests"] == sum(r.k or 0 for r in records)
    assert s["errored"] == 0


def test_results_independent_of_jobs(annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient) -> None:
    _, records = annotated
    judge = RemoteJudge("single_image", mock_client)
    serial = run_eval(records, judge, CFG, jobs=1)
    parallel = run_eval(list(reversed(records)), judge, CFG, jobs=4)
    assert serial.results == parallel.results
    assert report_json([serial]) == report_json([parallel])


def test_errors_are_rows_not_exceptions(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    root, records = annotated
    boxed = record_from_dict({**BOXED, "ground_truth_index": 0}, root, "boxed")
    result = run_problem(boxed, OracleJudge(), TINY)
    assert result.error == "CandidateGenerationFailed"
    assert result.chosen is None and result.correct is None

    ev = run_eval([*records, boxed], OracleJudge(), CFG)
    s = ev.summary()
    assert (s["total"], s["attempted"], s["errored"]) == (6, 5, 1)
    assert s["accuracy"] == 1.0
    assert s["errors_by_kind"] == {"CandidateGenerationFailed": 1}


def test_chaos_judge_errors_every_record(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    _, records = annotated
    with MockJudgeServer(chaos=1.0, seed=1) as server:
        with JudgeClient(JudgeEndpoint(server.url, send_geometry=True, backoff=0.0)) as client:
            s = run_eval(records, RemoteJudge("single_image", client), CFG).summary()
    assert s["attempted"] == 0 and s["accuracy"] is None
    assert set(s["errors_by_kind"]) <= {"HallucinatedAnswer", "UnparseableResponse"}
    assert sum(s["errors_by_kind"].values()) == 5


def test_plan_cache_reuses_plans_and_errors(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    root, records = annotated
    cache = PlanCache()
    a = cache.representatives(records[0], CFG)
    b = cache.representatives(records[0], CFG)
    assert a[1] is b[1]

    boxed = record_from_dict(BOXED, root, "boxed", require_truth=False)
    with pytest.raises(CandidateGenerationFailed) as first:
        cache.representatives(boxed, TINY)
    with pytest.raises(CandidateGenerationFailed) as second:
        cache.representatives(boxed, TINY)
    assert first.value is second.value


def test_record_config_uses_record_seed_and_sizes(annotated: tuple[Path, list[DatasetRecord]]) -> None:
    _, records = annotated
    rcfg = record_config(records[0], CFG)
    assert rcfg.planner.seed == records[0].planner_seed == rcfg.cluster.seed
    assert (rcfg.planner.n, rcfg.cluster.k) == (records[0].n, records[0].k)


def test_run_eval_rejects_empty() -> None:
    with pytest.raises(InvariantViolation):
        run_eval([], OracleJudge(), CFG)


# ---------------------------------------------------------------------------
# token sweep + reports
# ---------------------------------------------------------------------------


def test_token_sweep_spends_more_with_bigger_budgets(
    annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient
) -> None:
    _, records = annotated
    rows, evals = token_sweep(records, RemoteJudge("single_image", mock_client), [250, 400, 2000], CFG)
    assert [r.budget for r in rows] == [250, 400, 2000]
    means = [r.mean_tokens for r in rows]
    assert all(m is not None for m in means)
    assert means == sorted(means) and means[0] < means[-1]
    assert all(r.accuracy == 1.0 for r in rows)
    assert [ev.budget for ev in evals] == [250, 400, 2000]


def test_token_sweep_tiny_budget_errors_as_rows(
    annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient
) -> None:
    _, records = annotated
    rows, _ = token_sweep(records, RemoteJudge("single_image", mock_client), [10], CFG)
    assert rows[0].errored == 5 and rows[0].errors_by_kind == {"BudgetTooSmall": 5}
    with pytest.raises(InvariantViolation):
        token_sweep(records, OracleJudge(), [400, 250], CFG)
    with pytest.raises(InvariantViolation):
        token_sweep(records, OracleJudge(), [], CFG)


def test_write_report_files(
    tmp_path: Path, annotated: tuple[Path, list[DatasetRecord]], mock_client: JudgeClient
) -> None:
    _, records = annotated
    evals = [run_eval(records, OracleJudge(), CFG), run_eval(records, RemoteJudge("gallery", mock_client), CFG)]
    sweep, _ = token_sweep(records, RemoteJudge("gallery", mock_client), [300, 1000], CFG)
    written = write_report(tmp_path / "out", evals, sweep)
    assert sorted(p.name for p in written) == sorted([REPORT_JSON, REPORT_CSV, METHOD_CSV, CATEGORY_CSV, SWEEP_CSV])

    per_record = pd.read_csv(tmp_path / "out" / REPORT_CSV)
    assert len(per_record) == 10
    assert set(per_record["judge"]) == {"oracle", "gallery"}
    methods = pd.read_csv(tmp_path / "out" / METHOD_CSV)
    assert methods["accuracy"].tolist() == [1.0, 1.0]
    cats = pd.read_csv(tmp_path / "out" / CATEGORY_CSV)
    assert set(cats["group"]) == {"proximity", "path_style", "navigation", "manipulation"}
    payload = json.loads((tmp_path / "out" / REPORT_JSON).read_text())
    assert [s["judge"] for s in payload["summaries"]] == ["oracle", "gallery"]
    assert len(payload["token_sweep"]) == 2

    md = summary_markdown(evals, sweep)
    assert "## Accuracy by judge" in md and "## Token sweep" in md


# ---------------------------------------------------------------------------
# full corpus
# ---------------------------------------------------------------------------


@pytest.mark.reproduction
def test_full_corpus_annotate_and_evaluate(tmp_path: Path) -> None:
    cfg = PipelineConfig.load(CORPUS / PIPELINE_FILE).with_overrides(jobs=4)
    authored = {r.id: r.ground_truth_index for r in load_dataset(CORPUS)}
    records = annotate_problems(load_problems(CORPUS), cfg, jobs=4)
    assert len(records) >= 40
    assert len({r.constraint.kind for r in records}) == 7
    for r in records:
        assert r.margin is not None and r.margin >= cfg.oracle.min_margin, r.id
        assert r.ground_truth_index == authored[r.id], r.id
    dataset_dir = tmp_path / "dataset"
    dataset_dir.mkdir()
    save_dataset(records, dataset_dir)
    records = load_dataset(dataset_dir)

    cache = PlanCache()
    oracle = run_eval(records, OracleJudge(), cfg, jobs=4, cache=cache)
    assert oracle.summary()["accuracy"] == 1.0
    with MockJudgeServer(chaos=0.0) as server:
        with JudgeClient(JudgeEndpoint(server.url, send_geometry=True, backoff=0.0)) as client:
            remote = run_eval(records, RemoteJudge("single_image", client), cfg, jobs=4, cache=cache)
    assert remote.summary()["accuracy"] == 1.0
    written = write_report(tmp_path / "report", [oracle, remote])
    assert all(p.exists() for p in written)

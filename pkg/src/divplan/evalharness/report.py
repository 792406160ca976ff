"""Report files for an evaluation run.

    eval_report.json          summaries per judge (+ sweep), per-record results
    eval_report.csv           one row per (judge, budget, record)
    method_comparison.csv     one row per judge: overall accuracy and tokens
    category_comparison.csv   one row per (judge, category)
    token_sweep.csv           one row per budget (only when a sweep ran)

JSON is written with sorted keys and fixed float rounding, so two runs with
the same seeds and judge produce byte-identical files.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Any

import pandas as pd

from divplan.evalharness.runner import EvalResult, SweepRow

REPORT_JSON = "eval_report.json"
REPORT_CSV = "eval_report.csv"
METHOD_CSV = "method_comparison.csv"
CATEGORY_CSV = "category_comparison.csv"
SWEEP_CSV = "token_sweep.csv"


def _round(value: Any) -> Any:
    if isinstance(value, float):
        return round(value, 6)
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_round(v) for v in value]
    return value


def results_frame(evals: Sequence[EvalResult]) -> pd.DataFrame:
    frames = [ev.frame() for ev in evals]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    if not df.empty:
        df["warnings"] = df["warnings"].map("; ".join)
    return df


def method_table(evals: Sequence[EvalResult]) -> pd.DataFrame:
    rows = []
    for ev in evals:
        s = ev.summary()
        rows.append(
            {
                "judge": s["judge"],
                "budget": s["budget"],
                "total": s["total"],
                "attempted": s["attempted"],
                "errored": s["errored"],
                "correct": s["correct"],
                "accuracy": s["accuracy"],
                "mean_tokens": s["mean_tokens"],
            }
        )
    return pd.DataFrame(rows)


def category_table(evals: Sequence[EvalResult]) -> pd.DataFrame:
    rows = []
    for ev in evals:
        s = ev.summary()
        for group in ("by_category", "by_task_kind"):
            for key, stats in s[group].items():
                rows.append({"judge": s["judge"], "budget": s["budget"], "group": key, **stats})
    return pd.DataFrame(rows, columns=["judge", "budget", "group", "total", "attempted", "correct", "accuracy"])


def sweep_table(rows: Sequence[SweepRow]) -> pd.DataFrame:
    df = pd.DataFrame([asdict(r) for r in rows])
    if not df.empty:
        df["errors_by_kind"] = df["errors_by_kind"].map(lambda d: json.dumps(d, sort_keys=True))
    return df


def report_json(evals: Sequence[EvalResult], sweep: Sequence[SweepRow] = ()) -> str:
    payload: dict[str, Any] = {
        "summaries": [ev.summary() for ev in evals],
        "results": [r.to_dict() for ev in evals for r in ev.results],
    }
    if sweep:
        payload["token_sweep"] = [asdict(r) for r in sweep]
    return json.dumps(_round(payload), indent=2, sort_keys=True) + "\n"


def write_report(out_dir: str | Path, evals: Sequence[EvalResult], sweep: Sequence[SweepRow] = ()) -> list[Path]:
    """Write every report file into ``out_dir``; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / REPORT_JSON, out / REPORT_CSV, out / METHOD_CSV, out / CATEGORY_CSV]
    written[0].write_text(report_json(evals, sweep), encoding="utf-8")
    results_frame(evals).to_csv(written[1], index=False)
    method_table(evals).to_csv(written[2], index=False)
    category_table(evals).to_csv(written[3], index=False)
    if sweep:
        written.append(out / SWEEP_CSV)
        sweep_table(sweep).to_csv(written[-1], index=False)
    return written


def summary_markdown(evals: Sequence[EvalResult], sweep: Sequence[SweepRow] = ()) -> str:
    """Console summary: method table, category split, optional sweep curve."""
    parts = ["## Accuracy by judge", method_table(evals).to_markdown(index=False, floatfmt=".3f")]
    cats = category_table(evals)
    if not cats.empty:
        parts += ["", "## Accuracy by group", cats.to_markdown(index=False, floatfmt=".3f")]
    if sweep:
        table = sweep_table(sweep).drop(columns=["errors_by_kind"])
        parts += ["", "## Token sweep", table.to_markdown(index=False, floatfmt=".3f")]
    return "\n".join(parts) + "\n"

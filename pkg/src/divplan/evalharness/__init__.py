"""Dataset loading, per-problem evaluation, ground-truth annotation and reports."""

from divplan.evalharness.dataset import DatasetRecord, load_dataset, load_problems, save_dataset
from divplan.evalharness.runner import (
    EvalResult,
    OracleJudge,
    ProblemResult,
    RemoteJudge,
    annotate_problems,
    run_eval,
    run_problem,
    token_sweep,
)

__all__ = [
    "DatasetRecord",
    "EvalResult",
    "OracleJudge",
    "ProblemResult",
    "RemoteJudge",
    "annotate_problems",
    "load_dataset",
    "load_problems",
    "run_eval",
    "run_problem",
    "save_dataset",
    "token_sweep",
]

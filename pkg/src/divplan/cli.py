"""divplan command line.

    divplan plan   --scene S --start x,y --goal x,y [--n 50] [--seed 0] [--out DIR]
    divplan select --scene S --start x,y --goal x,y --constraint C [--judge oracle|remote|mock]
    divplan render --scene S --candidates FILE [--method single|multi|context|gallery|all]
    divplan eval   DATASET_DIR [--judge ...] [--method single,gallery|all] [--budgets 200,400,800]
    divplan annotate PROBLEMS_DIR [--out DIR]
    divplan mock-judge [--port 8765] [--chaos 0.0]

Exit codes: 0 success, 1 usage error, 2 data or planning error, 3 judge error.
Failures print one JSON line ``{"error": ..., "kind": ...}`` to stderr.

Config precedence: flags > environment (``DIVPLAN_JUDGE_*``, ``.env``) >
``--config`` YAML > defaults. ``eval`` starts from the dataset's
``pipeline.yaml`` when no ``--config`` is given.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from collections.abc import Iterator, Sequence
from pathlib import Path
from typing import Any, NoReturn

from divplan.config import PIPELINE_FILE, PipelineConfig, load_env
from divplan.constraints import Constraint, constraint_from_dict, oracle_scores
from divplan.diversity import cluster, representatives_of
from divplan.errors import DivplanError, ParseError
from divplan.evalharness.dataset import load_dataset, load_problems, save_dataset
from divplan.evalharness.report import summary_markdown, write_report
from divplan.evalharness.runner import (
    EvalResult,
    Judge,
    OracleJudge,
    PlanCache,
    RemoteJudge,
    annotate_problems,
    run_eval,
    token_sweep,
)
from divplan.planner import Path as Candidate
from divplan.planner import PlanningProblem, dump_paths, generate_candidates, load_paths
from divplan.render import (
    CandidateSet,
    Image,
    render_gallery,
    render_highlight,
    render_single,
    render_trails,
)
from divplan.vlm.client import JudgeClient, JudgeEndpoint
from divplan.vlm.mock_server import MockJudgeServer
from divplan.vlm.prompts import METHODS, Method, resolve_method
from divplan.world import Environment, Point, load_scene

logger = logging.getLogger("divplan")

JUDGES = ("oracle", "remote", "mock")
DEFAULT_MOCK_PORT = 8765
CANDIDATES_FILE = "candidates.json"


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1, leaving 2 for data errors."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        print(json.dumps({"error": message, "kind": "UsageError"}), file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# flag parsing
# ---------------------------------------------------------------------------


def _point(text: str) -> Point:
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y got {text!r}") from None
    return Point(x, y)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _method(text: str) -> Method:
    try:
        return resolve_method(text)
    except DivplanError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _methods(text: str) -> list[Method]:
    if text == "all":
        return list(METHODS)
    try:
        return [resolve_method(m.strip()) for m in text.split(",") if m.strip()]
    except DivplanError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _constraint(text: str) -> Constraint:
    """Inline JSON object or a path to a JSON file."""
    source = text
    if not text.lstrip().startswith("{"):
        try:
            source = Path(text).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParseError(f"constraint file {text!r}: {exc.strerror}") from exc
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ParseError(f"--constraint is not valid JSON ({exc})") from exc
    return constraint_from_dict(data, "--constraint")


def _common() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, help="Base seed (default 0, or the --config value)")
    p.add_argument("--out", type=Path, default=Path("."), help="Output directory (default .)")
    p.add_argument("--config", type=Path, help="PipelineConfig YAML")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="Worker threads")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG")
    p.add_argument("-q", "--quiet", action="store_true", help="Errors only, no progress bars")
    return p


def _planning(p: argparse.ArgumentParser, candidates: bool = False) -> None:
    p.add_argument("--scene", type=Path, required=True, help="Scene JSON file")
    p.add_argument("--start", type=_point, help="x,y")
    p.add_argument("--goal", type=_point, help="x,y")
    p.add_argument("--n", type=int, help="Runs per planner (2n candidates at most)")
    p.add_argument("--k", type=int, help="Representatives kept after clustering")
    if candidates:
        p.add_argument("--candidates", type=Path, help="Candidate JSON (instead of --start/--goal)")


def _judging(p: argparse.ArgumentParser) -> None:
    p.add_argument("--judge", choices=JUDGES, default="oracle")
    p.add_argument("--url", help="Judge base URL (overrides DIVPLAN_JUDGE_URL)")
    p.add_argument("--model", help="Judge model name (overrides DIVPLAN_JUDGE_MODEL)")
    p.add_argument("--chaos", type=float, default=0.0, help="Mock judge corruption probability")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="divplan", description="Diverse path candidates judged from images")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    pp = sub.add_parser("plan", parents=[common], help="Generate raw candidates -> JSON")
    _planning(pp)

    ps = sub.add_parser("select", parents=[common], help="Plan, cluster and let a judge pick")
    _planning(ps, candidates=True)
    _judging(ps)
    ps.add_argument("--constraint", type=str, required=True, help="Constraint JSON or file")
    ps.add_argument("--method", type=_method, default="single_image", help="single|multi|context|gallery")
    ps.add_argument("--budget", type=int, help="Estimated token budget per request")

    pr = sub.add_parser("render", parents=[common], help="Render candidates in a query layout")
    pr.add_argument("--scene", type=Path, required=True)
    pr.add_argument("--candidates", type=Path, required=True)
    pr.add_argument("--method", type=_methods, default=["single_image"], help="single|multi|context|gallery|all")
    pr.add_argument("--format", choices=("png", "ppm"), default="png")

    pe = sub.add_parser("eval", parents=[common], help="Evaluate a judge on a dataset")
    pe.add_argument("dataset", type=Path, help="Directory with dataset.jsonl")
    _judging(pe)
    pe.add_argument("--method", type=_methods, default=["single_image"], help="Comma list or all")
    pe.add_argument("--budgets", type=_int_list, help="Ascending token budgets, e.g. 200,400,800")

    pa = sub.add_parser("annotate", parents=[common], help="problems.jsonl -> dataset.jsonl + pipeline.yaml")
    pa.add_argument("problems", type=Path, help="Directory with problems.jsonl")
    pa.add_argument("--n", type=int)
    pa.add_argument("--k", type=int)

    pm = sub.add_parser("mock-judge", parents=[common], help="Serve the oracle-backed judge over HTTP")
    pm.add_argument("--host", default="127.0.0.1")
    pm.add_argument("--port", type=int, default=DEFAULT_MOCK_PORT)
    pm.add_argument("--chaos", type=float, default=0.0)
    return p


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _setup_logging(args: argparse.Namespace) -> None:
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(stream=sys.stderr, level=level, format="[%(name)s] %(levelname)s %(message)s", force=True)


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet and sys.stderr.isatty()


def _config(args: argparse.Namespace, base: Path | None = None) -> PipelineConfig:
    if args.config is not None:
        cfg = PipelineConfig.load(args.config)
    elif base is not None and base.is_file():
        cfg = PipelineConfig.load(base)
    else:
        cfg = PipelineConfig()
    return cfg.with_overrides(n=getattr(args, "n", None), k=getattr(args, "k", None), jobs=args.jobs)


def _emit(payload: dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2))


def _save(image: Image, out: Path, stem: str, fmt: str = "png") -> Path:
    out.mkdir(parents=True, exist_ok=True)
    return image.save(out / f"{stem}.{fmt}")


def _problem(args: argparse.Namespace, env: Environment) -> PlanningProblem:
    if args.start is None or args.goal is None:
        _Parser(prog=f"divplan {args.cmd}").error("--start and --goal are required")
    return PlanningProblem(env, args.start, args.goal)


def _representatives(candidates: list[Candidate], cfg: PipelineConfig) -> list[Candidate]:
    return representatives_of(candidates, cluster(candidates, cfg.cluster))


@contextlib.contextmanager
def _judges(args: argparse.Namespace, cfg: PipelineConfig, methods: Sequence[Method]) -> Iterator[list[Judge]]:
    """Judges for ``args.judge``; a mock judge runs in-process for the duration."""
    if args.judge == "oracle":
        yield [OracleJudge()]
        return
    with contextlib.ExitStack() as stack:
        if args.judge == "mock":
            server = stack.enter_context(
                MockJudgeServer(chaos=args.chaos, seed=args.seed or 0, oracle=cfg.oracle, tokenizer=cfg.tokens)
            )
            endpoint = JudgeEndpoint(server.url, model=args.model or "mock", send_geometry=True)
        else:
            endpoint = JudgeEndpoint.from_env(base_url=args.url, model=args.model)
        client = stack.enter_context(JudgeClient(endpoint, cfg.tokens))
        yield [RemoteJudge(m, client) for m in methods]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = _config(args).with_overrides(seed=args.seed)
    env = load_scene(args.scene)
    candidates = generate_candidates(_problem(args, env), cfg.planner)
    args.out.mkdir(parents=True, exist_ok=True)
    target = args.out / CANDIDATES_FILE
    dump_paths(candidates, target)
    _emit({"candidates": len(candidates), "file": str(target)})
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    cfg = _config(args).with_overrides(seed=args.seed)
    env = load_scene(args.scene)
    constraint = _constraint(args.constraint)
    constraint.validate(env)
    if args.candidates is not None:
        candidates = load_paths(args.candidates)
    else:
        candidates = generate_candidates(_problem(args, env), cfg.planner)
    reps = _representatives(candidates, cfg)
    cands = CandidateSet.of(env, reps, cfg.render)

    with _judges(args, cfg, [args.method]) as judges:
        judge = judges[0].with_budget(args.budget)
        sel = judge.choose(cands, constraint, cfg)
    if isinstance(judge, OracleJudge):
        scores = dict(zip(cands.colors, oracle_scores(reps, env, constraint, cfg.oracle), strict=True))
    else:
        scores = sel.scores
    image = _save(render_highlight(env, reps, sel.index, cfg.render), args.out, "selected")
    dump_paths(reps, args.out / "representatives.json")
    _emit(
        {
            "chosen": sel.index,
            "color": cands.colors[sel.index],
            "judge": judge.name,
            "scores": {k: round(v, 2) for k, v in scores.items()},
            "tokens_used": sel.tokens_used,
            "warnings": list(sel.warnings),
            "image": str(image),
        }
    )
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    cfg = _config(args)
    env = load_scene(args.scene)
    paths = load_paths(args.candidates)
    cands = CandidateSet.of(env, paths, cfg.render)
    written: list[Path] = []
    for method in dict.fromkeys(args.method):
        if method in ("single_image", "visual_context"):
            written.append(_save(render_trails(env, paths, cfg.render), args.out, method, args.format))
        elif method == "multi_image":
            for i, (p, color) in enumerate(zip(paths, cands.colors, strict=True)):
                image = render_single(env, p, color, cfg.render)
                written.append(_save(image, args.out, f"multi_image_{i}_{color}", args.format))
        else:
            written.append(_save(render_gallery(env, paths, cfg.render), args.out, "gallery", args.format))
    _emit({"files": [str(w) for w in written]})
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config(args, base=args.dataset / PIPELINE_FILE)
    records = load_dataset(args.dataset)
    if not records:
        raise ParseError(f"{args.dataset}: dataset has no records")
    cache = PlanCache()
    evals: list[EvalResult] = []
    sweep_rows = []
    with _judges(args, cfg, args.method) as judges:
        for judge in judges:
            if args.budgets:
                rows, runs = token_sweep(records, judge, args.budgets, cfg, args.jobs, cache, _progress(args))
                sweep_rows.extend(rows)
                evals.extend(runs)
            else:
                evals.append(run_eval(records, judge, cfg, args.jobs, cache, _progress(args)))
    written = write_report(args.out, evals, sweep_rows)
    print(summary_markdown(evals, sweep_rows), end="")
    logger.info("wrote %s", ", ".join(str(w) for w in written))
    return 0


def cmd_annotate(args: argparse.Namespace) -> int:
    cfg = _config(args, base=args.problems / PIPELINE_FILE)
    problems = load_problems(args.problems)
    records = annotate_problems(problems, cfg, args.jobs, _progress(args))
    out = args.problems if args.out == Path(".") else args.out
    out.mkdir(parents=True, exist_ok=True)
    dataset = save_dataset(records, out)
    # jobs never changes results
    pipeline = cfg.with_overrides(jobs=1).dump(out / PIPELINE_FILE)
    kept = {r.id for r in records}
    _emit(
        {
            "annotated": len(records),
            "dropped": len(problems) - len(records),
            "dropped_ids": [p.id for p in problems if p.id not in kept],
            "dataset": str(dataset),
            "pipeline": str(pipeline),
        }
    )
    return 0


def cmd_mock_judge(args: argparse.Namespace) -> int:
    cfg = _config(args)
    try:
        server = MockJudgeServer(
            args.host, args.port, chaos=args.chaos, seed=args.seed or 0, oracle=cfg.oracle, tokenizer=cfg.tokens
        )
    except OSError as exc:
        print(json.dumps({"error": f"cannot bind {args.host}:{args.port}: {exc}", "kind": "BindError"}), file=sys.stderr)
        return 2
    except ValueError as exc:
        _Parser(prog="divplan mock-judge").error(str(exc))
    print(json.dumps({"url": server.url}), flush=True)
    with contextlib.suppress(KeyboardInterrupt):
        server.serve_forever()
    return 0


COMMANDS = {
    "plan": cmd_plan,
    "select": cmd_select,
    "render": cmd_render,
    "eval": cmd_eval,
    "annotate": cmd_annotate,
    "mock-judge": cmd_mock_judge,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args)
    load_env()
    try:
        return COMMANDS[args.cmd](args)
    except DivplanError as exc:
        print(json.dumps({"error": str(exc), "kind": exc.kind}), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))

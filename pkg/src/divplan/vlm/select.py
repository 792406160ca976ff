"""End-to-end selection for one candidate set: render -> prompt -> query -> parse.

  single_image    one trails image, one request, the judge names a color
  multi_image     one single-trail image per candidate, one request each (run
                  concurrently), argmax of the individual scores, ties -> lowest
                  index; failed candidates are skipped with a warning
  visual_context  stage 1 asks for a scene description, stage 2 re-sends the
                  trails image with that description prepended to the prompt
  gallery         one snapshot-grid image, the judge names a row
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

from divplan.constraints import Constraint, constraint_to_dict
from divplan.errors import AllQueriesFailed, JudgeError, UnparseableResponse
from divplan.render import CandidateSet, RenderConfig, render_gallery, render_single, render_trails
from divplan.vlm.client import JudgeClient, JudgeRequest, ScoreReport
from divplan.vlm.parsing import row_label
from divplan.vlm.prompts import DESCRIBE_PROMPT, Method, build_prompt
from divplan.vlm.tokens import fit_request
from divplan.world import scene_to_dict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Selection:
    index: int
    reports: tuple[ScoreReport | None, ...] = ()
    tokens_used: int = 0
    requests: int = 0
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def scores(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for r in self.reports:
            if r is not None:
                out.update(r.scores)
        return out


def _sidecar(
    candidates: CandidateSet, constraint: Constraint, labels: list[str], method: Method, **extra: Any
) -> dict[str, Any]:
    return {
        "method": method,
        "scene": scene_to_dict(candidates.env),
        "constraint": constraint_to_dict(constraint),
        "paths": [p.to_list() for p in candidates.paths],
        "labels": labels,
        "focus": None,
        "task": "score",
        **extra,
    }


def _one_shot(
    client: JudgeClient,
    candidates: CandidateSet,
    constraint: Constraint,
    method: Method,
    cfg: RenderConfig,
    budget: int | None,
) -> Selection:
    if method == "gallery":
        image = render_gallery(candidates.env, candidates.paths, cfg)
        labels = [row_label(i + 1) for i in range(len(candidates))]
    else:
        image = render_trails(candidates.env, candidates.paths, cfg)
        labels = list(candidates.colors)

    context: str | None = None
    tokens = requests = 0
    if method == "visual_context":
        images = [image] if budget is None else fit_request([image], DESCRIBE_PROMPT, budget, client.tokenizer)
        described = client.complete(
            DESCRIBE_PROMPT, images, _sidecar(candidates, constraint, labels, method, task="describe")
        )
        if not described.text.strip():
            raise UnparseableResponse("visual-context description came back empty")
        context = described.text
        tokens += described.prompt_tokens + described.completion_tokens
        requests += 1

    prompt = build_prompt(constraint.instruction, method, labels, context)
    report = client.query(
        JudgeRequest(method, (image,), prompt, tuple(labels), budget, _sidecar(candidates, constraint, labels, method))
    )
    if context is not None:
        report = replace(report, context=context)
    return Selection(report.chosen, (report,), tokens + report.tokens_used, requests + 1)


def _multi(
    client: JudgeClient, candidates: CandidateSet, constraint: Constraint, cfg: RenderConfig, budget: int | None
) -> Selection:
    labels = list(candidates.colors)

    def ask(i: int) -> ScoreReport | JudgeError:
        image = render_single(candidates.env, candidates.paths[i], labels[i], cfg)
        prompt = build_prompt(constraint.instruction, "multi_image", [labels[i]])
        sidecar = _sidecar(candidates, constraint, labels, "multi_image", focus=i)
        try:
            report = client.query(JudgeRequest("multi_image", (image,), prompt, (labels[i],), budget, sidecar))
        except JudgeError as exc:
            return exc
        if labels[i] not in report.scores:
            return UnparseableResponse(f"no score for {labels[i]!r} in {report.raw_response[:80]!r}")
        return report

    workers = min(client.endpoint.max_in_flight, len(candidates))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(ask, range(len(candidates))))
    else:
        outcomes = [ask(i) for i in range(len(candidates))]

    reports: list[ScoreReport | None] = []
    warnings: list[str] = []
    for i, out in enumerate(outcomes):
        if isinstance(out, JudgeError):
            msg = f"candidate {i} ({labels[i]}): {out.kind}: {out}"
            logger.warning("multi_image query failed for %s", msg)
            warnings.append(msg)
            reports.append(None)
        else:
            reports.append(out)
    scored = [(r.scores[labels[i]], i) for i, r in enumerate(reports) if r is not None]
    tokens = sum(r.tokens_used for r in reports if r is not None)
    if not scored:
        raise AllQueriesFailed(f"all {len(candidates)} multi_image queries failed: {'; '.join(warnings)}")
    best = max(s for s, _ in scored)
    index = min(i for s, i in scored if s == best)
    return Selection(index, tuple(reports), tokens, len(candidates), tuple(warnings))


def select_path(
    candidates: CandidateSet,
    constraint: Constraint,
    method: Method,
    client: JudgeClient,
    cfg: RenderConfig,
    budget: int | None = None,
) -> Selection:
    """Winning candidate index for ``method``; ``budget`` caps estimated tokens per request."""
    if method == "multi_image":
        return _multi(client, candidates, constraint, cfg, budget)
    return _one_shot(client, candidates, constraint, method, cfg, budget)

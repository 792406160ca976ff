"""Chat-completion judge client.

Wire format (POST ``{base_url}/chat/completions``)::

    {"model": "...", "max_tokens": 512,
     "messages": [{"role": "user", "content": [
         {"type": "text", "text": "<prompt>"},
         {"type": "image_url", "image_url": {"url": "data:image/png;base64,..."}}]}],
     "divplan_sidecar": {...}}          # only with JudgeEndpoint.send_geometry

Response: ``choices[0].message.content`` plus ``usage.prompt_tokens`` /
``usage.completion_tokens``.

Retries: connection errors, 429 and 5xx are retried ``retries`` times in total
with ``backoff * 2**attempt`` sleeps; any other status is refused at once.
In-flight requests are bounded by a semaphore, so one client can be shared by
every worker thread.
"""

from __future__ import annotations

import base64
import logging
import os
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import requests

from divplan.errors import InvariantViolation, JudgeRefused, TransportError, UnparseableResponse
from divplan.render import Image
from divplan.vlm.parsing import parse_response
from divplan.vlm.prompts import Method
from divplan.vlm.tokens import TokenizerConfig, fit_request, request_tokens, text_tokens

logger = logging.getLogger(__name__)

RETRY_STATUS = (429, 500, 502, 503, 504)
USER_AGENT = "divplan-judge-client/0.1"


@dataclass(frozen=True)
class JudgeEndpoint:
    base_url: str
    model: str = "judge"
    api_key: str | None = field(default=None, repr=False)
    timeout: float = 60.0
    max_in_flight: int = 4
    retries: int = 3
    backoff: float = 1.0
    max_completion_tokens: int = 512
    send_geometry: bool = False

    def __post_init__(self) -> None:
        if not self.base_url:
            raise InvariantViolation("judge base_url must be set")
        if self.max_in_flight < 1 or self.retries < 1:
            raise InvariantViolation("judge max_in_flight and retries must be >= 1")
        if not self.timeout > 0 or self.backoff < 0:
            raise InvariantViolation("judge timeout must be > 0 and backoff >= 0")

    @classmethod
    def from_env(cls, **overrides: Any) -> JudgeEndpoint:
        """Endpoint from ``DIVPLAN_JUDGE_*`` variables; non-None ``overrides`` win."""
        env: dict[str, Any] = {
            "base_url": os.environ.get("DIVPLAN_JUDGE_URL", ""),
            "model": os.environ.get("DIVPLAN_JUDGE_MODEL", "judge"),
            "api_key": os.environ.get("DIVPLAN_JUDGE_KEY") or None,
        }
        if "DIVPLAN_JUDGE_TIMEOUT" in os.environ:
            env["timeout"] = float(os.environ["DIVPLAN_JUDGE_TIMEOUT"])
        if "DIVPLAN_JUDGE_MAX_IN_FLIGHT" in os.environ:
            env["max_in_flight"] = int(os.environ["DIVPLAN_JUDGE_MAX_IN_FLIGHT"])
        env.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**env)

    @property
    def completions_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"


@dataclass(frozen=True)
class JudgeRequest:
    method: Method
    images: tuple[Image, ...]
    prompt: str
    labels: tuple[str, ...]
    max_tokens: int | None = None  # estimated request-token budget
    sidecar: dict[str, Any] | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.images:
            raise InvariantViolation(f"{self.method} request needs at least one image")
        if self.method != "multi_image" and len(self.images) != 1:
            raise InvariantViolation(f"{self.method} request carries exactly one image, got {len(self.images)}")
        if not self.labels:
            raise InvariantViolation("request needs at least one candidate label")


@dataclass(frozen=True)
class ScoreReport:
    scores: dict[str, float]
    chosen: int
    label: str
    raw_response: str
    prompt_tokens: int
    completion_tokens: int
    context: str | None = None

    @property
    def tokens_used(self) -> int:
        return self.prompt_tokens + self.completion_tokens


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    completion_tokens: int


def image_part(image: Image) -> dict[str, Any]:
    b64 = base64.b64encode(image.to_png()).decode("ascii")
    return {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}


class JudgeClient:
    def __init__(self, endpoint: JudgeEndpoint, tokenizer: TokenizerConfig | None = None) -> None:
        self.endpoint = endpoint
        self.tokenizer = tokenizer or TokenizerConfig()
        self.s = requests.Session()
        self.s.headers.update({"User-Agent": USER_AGENT, "Content-Type": "application/json"})
        if endpoint.api_key:
            self.s.headers["Authorization"] = f"Bearer {endpoint.api_key}"
        self._slots = threading.BoundedSemaphore(endpoint.max_in_flight)

    def close(self) -> None:
        self.s.close()

    def __enter__(self) -> JudgeClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    # -- transport ----------------------------------------------------------

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        ep = self.endpoint
        url = ep.completions_url
        last_err = None
        last_status: int | None = None
        for attempt in range(ep.retries):
            try:
                with self._slots:
                    r = self.s.post(url, json=body, timeout=ep.timeout)
                if r.status_code == 200:
                    try:
                        return r.json()
                    except ValueError as exc:
                        raise UnparseableResponse(f"judge returned non-JSON body: {r.text[:120]!r}") from exc
                if r.status_code not in RETRY_STATUS:
                    raise JudgeRefused(f"judge refused with HTTP {r.status_code}: {r.text[:200]!r}")
                last_err, last_status = f"HTTP {r.status_code}", r.status_code
            except requests.RequestException as e:
                last_err, last_status = str(e), None
            if attempt + 1 < ep.retries:
                logger.warning("judge attempt %d/%d failed (%s); retrying", attempt + 1, ep.retries, last_err)
                time.sleep(ep.backoff * (2**attempt))
        if last_status is not None:
            raise JudgeRefused(f"POST {url} failed after {ep.retries} tries: {last_err}")
        raise TransportError(f"POST {url} failed after {ep.retries} tries: {last_err}")

    def complete(
        self, prompt: str, images: Sequence[Image], sidecar: dict[str, Any] | None = None
    ) -> Completion:
        ep = self.endpoint
        content: list[dict[str, Any]] = [{"type": "text", "text": prompt}]
        content.extend(image_part(im) for im in images)
        body: dict[str, Any] = {
            "model": ep.model,
            "messages": [{"role": "user", "content": content}],
            "max_tokens": ep.max_completion_tokens,
        }
        if ep.send_geometry and sidecar is not None:
            body["divplan_sidecar"] = sidecar
        data = self._post(body)
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise UnparseableResponse(f"judge response has no choices[0].message.content: {str(data)[:120]!r}") from exc
        if not isinstance(text, str):
            raise UnparseableResponse(f"judge message content is not text: {text!r}")
        usage = data.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens")
        completion_tokens = usage.get("completion_tokens")
        if not isinstance(prompt_tokens, int):
            prompt_tokens = request_tokens(images, prompt, self.tokenizer)
        if not isinstance(completion_tokens, int):
            completion_tokens = text_tokens(text)
        return Completion(text, prompt_tokens, completion_tokens)

    # -- scoring ------------------------------------------------------------

    def query(self, request: JudgeRequest) -> ScoreReport:
        """Send one scoring request and parse the reply against ``request.labels``."""
        images: Sequence[Image] = request.images
        if request.max_tokens is not None:
            images = fit_request(images, request.prompt, request.max_tokens, self.tokenizer)
        reply = self.complete(request.prompt, images, request.sidecar)
        scores, label = parse_response(reply.text, request.labels)
        return ScoreReport(
            scores=scores,
            chosen=[lb.lower() for lb in request.labels].index(label),
            label=label,
            raw_response=reply.text,
            prompt_tokens=reply.prompt_tokens,
            completion_tokens=reply.completion_tokens,
        )

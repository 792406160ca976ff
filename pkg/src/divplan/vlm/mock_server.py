"""Oracle-backed judge server speaking the chat-completion wire format.

The mock never looks at pixels to decide. It reads the ``divplan_sidecar``
request field (scene, constraint, candidate paths, labels, focus index),
scores the candidates with the geometric oracle and answers in the canonical
text format of ``format_scores``. Images are still decoded, and their sizes
drive the reported ``usage.prompt_tokens``, so budget sweeps see real numbers.

  GET  /health                               {"status": "ok"}
  POST /chat/completions, /v1/chat/completions

``chaos`` is the probability that a reply is corrupted: half of the corrupted
replies name a candidate that was not presented, half carry no scores at all.
The corruption stream is seeded.

Usage::

    with MockJudgeServer(port=0, chaos=0.0) as server:
        endpoint = JudgeEndpoint(server.url, send_geometry=True)
"""

from __future__ import annotations

import base64
import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

import numpy as np

from divplan.constraints import OracleConfig, constraint_from_dict, oracle_scores
from divplan.errors import DivplanError
from divplan.planner import Path
from divplan.render import Image
from divplan.vlm.parsing import COLOR_WORDS, format_scores, row_label
from divplan.vlm.tokens import TokenizerConfig, request_tokens, text_tokens
from divplan.world import parse_scene

logger = logging.getLogger(__name__)

COMPLETION_PATHS = ("/chat/completions", "/v1/chat/completions")
MALFORMED_REPLY = "I am not able to compare these trajectories reliably from this picture."


class _BadRequest(Exception):
    def __init__(self, status: int, message: str) -> None:
        super().__init__(message)
        self.status = status


def _decode_content(body: dict[str, Any]) -> tuple[str, list[Image]]:
    texts: list[str] = []
    images: list[Image] = []
    for msg in body.get("messages") or []:
        content = msg.get("content")
        if isinstance(content, str):
            texts.append(content)
            continue
        for part in content or []:
            if part.get("type") == "text":
                texts.append(str(part.get("text", "")))
            elif part.get("type") == "image_url":
                url = str((part.get("image_url") or {}).get("url", ""))
                _, _, b64 = url.partition("base64,")
                try:
                    images.append(Image.from_png(base64.b64decode(b64)))
                except (ValueError, DivplanError) as exc:
                    raise _BadRequest(400, f"undecodable image part: {exc}") from exc
    return "\n".join(texts), images


def describe_scene(sidecar: dict[str, Any]) -> str:
    """Deterministic stage-1 visual context: named objects and the trails shown."""
    env = parse_scene(sidecar["scene"], source="<sidecar>")
    parts = []
    for name, ob in env.objects.items():
        c = ob.shape.centroid()
        kind = type(ob.shape).__name__.lower()
        parts.append(f"a {name} ({kind}) near ({c.x:.1f}, {c.y:.1f})")
    unlabeled = sum(ob.label is None for ob in env.obstacles)
    b = env.bounds
    text = f"A top-down view of a {b.xmax - b.xmin:g} by {b.ymax - b.ymin:g} meter area"
    text += (". It contains " + ", ".join(parts)) if parts else ". It contains no named objects"
    if unlabeled:
        text += f", plus {unlabeled} unlabeled obstacle(s)"
    return text + f". {len(sidecar.get('labels') or [])} candidate path(s) are drawn."


def score_reply(sidecar: dict[str, Any], oracle: OracleConfig) -> str:
    env = parse_scene(sidecar["scene"], source="<sidecar>")
    constraint = constraint_from_dict(sidecar["constraint"], "sidecar.constraint")
    paths = [Path.from_list(p) for p in sidecar["paths"]]
    labels = [str(lb) for lb in sidecar["labels"]]
    if len(labels) != len(paths):
        raise _BadRequest(422, f"sidecar has {len(paths)} paths but {len(labels)} labels")
    raw = oracle_scores(paths, env, constraint, oracle)
    scores = [float(s) for s in raw]
    focus = sidecar.get("focus")
    if focus is not None:
        i = int(focus)
        return format_scores({labels[i]: scores[i]}, labels[i])
    best = int(np.argmax(raw))
    return format_scores(dict(zip(labels, scores, strict=True)), labels[best])


class _Handler(BaseHTTPRequestHandler):
    server: MockJudgeHTTPServer

    def log_message(self, format: str, *args: Any) -> None:
        logger.debug("%s " + format, self.address_string(), *args)

    def _send(self, status: int, payload: dict[str, Any]) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self) -> None:
        if self.path.rstrip("/") == "/health":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": f"no route {self.path!r}"})

    def do_POST(self) -> None:
        if self.path.rstrip("/") not in COMPLETION_PATHS:
            self._send(404, {"error": f"no route {self.path!r}"})
            return
        try:
            length = int(self.headers.get("Content-Length") or 0)
            try:
                body = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError as exc:
                raise _BadRequest(400, f"body is not JSON: {exc}") from exc
            text, images = _decode_content(body)
            reply = self.server.reply(body.get("divplan_sidecar"))
        except _BadRequest as exc:
            self._send(exc.status, {"error": str(exc)})
            return
        except DivplanError as exc:
            self._send(422, {"error": f"{exc.kind}: {exc}"})
            return
        tok = self.server.tokenizer
        usage = {"prompt_tokens": request_tokens(images, text, tok), "completion_tokens": text_tokens(reply)}
        usage["total_tokens"] = usage["prompt_tokens"] + usage["completion_tokens"]
        logger.info("mock judge: %d image(s), %d prompt tokens", len(images), usage["prompt_tokens"])
        self._send(
            200,
            {
                "object": "chat.completion",
                "model": body.get("model", "mock"),
                "choices": [{"index": 0, "message": {"role": "assistant", "content": reply}, "finish_reason": "stop"}],
                "usage": usage,
            },
        )


class MockJudgeHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        chaos: float,
        seed: int,
        oracle: OracleConfig,
        tokenizer: TokenizerConfig,
    ) -> None:
        super().__init__(address, _Handler)
        self.chaos = chaos
        self.oracle = oracle
        self.tokenizer = tokenizer
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()

    def _corrupt(self) -> tuple[bool, bool]:
        """(corrupt?, hallucinate?) drawn from the seeded stream."""
        with self._lock:
            return bool(self._rng.random() < self.chaos), bool(self._rng.random() < 0.5)

    def reply(self, sidecar: Any) -> str:
        if not isinstance(sidecar, dict):
            raise _BadRequest(422, "mock judge needs the divplan_sidecar geometry field")
        corrupt, hallucinate = self._corrupt()
        labels = [str(lb) for lb in sidecar.get("labels") or []]
        if corrupt and hallucinate:
            if labels and all(lb.startswith("row ") for lb in labels):
                bad = row_label(len(labels) + 1)
            else:
                bad = next(c for c in COLOR_WORDS if c not in labels)
            return format_scores({bad: 97}, bad)
        if corrupt:
            return MALFORMED_REPLY
        try:
            if sidecar.get("task") == "describe":
                return describe_scene(sidecar)
            return score_reply(sidecar, self.oracle)
        except (KeyError, TypeError, ValueError) as exc:
            raise _BadRequest(422, f"malformed sidecar: {exc}") from exc


class MockJudgeServer:
    """Start/stop wrapper; ``port=0`` binds an ephemeral port."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        chaos: float = 0.0,
        seed: int = 0,
        oracle: OracleConfig | None = None,
        tokenizer: TokenizerConfig | None = None,
    ) -> None:
        if not 0.0 <= chaos <= 1.0:
            raise ValueError(f"chaos must be in [0, 1], got {chaos!r}")
        self.httpd = MockJudgeHTTPServer(
            (host, port), chaos, seed, oracle or OracleConfig(), tokenizer or TokenizerConfig()
        )
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> MockJudgeServer:
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="mock-judge", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        logger.info("mock judge listening on %s (chaos=%g)", self.url, self.httpd.chaos)
        try:
            self.httpd.serve_forever()
        finally:
            self.httpd.server_close()

    def stop(self) -> None:
        if self._thread is not None:
            self.httpd.shutdown()
            self._thread.join(timeout=5)
            self._thread = None
        self.httpd.server_close()

    def __enter__(self) -> MockJudgeServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

"""Judge side of the pipeline: prompts, token budgets, response parsing, the
HTTP client, method orchestration and the oracle-backed mock server."""

from __future__ import annotations

from divplan.vlm.prompts import METHODS, Method, build_prompt

__all__ = ["METHODS", "Method", "build_prompt"]

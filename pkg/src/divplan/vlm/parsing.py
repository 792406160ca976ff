"""Judge response grammar.

A response is free text. Two things are extracted:

  scores  every "<label> <number>" mention, e.g. "red: 40", "Green 90",
          "row 2 - 75", "blue trajectory scored 60". Case-insensitive; scores
          clamp to [0, 100]; the first mention of a label wins.
  choice  the label named in the sentence of the LAST cue word (highest, best,
          winner, choose, select, pick, ...): the first presented label after
          the cue, else a row number right after it ("Highest: 2"), else the
          last presented label before it. A sentence that names no presented
          label but some other recognized one yields that label.

Labels are palette color names or "row N". The grammar recognizes any common
color word and any row number, not only the presented ones, so a judge that
names a candidate that was never shown is caught as a hallucination instead of
silently ignored. With no explicit choice, the highest score wins and ties go
to the earliest presented label.
"""

from __future__ import annotations

import re
from collections.abc import Mapping, Sequence

import numpy as np

from divplan.errors import HallucinatedAnswer, UnparseableResponse

COLOR_WORDS: tuple[str, ...] = (
    "red", "green", "blue", "orange", "purple", "cyan", "magenta", "yellow", "pink",
    "brown", "black", "white", "gray", "grey", "violet", "teal", "lime", "navy", "gold",
    "maroon", "olive", "turquoise", "indigo",
)  # fmt: skip

_CUES = r"\b(?:highest|best|winner|winning|choose|chosen|choice|select|selected|pick|picked|final answer)\b"
_FILLER = r"(?:\s|[:=,\-–—(]|\b(?:is|gets?|got|scores?|scored|rated|rating|of|with|a|trajectory|path|trail)\b)*"
_NUMBER = r"(\d+(?:\.\d+)?)"
_SENTENCE_END = re.compile(r"[.!?;\n](?!\d)")
# "Highest: 2" in a gallery reply; the number must follow the cue directly
_BARE_ROW = re.compile(r"\s*[:=]?\s*#?(\d+)\b(?!\.\d)")


def row_label(i: int) -> str:
    """1-based gallery row label."""
    return f"row {i}"


def _label_pattern(extra: Sequence[str]) -> str:
    words = sorted({*COLOR_WORDS, *(w.lower() for w in extra if not w.lower().startswith("row "))}, key=len, reverse=True)
    return r"\b(row\s*#?\s*\d+|" + "|".join(re.escape(w) for w in words) + r")\b"


def _norm(token: str) -> str:
    token = token.lower()
    m = re.fullmatch(r"row\s*#?\s*(\d+)", token)
    return row_label(int(m.group(1))) if m else token


def _find_choice(text: str, label_re: re.Pattern[str], presented: Sequence[str], rows: bool) -> str | None:
    cues = list(re.finditer(_CUES, text, re.IGNORECASE))
    if not cues:
        return None
    cue = cues[-1]
    starts = [0] + [m.end() for m in _SENTENCE_END.finditer(text, 0, cue.start())]
    begin = starts[-1]
    end_m = _SENTENCE_END.search(text, cue.end())
    end = end_m.start() if end_m else len(text)

    after = [_norm(m.group(1)) for m in label_re.finditer(text, cue.end(), end)]
    before = [_norm(m.group(1)) for m in label_re.finditer(text, begin, cue.start())]
    for label in after:
        if label in presented:
            return label
    if rows:
        bare = _BARE_ROW.match(text, cue.end(), end)
        if bare:
            return row_label(int(bare.group(1)))
    for label in reversed(before):
        if label in presented:
            return label
    # the sentence names only unpresented labels
    if after:
        return after[0]
    return before[-1] if before else None


def parse_response(text: str, labels: Sequence[str]) -> tuple[dict[str, float], str]:
    """Scores for the presented ``labels`` and the chosen label."""
    presented = [_norm(lb) for lb in labels]
    label_re = re.compile(_label_pattern(presented), re.IGNORECASE)
    score_re = re.compile(_label_pattern(presented) + _FILLER + _NUMBER + r"(?!\d)", re.IGNORECASE)

    found: dict[str, float] = {}
    for m in score_re.finditer(text):
        label = _norm(m.group(1))
        found.setdefault(label, min(100.0, max(0.0, float(m.group(2)))))

    rows = bool(presented) and all(p.startswith("row ") for p in presented)
    chosen = _find_choice(text, label_re, presented, rows)
    if chosen is None:
        if not found:
            raise UnparseableResponse(f"no scores and no final choice in response {text[:120]!r}")
        best = max(found.values())
        ranked = [p for p in presented if found.get(p) == best] or [lb for lb, s in found.items() if s == best]
        chosen = ranked[0]
    if chosen not in presented:
        raise HallucinatedAnswer(f"judge chose {chosen!r}, which was not presented (presented: {presented})")
    return {lb: s for lb, s in found.items() if lb in presented}, chosen


def format_scores(scores: Mapping[str, float], chosen: str) -> str:
    """Canonical response text: one "<label>: <score>" line each, then the choice.

    Scores are written in the shortest positional form that parses back to the
    same float, so a reader comparing parsed scores sees the exact values.
    """
    lines = [f"{label}: {np.format_float_positional(score, trim='-')}" for label, score in scores.items()]
    lines.append(f"Highest: {chosen}")
    return "\n".join(lines)

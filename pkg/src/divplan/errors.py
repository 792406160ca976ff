"""Exception hierarchy.

Every failure the pipeline can report is a subclass of ``DivplanError`` and
belongs to exactly one family. The family decides the CLI exit code:

  DataError  -> 2   bad scene/dataset files, planning failures, render limits
  JudgeError -> 3   transport, refusals, unparseable or hallucinated answers

Usage errors (bad flags) exit 1 and never reach this module. Batch code
records these as data (class name + message) instead of letting them escape.
"""

from __future__ import annotations


class DivplanError(Exception):
    """Base for every error raised by divplan."""

    exit_code = 2

    @property
    def kind(self) -> str:
        return type(self).__name__


# ---------------------------------------------------------------------------
# data / planning family
# ---------------------------------------------------------------------------


class DataError(DivplanError):
    exit_code = 2


class ParseError(DataError):
    """A scene, dataset, candidate or config file is not in the expected format."""


class InvariantViolation(DataError):
    """Input parsed but violates a type invariant (degenerate shape, bad index, ...)."""


class UnknownObject(DataError):
    """A constraint or query names an object the scene does not define."""


class MissingScene(DataError):
    """A dataset record references a scene file that does not exist."""


class NoPath(DataError):
    """One planner run found no path (iteration cap or disconnected roadmap)."""


class CandidateGenerationFailed(DataError):
    """Every BiRRT and PRM run for a problem returned NoPath."""


class PaletteExhausted(DataError):
    """More paths were asked to be drawn than the palette has colors."""


class BudgetTooSmall(DataError):
    """A token budget cannot fit even the text of the request."""


# ---------------------------------------------------------------------------
# judge family
# ---------------------------------------------------------------------------


class JudgeError(DivplanError):
    exit_code = 3


class TransportError(JudgeError):
    """The judge endpoint could not be reached after all retries."""


class JudgeRefused(JudgeError):
    """The judge answered with a non-2xx status after all retries."""


class UnparseableResponse(JudgeError):
    """The judge's text holds neither scores nor a final choice."""


class HallucinatedAnswer(JudgeError):
    """The judge chose a color or row that was not presented."""


class AllQueriesFailed(JudgeError):
    """multi_image: every per-candidate query errored."""

"""Prompt text for the four query methods.

``single_image`` is the reference template, substituted verbatim. The other
three are adaptations of it:

  multi_image     one trail per image: "rate this trajectory", name its color
  gallery         rows of robot snapshots: give the row number with the highest score
  visual_context  stage 1 asks for a scene description; stage 2 is the reference
                  template preceded by that description
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

from divplan.errors import InvariantViolation

Method = Literal["single_image", "multi_image", "visual_context", "gallery"]
METHODS: tuple[Method, ...] = ("single_image", "multi_image", "visual_context", "gallery")

# CLI spellings
METHOD_ALIASES: dict[str, Method] = {
    "single": "single_image",
    "multi": "multi_image",
    "context": "visual_context",
    "gallery": "gallery",
    **{m: m for m in METHODS},
}

SINGLE_IMAGE_TEMPLATE = (
    "This picture shows a robot in a simulated environment. Each trajectory of dots is a "
    "sequence of waypoints that guide the robot to move along. Please rate each of the "
    "trajectories out of 100 for how well they match the user instruction, by analyzing if "
    "they satisfy the constraints on object proximity and path style. User instruction: {l}. "
    "Give the color with the highest score at the end."
)

MULTI_IMAGE_TEMPLATE = (
    "This picture shows a robot in a simulated environment. The trajectory of dots is a "
    "sequence of waypoints that guide the robot to move along. Please rate this trajectory "
    "out of 100 for how well it matches the user instruction, by analyzing if it satisfies "
    "the constraints on object proximity and path style. User instruction: {l}. "
    "Answer with the color of the trajectory followed by its score."
)

GALLERY_TEMPLATE = (
    "This picture shows a robot in a simulated environment. Each row is a sequence of "
    "screenshots of the robot moving along one path, from left to right. Please rate each of "
    "the rows out of 100 for how well they match the user instruction, by analyzing if they "
    "satisfy the constraints on object proximity and path style. User instruction: {l}. "
    "The rows are numbered 1 to {n}. Give the row number with the highest score at the end."
)

DESCRIBE_PROMPT = "Describe the objects, their attributes, and spatial relationships in this image."

CONTEXT_PREFIX = "Visual context: {context}\n\n"


def resolve_method(name: str) -> Method:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise InvariantViolation(f"unknown method {name!r} (choose from {sorted(METHOD_ALIASES)})") from None


def build_prompt(
    instruction: str, method: Method, labels: Sequence[str], context: str | None = None
) -> str:
    """Scoring prompt for ``method``. ``labels`` are the palette color names (trail
    methods) or the row labels (gallery); ``context`` is the stage-1 description
    for visual_context."""
    if not instruction.strip():
        raise InvariantViolation("instruction must be non-empty")
    if method == "single_image":
        return SINGLE_IMAGE_TEMPLATE.format(l=instruction)
    if method == "multi_image":
        return MULTI_IMAGE_TEMPLATE.format(l=instruction)
    if method == "gallery":
        return GALLERY_TEMPLATE.format(l=instruction, n=len(labels))
    if method == "visual_context":
        body = SINGLE_IMAGE_TEMPLATE.format(l=instruction)
        return CONTEXT_PREFIX.format(context=context.strip()) + body if context else body
    raise InvariantViolation(f"unknown method {method!r}")

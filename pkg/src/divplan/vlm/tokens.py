"""Request-size estimates and resize-to-budget.

Image tokens follow a patch grid: ``ceil(w / patch) * ceil(h / patch)``; text
costs ``ceil(utf8_bytes / 4)``. Provider tokenizers differ, but this estimate is
monotone in image size and text length, which is what budget sweeps need.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

from divplan.errors import BudgetTooSmall, InvariantViolation
from divplan.render import Image


@dataclass(frozen=True)
class TokenizerConfig:
    patch: int = 28

    def __post_init__(self) -> None:
        if self.patch < 1:
            raise InvariantViolation(f"patch must be >= 1, got {self.patch!r}")


def text_tokens(text: str) -> int:
    return math.ceil(len(text.encode("utf-8")) / 4)


def image_tokens(width: int, height: int, cfg: TokenizerConfig) -> int:
    return math.ceil(width / cfg.patch) * math.ceil(height / cfg.patch)


def estimate_tokens(image: Image | None, text: str, cfg: TokenizerConfig | None = None) -> int:
    cfg = cfg or TokenizerConfig()
    img = image_tokens(image.width, image.height, cfg) if image is not None else 0
    return img + text_tokens(text)


def request_tokens(images: Sequence[Image], text: str, cfg: TokenizerConfig | None = None) -> int:
    cfg = cfg or TokenizerConfig()
    return sum(image_tokens(im.width, im.height, cfg) for im in images) + text_tokens(text)


def _scaled(image: Image, side: int) -> tuple[int, int]:
    """Aspect-preserving size whose long side is ``side``."""
    long = max(image.width, image.height)
    return max(1, image.width * side // long), max(1, image.height * side // long)


def resize_to_budget(image: Image, text: str, max_tokens: int, cfg: TokenizerConfig | None = None) -> Image:
    """Largest patch-grid-aligned downscale with ``estimate_tokens <= max_tokens``.

    Candidate sizes put the long side on a multiple of the patch size; the first
    one (from the largest down) that fits wins. No-op when already within budget.
    """
    cfg = cfg or TokenizerConfig()
    room = max_tokens - text_tokens(text)
    if room < 1:
        raise BudgetTooSmall(f"budget {max_tokens} leaves no room for an image after {text_tokens(text)} text tokens")
    if estimate_tokens(image, text, cfg) <= max_tokens:
        return image
    long = max(image.width, image.height)
    for g in range(math.ceil(long / cfg.patch), 0, -1):
        side = g * cfg.patch
        if side >= long:
            continue
        w, h = _scaled(image, side)
        if image_tokens(w, h, cfg) <= room:
            return image.resized(w, h)
    # long side below one patch: a single-patch image always costs 1
    w, h = _scaled(image, min(long, cfg.patch))
    return image.resized(w, h)


def fit_request(
    images: Sequence[Image], text: str, max_tokens: int, cfg: TokenizerConfig | None = None
) -> list[Image]:
    """Resize every image so the whole request fits ``max_tokens``; the image
    allowance is split evenly."""
    cfg = cfg or TokenizerConfig()
    if request_tokens(images, text, cfg) <= max_tokens:
        return list(images)
    room = max_tokens - text_tokens(text)
    if room < len(images):
        raise BudgetTooSmall(f"budget {max_tokens} cannot fit {len(images)} image(s) and the prompt")
    share = room // len(images)
    return [resize_to_budget(im, "", share, cfg) for im in images]

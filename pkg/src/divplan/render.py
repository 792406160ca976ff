"""Top-down rasterization of scenes and candidate paths in the four query layouts.

  render_base      scene only: background, filled obstacles, object labels
  render_trails    every candidate as a trail of dots, candidate i in palette[i]
  render_single    one candidate, one color (the per-image layout)
  render_gallery   one row per candidate, ``gallery_frames`` snapshots of a robot
                   marker moving along it
  render_highlight trails with the winner re-drawn in enlarged outlined dots

Rasterization is integer-only after the world->pixel map: obstacles are filled
by testing pixel centers, dots and markers are integer disks, labels use the
bundled bitmap font. Equal inputs give byte-identical images.

Pixel convention: pixel (col, row) covers [col, col+1) x [row, row+1) in
continuous pixel coordinates, world +y maps to decreasing row, and the scene
bounds fill the whole image.
"""

from __future__ import annotations

import hashlib
import io
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np
from PIL import Image as PILImage

from divplan.errors import InvariantViolation, PaletteExhausted, ParseError
from divplan.font import text_mask
from divplan.planner import Path
from divplan.world import Environment, Rect

RGB = tuple[int, int, int]

DEFAULT_PALETTE: tuple[tuple[str, RGB], ...] = (
    ("red", (228, 26, 28)),
    ("green", (46, 160, 44)),
    ("blue", (31, 90, 220)),
    ("orange", (255, 127, 0)),
    ("purple", (128, 50, 160)),
    ("cyan", (0, 190, 210)),
    ("magenta", (230, 0, 170)),
)


# ---------------------------------------------------------------------------
# image value type
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Image:
    """Row-major 8-bit RGB, shape (height, width, 3). Read-only."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.array(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvariantViolation(f"image must be (height, width, 3), got {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self) -> int:
        return hash(self.sha256())

    def _pil(self) -> PILImage.Image:
        return PILImage.fromarray(np.ascontiguousarray(self.pixels))

    def to_png(self) -> bytes:
        buf = io.BytesIO()
        self._pil().save(buf, format="PNG")
        return buf.getvalue()

    def to_ppm(self) -> bytes:
        buf = io.BytesIO()
        self._pil().save(buf, format="PPM")
        return buf.getvalue()

    @classmethod
    def from_png(cls, data: bytes) -> Image:
        try:
            with PILImage.open(io.BytesIO(data)) as im:
                return cls(np.asarray(im.convert("RGB")))
        except OSError as exc:
            raise ParseError(f"not a decodable image ({exc})") from exc

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ppm()).hexdigest()

    def resized(self, width: int, height: int) -> Image:
        """Area-averaging downscale (Pillow BOX filter)."""
        if (width, height) == (self.width, self.height):
            return self
        if width < 1 or height < 1:
            raise InvariantViolation(f"resize target must be >= 1x1, got {width}x{height}")
        return Image(np.asarray(self._pil().resize((width, height), PILImage.Resampling.BOX)))

    def save(self, path: str | FilePath) -> FilePath:
        path = FilePath(path)
        path.write_bytes(self.to_ppm() if path.suffix.lower() in (".ppm", ".pnm") else self.to_png())
        return path


# ---------------------------------------------------------------------------
# config + mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenderConfig:
    image_size: tuple[int, int] = (560, 560)
    palette: tuple[tuple[str, RGB], ...] = DEFAULT_PALETTE
    dot_spacing: int = 12
    dot_radius: int = 3
    background: RGB = (245, 245, 240)
    obstacle: RGB = (110, 110, 110)
    object_fill: RGB = (150, 118, 84)
    label: RGB = (255, 255, 255)
    label_scale: int = 2
    robot: RGB = (20, 20, 20)
    robot_radius: int = 4
    grid: RGB = (200, 200, 200)
    gallery_frames: int = 5

    def __post_init__(self) -> None:
        w, h = self.image_size
        if w < 1 or h < 1:
            raise InvariantViolation(f"image_size must be positive, got {self.image_size!r}")
        if not self.palette:
            raise InvariantViolation("palette must not be empty")
        names = [n for n, _ in self.palette]
        if len(set(names)) != len(names):
            raise InvariantViolation(f"palette names must be unique, got {names}")
        if self.dot_radius < 0 or not self.dot_spacing > 2 * self.dot_radius:
            raise InvariantViolation(
                f"dot_spacing must exceed 2*dot_radius, got spacing={self.dot_spacing} radius={self.dot_radius}"
            )
        if self.gallery_frames < 2:
            raise InvariantViolation(f"gallery_frames must be >= 2, got {self.gallery_frames!r}")
        if self.label_scale < 1 or self.robot_radius < 1:
            raise InvariantViolation("label_scale and robot_radius must be >= 1")

    @property
    def palette_names(self) -> list[str]:
        return [n for n, _ in self.palette]

    def color(self, name: str) -> RGB:
        for n, rgb in self.palette:
            if n == name:
                return rgb
        raise InvariantViolation(f"color {name!r} not in palette {self.palette_names}")


@dataclass(frozen=True)
class WorldToPixel:
    """Affine world (meters, +y up) -> continuous pixel (col, row) map."""

    bounds: Rect
    width: int
    height: int

    @property
    def scale(self) -> tuple[float, float]:
        b = self.bounds
        return self.width / (b.xmax - b.xmin), self.height / (b.ymax - b.ymin)

    def forward(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        sx, sy = self.scale
        return np.column_stack([(xy[:, 0] - self.bounds.xmin) * sx, (self.bounds.ymax - xy[:, 1]) * sy])

    def inverse(self, px: np.ndarray) -> np.ndarray:
        px = np.asarray(px, dtype=float).reshape(-1, 2)
        sx, sy = self.scale
        return np.column_stack([px[:, 0] / sx + self.bounds.xmin, self.bounds.ymax - px[:, 1] / sy])

    def pixel_centers(self) -> np.ndarray:
        """World coordinates of every pixel center, row-major (height*width, 2)."""
        cols, rows = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        return self.inverse(np.column_stack([cols.ravel(), rows.ravel()]))


@dataclass(frozen=True)
class CandidateSet:
    env: Environment
    paths: tuple[Path, ...]
    colors: tuple[str, ...]

    @classmethod
    def of(cls, env: Environment, paths: Sequence[Path], cfg: RenderConfig) -> CandidateSet:
        if not paths:
            raise InvariantViolation("candidate set needs at least one path")
        if len(paths) > len(cfg.palette):
            raise PaletteExhausted(f"{len(paths)} candidates but the palette has {len(cfg.palette)} colors")
        return cls(env, tuple(paths), tuple(cfg.palette_names[: len(paths)]))

    def __len__(self) -> int:
        return len(self.paths)


# ---------------------------------------------------------------------------
# raster primitives
# ---------------------------------------------------------------------------


def _disk_offsets(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r)
    keep = dx * dx + dy * dy <= radius * radius
    return np.column_stack([dx[keep], dy[keep]])


def _stamp(canvas: np.ndarray, centers: np.ndarray, radius: int, rgb: RGB) -> None:
    """Paint integer disks centered on integer (col, row) ``centers``."""
    if not len(centers):
        return
    pts = (centers[:, None, :] + _disk_offsets(radius)[None]).reshape(-1, 2)
    h, w = canvas.shape[:2]
    ok = (pts[:, 0] >= 0) & (pts[:, 0] < w) & (pts[:, 1] >= 0) & (pts[:, 1] < h)
    canvas[pts[ok, 1], pts[ok, 0]] = rgb


def _blit_mask(canvas: np.ndarray, mask: np.ndarray, col: int, row: int, rgb: RGB) -> None:
    h, w = canvas.shape[:2]
    rr, cc = np.nonzero(mask)
    rr, cc = rr + row, cc + col
    ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w)
    canvas[rr[ok], cc[ok]] = rgb


def _pixel_index(px: np.ndarray, width: int, height: int) -> np.ndarray:
    """Continuous pixel coordinates -> containing integer pixel, clipped to the image."""
    idx = np.floor(px).astype(np.int64)
    idx[:, 0] = np.clip(idx[:, 0], 0, width - 1)
    idx[:, 1] = np.clip(idx[:, 1], 0, height - 1)
    return idx


def _along(poly: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Points at arc lengths ``s`` along ``poly`` and the heading of the segment each lies on."""
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    keep = np.concatenate(([True], seg > 0))
    pts = poly[keep]
    if len(pts) == 1:
        return np.repeat(pts, len(s), axis=0), np.zeros(len(s))
    cum = np.concatenate(([0.0], np.cumsum(seg[seg > 0])))
    xy = np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2)
    d = pts[i + 1] - pts[i]
    return xy, np.arctan2(d[:, 1], d[:, 0])


def trail_dots(w2p: WorldToPixel, path: Path, spacing: int) -> np.ndarray:
    """Integer pixel centers of a path's dots: floor(pixel_length / spacing) + 1 of them."""
    poly = w2p.forward(path.waypoints)
    length = float(np.linalg.norm(np.diff(poly, axis=0), axis=1).sum())
    count = int(np.floor(length / spacing)) + 1
    xy, _ = _along(poly, np.arange(count, dtype=float) * spacing)
    return _pixel_index(xy, w2p.width, w2p.height)


# ---------------------------------------------------------------------------
# layouts
# ---------------------------------------------------------------------------


def _mapping(env: Environment, cfg: RenderConfig) -> WorldToPixel:
    w, h = cfg.image_size
    return WorldToPixel(env.bounds, w, h)


def _base_canvas(env: Environment, cfg: RenderConfig) -> np.ndarray:
    w2p = _mapping(env, cfg)
    w, h = cfg.image_size
    canvas = np.empty((h, w, 3), dtype=np.uint8)
    canvas[:] = cfg.background
    if not env.obstacles:
        return canvas
    centers = w2p.pixel_centers()
    for ob in env.obstacles:
        inside = ob.shape.contains(centers).reshape(h, w)
        canvas[inside] = cfg.obstacle if ob.label is None else cfg.object_fill
    for name, ob in env.objects.items():
        mask = text_mask(name, cfg.label_scale)
        c = w2p.forward(ob.shape.centroid().as_array())[0]
        col = int(np.floor(c[0])) - mask.shape[1] // 2
        row = int(np.floor(c[1])) - mask.shape[0] // 2
        _blit_mask(canvas, mask, col, row, cfg.label)
    return canvas


def render_base(env: Environment, cfg: RenderConfig) -> Image:
    return Image(_base_canvas(env, cfg))


def _draw_trail(canvas: np.ndarray, w2p: WorldToPixel, path: Path, rgb: RGB, cfg: RenderConfig) -> None:
    _stamp(canvas, trail_dots(w2p, path, cfg.dot_spacing), cfg.dot_radius, rgb)


def render_trails(env: Environment, paths: Sequence[Path], cfg: RenderConfig) -> Image:
    if not paths:
        raise InvariantViolation("render_trails needs at least one path")
    if len(paths) > len(cfg.palette):
        raise PaletteExhausted(f"{len(paths)} paths but the palette has {len(cfg.palette)} colors")
    canvas = _base_canvas(env, cfg)
    w2p = _mapping(env, cfg)
    for path, (_, rgb) in zip(paths, cfg.palette, strict=False):
        _draw_trail(canvas, w2p, path, rgb, cfg)
    return Image(canvas)


def render_single(env: Environment, path: Path, color: str | RGB, cfg: RenderConfig) -> Image:
    rgb = cfg.color(color) if isinstance(color, str) else color
    canvas = _base_canvas(env, cfg)
    _draw_trail(canvas, _mapping(env, cfg), path, rgb, cfg)
    return Image(canvas)


def render_highlight(env: Environment, paths: Sequence[Path], winner: int, cfg: RenderConfig) -> Image:
    """Trails for every path, the winner re-drawn on top with outlined enlarged dots."""
    if not 0 <= winner < len(paths):
        raise InvariantViolation(f"winner index {winner} outside 0..{len(paths) - 1}")
    canvas = np.array(render_trails(env, paths, cfg).pixels)
    dots = trail_dots(_mapping(env, cfg), paths[winner], cfg.dot_spacing)
    _stamp(canvas, dots, cfg.dot_radius + 2, cfg.robot)
    _stamp(canvas, dots, cfg.dot_radius + 1, cfg.palette[winner][1])
    return Image(canvas)


def gallery_markers(paths: Sequence[Path], frames: int) -> tuple[np.ndarray, np.ndarray]:
    """World positions (rows, frames, 2) and headings (rows, frames) of the robot
    marker at arc-length fractions j / (frames - 1) along each path."""
    pos = np.empty((len(paths), frames, 2))
    heading = np.empty((len(paths), frames))
    frac = np.arange(frames) / (frames - 1)
    for i, p in enumerate(paths):
        xy, th = _along(p.waypoints, frac * p.length)
        xy[0], xy[-1] = p.waypoints[0], p.waypoints[-1]
        pos[i], heading[i] = xy, th
    return pos, heading


def render_gallery(env: Environment, paths: Sequence[Path], cfg: RenderConfig) -> Image:
    """``len(paths)`` rows x ``gallery_frames`` columns of downscaled scene snapshots."""
    if not paths:
        raise InvariantViolation("render_gallery needs at least one path")
    frames = cfg.gallery_frames
    w, h = cfg.image_size
    cw, ch = max(1, w // frames), max(1, h // frames)
    cell = render_base(env, cfg).resized(cw, ch).pixels
    w2p = WorldToPixel(env.bounds, cw, ch)
    pos, heading = gallery_markers(paths, frames)
    r = cfg.robot_radius

    canvas = np.empty((ch * len(paths), cw * frames, 3), dtype=np.uint8)
    for i in range(len(paths)):
        centers = _pixel_index(w2p.forward(pos[i]), cw, ch)
        for j in range(frames):
            tile = np.array(cell)
            _stamp(tile, centers[j : j + 1], r, cfg.robot)
            # heading tick: 2r long, sampled every half pixel
            t = np.arange(0, 4 * r + 1) / 2.0
            tip = w2p.forward(pos[i, j])[0] + t[:, None] * np.array(
                [np.cos(heading[i, j]), -np.sin(heading[i, j])]
            )
            _stamp(tile, _pixel_index(tip, cw, ch), 0, cfg.robot)
            tile[0, :] = cfg.grid
            tile[:, 0] = cfg.grid
            if j == 0:
                _blit_mask(tile, text_mask(str(i + 1)), 2, 2, cfg.robot)
            canvas[i * ch : (i + 1) * ch, j * cw : (j + 1) * cw] = tile
    return Image(canvas)

"""2-D scenes: obstacles, labeled objects, and the collision/clearance queries
every other module is built on.

Conventions
-----------
* Meters throughout; +y is up (the renderer flips it).
* Obstacles are CLOSED sets: a point on a boundary collides. Leaving the scene
  bounds collides; lying on the bounds rectangle itself does not.
* ``segments_free`` is the single source of truth for edge validity. It samples
  at spacing <= ``step`` with both endpoints included, always walking from the
  lexicographically smaller endpoint, so ``segment_free(a, b)`` and
  ``segment_free(b, a)`` sample the exact same floats.

Scene file (one JSON document)::

    {"bounds": [xmin, ymin, xmax, ymax],
     "obstacles": [
        {"shape": "rect", "rect": [xmin, ymin, xmax, ymax], "label": "table"},
        {"shape": "circle", "center": [x, y], "radius": r},
        {"shape": "polygon", "vertices": [[x, y], ...]}]}

Environments are immutable after load; every query is pure.
"""

from __future__ import annotations

import json
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Protocol

import numpy as np

from divplan.errors import InvariantViolation, MissingScene, ParseError, UnknownObject

DEFAULT_COLLISION_STEP = 0.02
# Edges are checked in chunks so a dense roadmap never materializes millions of samples.
_EDGE_CHUNK = 2048


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvariantViolation(f"point must be finite, got ({self.x!r}, {self.y!r})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def of(cls, xy: Any) -> Point:
        x, y = xy
        return cls(float(x), float(y))


# ---------------------------------------------------------------------------
# shapes (vectorized over (N, 2) arrays of points)
# ---------------------------------------------------------------------------


class Shape(Protocol):
    def contains(self, xy: np.ndarray) -> np.ndarray: ...
    def distance(self, xy: np.ndarray) -> np.ndarray: ...
    def centroid(self) -> Point: ...
    def bbox(self) -> tuple[float, float, float, float]: ...


@dataclass(frozen=True, slots=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvariantViolation(
                f"rect needs min < max per axis, got [{self.xmin}, {self.ymin}, {self.xmax}, {self.ymax}]"
            )

    def contains(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy[:, 0], xy[:, 1]
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def distance(self, xy: np.ndarray) -> np.ndarray:
        x, y = xy[:, 0], xy[:, 1]
        dx = np.maximum(np.maximum(self.xmin - x, 0.0), x - self.xmax)
        dy = np.maximum(np.maximum(self.ymin - y, 0.0), y - self.ymax)
        return np.hypot(dx, dy)

    def centroid(self) -> Point:
        return Point((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)

    def bbox(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


@dataclass(frozen=True, slots=True)
class Circle:
    cx: float
    cy: float
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise InvariantViolation(f"circle radius must be > 0, got {self.radius!r}")

    def contains(self, xy: np.ndarray) -> np.ndarray:
        dx = xy[:, 0] - self.cx
        dy = xy[:, 1] - self.cy
        return dx * dx + dy * dy <= self.radius * self.radius

    def distance(self, xy: np.ndarray) -> np.ndarray:
        d = np.hypot(xy[:, 0] - self.cx, xy[:, 1] - self.cy) - self.radius
        return np.where(self.contains(xy), 0.0, np.maximum(d, 0.0))

    def centroid(self) -> Point:
        return Point(self.cx, self.cy)

    def bbox(self) -> tuple[float, float, float, float]:
        r = self.radius
        return (self.cx - r, self.cy - r, self.cx + r, self.cy + r)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Convex polygon, vertices counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvariantViolation(f"polygon needs >= 3 [x, y] vertices, got {len(v)}")
        edges = np.roll(v, -1, axis=0) - v
        nxt = np.roll(edges, -1, axis=0)
        turns = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.any(turns < 0):
            raise InvariantViolation("polygon must be convex and counter-clockwise")
        winding = np.arctan2(turns, np.einsum("ij,ij->i", edges, nxt)).sum()
        if _signed_area(v) <= 0 or not math.isclose(winding, 2 * math.pi, abs_tol=1e-6):
            raise InvariantViolation("polygon must be convex and counter-clockwise")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Polygon) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self) -> int:
        return hash(self.vertices.tobytes())

    def _edge_cross(self, xy: np.ndarray) -> np.ndarray:
        a = self.vertices
        e = np.roll(a, -1, axis=0) - a
        rel = xy[:, None, :] - a[None, :, :]
        return e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]

    def contains(self, xy: np.ndarray) -> np.ndarray:
        return np.all(self._edge_cross(xy) >= 0.0, axis=1)

    def distance(self, xy: np.ndarray) -> np.ndarray:
        a = self.vertices
        b = np.roll(a, -1, axis=0)
        d = np.min(_point_segment_distance(xy[:, None, :], a[None], b[None]), axis=1)
        return np.where(self.contains(xy), 0.0, d)

    def centroid(self) -> Point:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        area = cross.sum() / 2.0
        cx = ((v[:, 0] + w[:, 0]) * cross).sum() / (6.0 * area)
        cy = ((v[:, 1] + w[:, 1]) * cross).sum() / (6.0 * area)
        return Point(float(cx), float(cy))

    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


def _signed_area(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return float((v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]).sum() / 2.0)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Broadcasting distance from points ``p`` to segments ``a -> b`` (last axis = xy)."""
    ab = b - a
    denom = np.einsum("...i,...i->...", ab, ab)
    t = np.einsum("...i,...i->...", p - a, ab) / np.where(denom > 0, denom, 1.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(p - closest, axis=-1)


@dataclass(frozen=True)
class Obstacle:
    shape: Rect | Circle | Polygon
    label: str | None = None


# ---------------------------------------------------------------------------
# environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Environment:
    bounds: Rect
    obstacles: tuple[Obstacle, ...] = ()
    objects: Mapping[str, Obstacle] = field(default_factory=lambda: MappingProxyType({}))
    source: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.objects, MappingProxyType):
            object.__setattr__(self, "objects", MappingProxyType(dict(self.objects)))

    def collides_many(self, xy: np.ndarray) -> np.ndarray:
        """Vectorized ``collides`` over an (N, 2) array."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        b = self.bounds
        hit = (xy[:, 0] < b.xmin) | (xy[:, 0] > b.xmax) | (xy[:, 1] < b.ymin) | (xy[:, 1] > b.ymax)
        for ob in self.obstacles:
            hit |= ob.shape.contains(xy)
        return hit

    def segments_free(self, a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
        """Vectorized ``segment_free`` over row-aligned (E, 2) endpoint arrays."""
        if not step > 0:
            raise ValueError(f"collision step must be > 0, got {step!r}")
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        out = np.empty(len(a), dtype=bool)
        for lo in range(0, len(a), _EDGE_CHUNK):
            hi = min(lo + _EDGE_CHUNK, len(a))
            out[lo:hi] = self._segments_free_chunk(a[lo:hi], b[lo:hi], step)
        return out

    def _segments_free_chunk(self, a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
        swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
        p = np.where(swap[:, None], b, a)
        q = np.where(swap[:, None], a, b)
        delta = q - p
        n = np.maximum(1, np.ceil(np.hypot(delta[:, 0], delta[:, 1]) / step)).astype(np.int64)
        counts = n + 1
        offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
        edge = np.repeat(np.arange(len(p)), counts)
        i = np.arange(counts.sum()) - np.repeat(offsets, counts)
        t = i / np.repeat(n, counts)
        pts = p[edge] + delta[edge] * t[:, None]
        pts[offsets + n] = q  # last sample is the endpoint itself, not p + delta * 1.0
        hit = self.collides_many(pts)
        return ~np.logical_or.reduceat(hit, offsets)

    def obstacle_named(self, name: str) -> Obstacle:
        try:
            return self.objects[name]
        except KeyError:
            raise UnknownObject(
                f"object {name!r} not in scene {self.source or '<memory>'} "
                f"(known: {sorted(self.objects)})"
            ) from None


def collides(env: Environment, p: Point) -> bool:
    return bool(env.collides_many(np.array([[p.x, p.y]]))[0])


def segment_free(env: Environment, a: Point, b: Point, step: float = DEFAULT_COLLISION_STEP) -> bool:
    return bool(env.segments_free(np.array([[a.x, a.y]]), np.array([[b.x, b.y]]), step)[0])


def distance_to_object(env: Environment, p: Point, name: str) -> float:
    """Euclidean distance from ``p`` to the named object's shape (0 inside)."""
    shape = env.obstacle_named(name).shape
    return float(shape.distance(np.array([[p.x, p.y]]))[0])


def object_centroid(env: Environment, name: str) -> Point:
    return env.obstacle_named(name).shape.centroid()


# ---------------------------------------------------------------------------
# scene files
# ---------------------------------------------------------------------------


def _num(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise InvariantViolation(f"{what} must be finite, got {value!r}")
    return float(value)


def _nums(value: Any, n: int, what: str) -> list[float]:
    if not isinstance(value, list) or len(value) != n:
        raise ParseError(f"{what} must be a list of {n} numbers, got {value!r}")
    return [_num(v, what) for v in value]


def _parse_shape(entry: dict[str, Any], what: str) -> Rect | Circle | Polygon:
    kind = entry.get("shape")
    if kind == "rect":
        return Rect(*_nums(entry.get("rect"), 4, f"{what}.rect"))
    if kind == "circle":
        cx, cy = _nums(entry.get("center"), 2, f"{what}.center")
        return Circle(cx, cy, _num(entry.get("radius"), f"{what}.radius"))
    if kind == "polygon":
        verts = entry.get("vertices")
        if not isinstance(verts, list):
            raise ParseError(f"{what}.vertices must be a list of [x, y], got {verts!r}")
        return Polygon(np.array([_nums(v, 2, f"{what}.vertices") for v in verts], dtype=float).reshape(-1, 2))
    raise ParseError(f"{what}.shape must be 'rect', 'circle' or 'polygon', got {kind!r}")


def parse_scene(data: Any, source: str = "") -> Environment:
    """Build an Environment from the decoded scene JSON, enforcing every invariant."""
    where = source or "<scene>"
    if not isinstance(data, dict):
        raise ParseError(f"{where}: scene must be a JSON object")
    bounds = Rect(*_nums(data.get("bounds"), 4, f"{where}: bounds"))
    raw = data.get("obstacles", [])
    if not isinstance(raw, list):
        raise ParseError(f"{where}: obstacles must be a list")

    obstacles: list[Obstacle] = []
    objects: dict[str, Obstacle] = {}
    for i, entry in enumerate(raw):
        what = f"{where}: obstacles[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{what} must be an object")
        shape = _parse_shape(entry, what)
        label = entry.get("label")
        if label is not None:
            if not isinstance(label, str):
                raise ParseError(f"{what}.label must be a string, got {label!r}")
            if not label or label != label.strip() or label != label.lower():
                raise InvariantViolation(f"{what}: object name must be non-empty lowercase, got {label!r}")
            if label in objects:
                raise InvariantViolation(f"{what}: duplicate object name {label!r}")
            x0, y0, x1, y1 = shape.bbox()
            if x0 < bounds.xmin or y0 < bounds.ymin or x1 > bounds.xmax or y1 > bounds.ymax:
                raise InvariantViolation(f"{what}: object {label!r} extends outside the scene bounds")
        ob = Obstacle(shape, label)
        obstacles.append(ob)
        if label is not None:
            objects[label] = ob
    return Environment(bounds, tuple(obstacles), objects, source=source)


def load_scene(path: str | Path) -> Environment:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise MissingScene(f"{path}: scene file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    return parse_scene(data, source=str(path))


def scene_to_dict(env: Environment) -> dict[str, Any]:
    """Inverse of ``parse_scene``."""
    out: list[dict[str, Any]] = []
    for ob in env.obstacles:
        s = ob.shape
        if isinstance(s, Rect):
            entry: dict[str, Any] = {"shape": "rect", "rect": [s.xmin, s.ymin, s.xmax, s.ymax]}
        elif isinstance(s, Circle):
            entry = {"shape": "circle", "center": [s.cx, s.cy], "radius": s.radius}
        else:
            entry = {"shape": "polygon", "vertices": s.vertices.tolist()}
        if ob.label is not None:
            entry["label"] = ob.label
        out.append(entry)
    b = env.bounds
    return {"bounds": [b.xmin, b.ymin, b.xmax, b.ymax], "obstacles": out}

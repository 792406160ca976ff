"""Diverse raw path candidates: seeded BiRRT runs plus PRM queries under
rotating edge-cost functions.

One problem yields up to ``2n`` candidates:

  * ``n`` BiRRT runs with seeds ``seed .. seed+n-1``;
  * ``n`` PRM runs with the same seeds, each building its roadmap from scratch
    and answering the query with Dijkstra under ``cost_schedule(i)``, which
    rotates euclidean -> sinusoidal -> circular.

Every run is a pure function of ``(problem, cfg, seed)``: the seed is mixed
through a splitmix64 finalizer per stream ("birrt" / "prm") and feeds a numpy
``default_rng``. Runs may execute on a thread pool; output order is always
(BiRRT by seed, then PRM by seed) and failed runs are skipped.

Cost functions (``edge_cost``) multiply the chord length by
``1 + weight * deviation`` where the deviation is measured at the edge
midpoint against a reference curve anchored on the start -> goal chord:

  sinusoidal  lateral offset vs ``amplitude * sin(2*pi*periods*t)``, t in [0, 1]
              along the chord; zero amplitude is plain euclidean.
  circular    distance to the circular arc through start and goal whose
              sagitta is ``bulge`` (signed, + bulges to the left of start->goal);
              zero bulge measures distance to the chord segment itself.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Any, Literal

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from divplan.errors import CandidateGenerationFailed, InvariantViolation, NoPath, ParseError
from divplan.world import DEFAULT_COLLISION_STEP, Environment, Point, collides

logger = logging.getLogger(__name__)

CostKind = Literal["euclidean", "sinusoidal", "circular"]
COST_KINDS: tuple[CostKind, ...] = ("euclidean", "sinusoidal", "circular")

MASK64 = (1 << 64) - 1
_STREAM_SALT = {"birrt": 0xB1_4447_5254, "prm": 0x9A_4D50_524D}

# cost_schedule: fractions of the start->goal chord length
SINE_AMPLITUDE = 0.25
ARC_BULGE = (0.35, 0.2)
DEVIATION_WEIGHT = 3.0


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Path:
    """Ordered waypoints, shape (N, 2), N >= 2. Read-only once built."""

    waypoints: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.waypoints, dtype=float).reshape(-1, 2)
        if len(w) < 2:
            raise InvariantViolation(f"path needs >= 2 waypoints, got {len(w)}")
        if not np.all(np.isfinite(w)):
            raise InvariantViolation("path waypoints must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    def __len__(self) -> int:
        return len(self.waypoints)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Path) and np.array_equal(self.waypoints, other.waypoints)

    def __hash__(self) -> int:
        return hash(self.waypoints.tobytes())

    @property
    def start(self) -> Point:
        return Point.of(self.waypoints[0])

    @property
    def goal(self) -> Point:
        return Point.of(self.waypoints[-1])

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def to_list(self) -> list[list[float]]:
        return self.waypoints.tolist()

    @classmethod
    def from_list(cls, data: Any) -> Path:
        if not isinstance(data, list) or not all(isinstance(p, list) and len(p) == 2 for p in data):
            raise ParseError(f"path must be a list of [x, y] pairs, got {str(data)[:80]!r}")
        return cls(np.array(data, dtype=float))


@dataclass(frozen=True)
class PlanningProblem:
    scene: Environment
    start: Point
    goal: Point

    def __post_init__(self) -> None:
        for name, p in (("start", self.start), ("goal", self.goal)):
            if collides(self.scene, p):
                raise InvariantViolation(f"{name} ({p.x}, {p.y}) is in collision")
        if self.start == self.goal:
            raise InvariantViolation("start and goal must differ")

    @property
    def chord(self) -> float:
        return math.hypot(self.goal.x - self.start.x, self.goal.y - self.start.y)


@dataclass(frozen=True)
class PlannerConfig:
    n: int = 50
    max_iterations: int = 5000
    extend_step: float = 0.25
    goal_bias: float = 0.05
    prm_samples: int = 500
    prm_radius: float = 1.5
    collision_step: float = DEFAULT_COLLISION_STEP
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvariantViolation(f"planner n must be >= 1, got {self.n!r}")
        if self.max_iterations < 1 or self.jobs < 1:
            raise InvariantViolation("planner max_iterations and jobs must be >= 1")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise InvariantViolation(f"goal_bias must be in [0, 1], got {self.goal_bias!r}")
        for name in ("extend_step", "prm_radius", "collision_step"):
            if not getattr(self, name) > 0:
                raise InvariantViolation(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.prm_samples < 2:
            raise InvariantViolation(f"prm_samples must be >= 2, got {self.prm_samples!r}")


@dataclass(frozen=True)
class CostFunction:
    kind: CostKind = "euclidean"
    amplitude: float = 0.0
    periods: int = 1
    bulge: float = 0.0
    weight: float = DEVIATION_WEIGHT

    def __post_init__(self) -> None:
        if self.kind not in COST_KINDS:
            raise InvariantViolation(f"cost kind must be one of {COST_KINDS}, got {self.kind!r}")
        if self.weight < 0:
            raise InvariantViolation(f"cost weight must be >= 0, got {self.weight!r}")
        if self.periods < 1:
            raise InvariantViolation(f"cost periods must be >= 1, got {self.periods!r}")


@dataclass(frozen=True, eq=False)
class Roadmap:
    env: Environment
    nodes: np.ndarray  # (N, 2)
    edges: np.ndarray  # (E, 2) node index pairs, i < j, lexicographically sorted
    collision_step: float = DEFAULT_COLLISION_STEP


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(seed: int, stream: str) -> int:
    """Per-stream 64-bit seed: splitmix64 of the masked seed xor a stream salt."""
    return splitmix64((seed & MASK64) ^ _STREAM_SALT[stream])


def _rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stream))


# ---------------------------------------------------------------------------
# BiRRT
# ---------------------------------------------------------------------------

_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


class _Tree:
    def __init__(self, root: np.ndarray, capacity: int = 256) -> None:
        self.xy = np.empty((capacity, 2))
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.xy[0] = root
        self.size = 1

    def nearest(self, q: np.ndarray) -> int:
        d = self.xy[: self.size] - q
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def add(self, p: np.ndarray, parent: int) -> int:
        if self.size == len(self.xy):
            self.xy = np.concatenate([self.xy, np.empty_like(self.xy)])
            self.parent = np.concatenate([self.parent, np.full_like(self.parent, -1)])
        self.xy[self.size] = p
        self.parent[self.size] = parent
        self.size += 1
        return self.size - 1

    def branch(self, i: int) -> np.ndarray:
        """Waypoints root -> node i."""
        idx = []
        while i >= 0:
            idx.append(i)
            i = int(self.parent[i])
        return self.xy[idx[::-1]]


def _extend(env: Environment, tree: _Tree, q: np.ndarray, cfg: PlannerConfig) -> tuple[int, int]:
    i = tree.nearest(q)
    near = tree.xy[i]
    d = q - near
    dist = math.hypot(d[0], d[1])
    if dist == 0.0:
        return _REACHED, i
    reached = dist <= cfg.extend_step
    new = q.copy() if reached else near + d * (cfg.extend_step / dist)
    if not env.segments_free(near[None], new[None], cfg.collision_step)[0]:
        return _TRAPPED, -1
    return (_REACHED if reached else _ADVANCED), tree.add(new, i)


def _connect(env: Environment, tree: _Tree, q: np.ndarray, cfg: PlannerConfig) -> tuple[int, int]:
    status, i = _ADVANCED, -1
    while status == _ADVANCED:
        status, i = _extend(env, tree, q, cfg)
    return status, i


def birrt(problem: PlanningProblem, cfg: PlannerConfig, seed: int) -> Path:
    """Bidirectional RRT-Connect. Trees swap roles every iteration; after each
    successful extension the other tree greedily connects toward the new node."""
    env = problem.scene
    rng = _rng(seed, "birrt")
    start, goal = problem.start.as_array(), problem.goal.as_array()
    lo = np.array([env.bounds.xmin, env.bounds.ymin])
    hi = np.array([env.bounds.xmax, env.bounds.ymax])

    a, b = _Tree(start), _Tree(goal)
    a_is_start = True
    for _ in range(cfg.max_iterations):
        sample = rng.uniform(lo, hi)
        q = b.xy[0].copy() if rng.random() < cfg.goal_bias else sample
        status, i = _extend(env, a, q, cfg)
        if status != _TRAPPED:
            status, j = _connect(env, b, a.xy[i].copy(), cfg)
            if status == _REACHED:
                head, tail = (a.branch(i), b.branch(j)) if a_is_start else (b.branch(j), a.branch(i))
                w = np.concatenate([head, tail[::-1][1:]])
                w[0], w[-1] = start, goal
                return Path(w)
        a, b = b, a
        a_is_start = not a_is_start
    raise NoPath(f"birrt seed={seed}: no connection after {cfg.max_iterations} iterations")


# ---------------------------------------------------------------------------
# PRM
# ---------------------------------------------------------------------------


def prm_build(env: Environment, cfg: PlannerConfig, seed: int) -> Roadmap:
    rng = _rng(seed, "prm")
    lo = (env.bounds.xmin, env.bounds.ymin)
    hi = (env.bounds.xmax, env.bounds.ymax)
    kept: list[np.ndarray] = []
    count = 0
    for _ in range(50):
        batch = rng.uniform(lo, hi, size=(cfg.prm_samples, 2))
        free = batch[~env.collides_many(batch)]
        kept.append(free)
        count += len(free)
        if count >= cfg.prm_samples:
            break
    nodes = np.concatenate(kept)[: cfg.prm_samples] if kept else np.empty((0, 2))
    if len(nodes) < cfg.prm_samples:
        logger.debug("prm seed=%d: only %d free samples of %d", seed, len(nodes), cfg.prm_samples)

    edges = np.empty((0, 2), dtype=np.int64)
    if len(nodes) >= 2:
        pairs = cKDTree(nodes).query_pairs(r=cfg.prm_radius, output_type="ndarray").astype(np.int64)
        if len(pairs):
            pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
            ok = env.segments_free(nodes[pairs[:, 0]], nodes[pairs[:, 1]], cfg.collision_step)
            edges = pairs[ok]
    return Roadmap(env, nodes, edges, cfg.collision_step)


def edge_costs(cost: CostFunction, a: np.ndarray, b: np.ndarray, problem: PlanningProblem) -> np.ndarray:
    """Vectorized ``edge_cost`` over row-aligned (E, 2) arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    length = np.hypot(b[:, 0] - a[:, 0], b[:, 1] - a[:, 1])
    if cost.kind == "euclidean" or cost.weight == 0:
        return length
    if cost.kind == "sinusoidal" and cost.amplitude == 0:
        return length
    dev = _deviation(cost, (a + b) / 2.0, problem)
    return length * (1.0 + cost.weight * dev)


def _deviation(cost: CostFunction, m: np.ndarray, problem: PlanningProblem) -> np.ndarray:
    s, g = problem.start.as_array(), problem.goal.as_array()
    chord = g - s
    L = math.hypot(chord[0], chord[1])
    u = chord / L
    nrm = np.array([-u[1], u[0]])
    rel = m - s
    if cost.kind == "sinusoidal":
        t = np.clip(rel @ u / L, 0.0, 1.0)
        ref = cost.amplitude * np.sin(2.0 * math.pi * cost.periods * t)
        return np.abs(rel @ nrm - ref)

    h = cost.bulge
    if h == 0:
        t = np.clip(rel @ u / L, 0.0, 1.0)
        return np.linalg.norm(rel - t[:, None] * chord, axis=1)
    radius = (h * h + (L / 2.0) ** 2) / (2.0 * abs(h))
    mid = (s + g) / 2.0
    center = mid + nrm * (h - math.copysign(radius, h))
    av = mid + nrm * h - center
    sv = s - center
    half_span = abs(math.atan2(av[0] * sv[1] - av[1] * sv[0], av @ sv))
    dv = m - center
    phi = np.arctan2(av[0] * dv[:, 1] - av[1] * dv[:, 0], dv @ av)
    on_arc = np.abs(np.hypot(dv[:, 0], dv[:, 1]) - radius)
    to_ends = np.minimum(np.linalg.norm(m - s, axis=1), np.linalg.norm(m - g, axis=1))
    return np.where(np.abs(phi) <= half_span, on_arc, to_ends)


def edge_cost(cost: CostFunction, a: Point, b: Point, problem: PlanningProblem) -> float:
    return float(edge_costs(cost, a.as_array(), b.as_array(), problem)[0])


def path_cost(path: Path, cost: CostFunction, problem: PlanningProblem) -> float:
    w = path.waypoints
    return float(edge_costs(cost, w[:-1], w[1:], problem).sum())


def _attach(roadmap: Roadmap, p: np.ndarray) -> tuple[int, bool]:
    """Nearest roadmap node reachable from ``p`` by a free segment: (index, coincident)."""
    if len(roadmap.nodes) == 0:
        return -1, False
    d = np.hypot(roadmap.nodes[:, 0] - p[0], roadmap.nodes[:, 1] - p[1])
    order = np.argsort(d, kind="stable")
    if len(order) and d[order[0]] == 0.0:
        return int(order[0]), True
    ok = roadmap.env.segments_free(np.repeat(p[None], len(order), axis=0), roadmap.nodes[order], roadmap.collision_step)
    hits = np.flatnonzero(ok)
    if not len(hits):
        return -1, False
    return int(order[hits[0]]), False


def prm_query(roadmap: Roadmap, problem: PlanningProblem, cost: CostFunction) -> Path:
    """Minimum total ``edge_cost`` path from start to goal through the roadmap."""
    nodes = roadmap.nodes
    n = len(nodes)
    s, g = problem.start.as_array(), problem.goal.as_array()
    si, s_same = _attach(roadmap, s)
    gi, g_same = _attach(roadmap, g)
    if si < 0 or gi < 0:
        raise NoPath("prm: start or goal cannot reach any roadmap node")

    pts = np.concatenate([nodes, s[None], g[None]])
    src = si if s_same else n
    dst = gi if g_same else n + 1
    rows, cols = [roadmap.edges[:, 0]], [roadmap.edges[:, 1]]
    if not s_same:
        rows.append(np.array([n]))
        cols.append(np.array([si]))
    if not g_same:
        rows.append(np.array([n + 1]))
        cols.append(np.array([gi]))
    r = np.concatenate(rows).astype(np.int64)
    c = np.concatenate(cols).astype(np.int64)
    w = edge_costs(cost, pts[r], pts[c], problem)
    graph = csr_matrix((w, (r, c)), shape=(n + 2, n + 2))
    dist, pred = dijkstra(graph, directed=False, indices=src, return_predecessors=True)
    if not np.isfinite(dist[dst]):
        raise NoPath("prm: start and goal lie in different roadmap components")

    chain = [dst]
    while chain[-1] != src:
        chain.append(int(pred[chain[-1]]))
    waypoints = pts[chain[::-1]].copy()
    waypoints[0], waypoints[-1] = s, g
    return Path(waypoints)


# ---------------------------------------------------------------------------
# candidate generation
# ---------------------------------------------------------------------------


def cost_schedule(i: int, problem: PlanningProblem) -> CostFunction:
    """Cost function for PRM run ``i``: kinds rotate every run; each full round
    flips the bend side, and every second pair of rounds changes its size."""
    kind = COST_KINDS[i % 3]
    rnd = i // 3
    sign = 1.0 if rnd % 2 == 0 else -1.0
    variant = (rnd // 2) % 2
    L = problem.chord
    if kind == "sinusoidal":
        return CostFunction("sinusoidal", amplitude=sign * SINE_AMPLITUDE * L, periods=1 + variant)
    if kind == "circular":
        return CostFunction("circular", bulge=sign * ARC_BULGE[variant] * L)
    return CostFunction("euclidean")


def _run(problem: PlanningProblem, cfg: PlannerConfig, kind: str, i: int) -> Path | None:
    seed = (cfg.seed + i) & MASK64
    try:
        if kind == "birrt":
            return birrt(problem, cfg, seed)
        roadmap = prm_build(problem.scene, cfg, seed)
        return prm_query(roadmap, problem, cost_schedule(i, problem))
    except NoPath as exc:
        logger.debug("%s", exc)
        return None


def generate_candidates(problem: PlanningProblem, cfg: PlannerConfig) -> list[Path]:
    """Up to ``2 * cfg.n`` collision-free candidates, BiRRT first then PRM, by seed."""
    runs = [(kind, i) for kind in ("birrt", "prm") for i in range(cfg.n)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(lambda r: _run(problem, cfg, *r), runs))
    else:
        results = [_run(problem, cfg, kind, i) for kind, i in runs]
    paths = [p for p in results if p is not None]
    if not paths:
        raise CandidateGenerationFailed(f"all {len(runs)} planner runs returned NoPath")
    logger.info("generated %d candidates from %d runs", len(paths), len(runs))
    return paths


# ---------------------------------------------------------------------------
# candidate dumps: JSON array of paths, each an array of [x, y]
# ---------------------------------------------------------------------------


def dump_paths(paths: list[Path], path: str | FilePath) -> None:
    FilePath(path).write_text(json.dumps([p.to_list() for p in paths]), encoding="utf-8")


def load_paths(path: str | FilePath) -> list[Path]:
    try:
        data = json.loads(FilePath(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"{path}: candidate file not found") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, list):
        raise ParseError(f"{path}: candidate file must be a JSON array of paths")
    return [Path.from_list(p) for p in data]

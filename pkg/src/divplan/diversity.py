"""Reduce raw planner candidates to ``k`` representatives.

Every path is resampled to ``m`` waypoints at uniform arc-length spacing and
flattened to a 2m-vector (x1, y1, ..., xm, ym). Lloyd's K-means runs on those
vectors with k-means++ seeding; the member nearest each centroid is the
cluster's representative, so representatives are always real planner outputs.

Order invariance: Lloyd's runs on the feature rows sorted lexicographically,
and results are mapped back to input indices afterwards. Permuting the input
paths therefore permutes assignments and nothing else.

Clusters are numbered left to right as seen travelling from start to goal:
by descending mean signed offset of each centroid from its own chord. A
route's cluster index therefore follows from the scene, not from seeding.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus

from divplan.errors import InvariantViolation
from divplan.planner import Path

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClusterConfig:
    k: int = 5
    m: int = 32
    max_iter: int = 100
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvariantViolation(f"cluster k must be >= 1, got {self.k!r}")
        if self.m < 2:
            raise InvariantViolation(f"resample m must be >= 2, got {self.m!r}")
        if self.max_iter < 1:
            raise InvariantViolation(f"max_iter must be >= 1, got {self.max_iter!r}")


@dataclass(frozen=True, eq=False)
class Clustering:
    assignments: np.ndarray  # (n,) cluster index per input path
    centroids: np.ndarray  # (k, 2m)
    representatives: tuple[int, ...]  # input path index per cluster
    history: tuple[float, ...]  # within-cluster sum of squares after each iteration
    iterations: int

    @property
    def k(self) -> int:
        return len(self.representatives)

    @property
    def wcss(self) -> float:
        return self.history[-1] if self.history else 0.0


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def resample(path: Path, m: int) -> Path:
    """``m`` waypoints at uniform arc-length spacing; endpoints copied exactly."""
    if m < 2:
        raise InvariantViolation(f"resample m must be >= 2, got {m!r}")
    w = path.waypoints
    seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
    keep = np.concatenate(([True], seg > 0))
    pts = w[keep]
    if len(pts) == 1:
        return Path(np.repeat(pts, m, axis=0))
    s = np.concatenate(([0.0], np.cumsum(seg[seg > 0])))
    t = np.linspace(0.0, s[-1], m)
    out = np.column_stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])])
    out[0], out[-1] = w[0], w[-1]
    return Path(out)


def featurize(path: Path, m: int) -> np.ndarray:
    return resample(path, m).waypoints.reshape(-1).copy()


def feature_matrix(paths: Sequence[Path], m: int) -> np.ndarray:
    return np.stack([featurize(p, m) for p in paths])


# ---------------------------------------------------------------------------
# K-means
# ---------------------------------------------------------------------------


def _repair_empty(X: np.ndarray, labels: np.ndarray, centers: np.ndarray, k: int) -> None:
    """Move the farthest member of the largest cluster into each empty cluster (in place)."""
    for c in range(k):
        if np.any(labels == c):
            continue
        sizes = np.bincount(labels, minlength=k)
        big = int(np.argmax(sizes))
        members = np.flatnonzero(labels == big)
        d = np.einsum("ij,ij->i", X[members] - centers[big], X[members] - centers[big])
        far = int(members[np.argmax(d)])
        labels[far] = c
        logger.debug("empty cluster %d repaired with row %d from cluster %d", c, far, big)


def _lloyd(X: np.ndarray, k: int, cfg: ClusterConfig) -> tuple[np.ndarray, np.ndarray, list[float]]:
    centers, _ = kmeans_plusplus(X, n_clusters=k, random_state=cfg.seed % (2**32))
    centers = centers.astype(float)
    labels = np.full(len(X), -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(cfg.max_iter):
        new = np.argmin(cdist(X, centers, "sqeuclidean"), axis=1).astype(np.int64)
        _repair_empty(X, new, centers, k)
        centers = np.stack([X[new == c].mean(axis=0) for c in range(k)])
        diff = X - centers[new]
        history.append(float(np.einsum("ij,ij->", diff, diff)))
        if np.array_equal(new, labels):
            break
        labels = new
    return labels, centers, history


def _lateral_offsets(centers: np.ndarray) -> np.ndarray:
    """Mean signed offset of each centroid from its first-to-last chord, positive to the left."""
    pts = centers.reshape(len(centers), -1, 2)
    chord = pts[:, -1] - pts[:, 0]
    norm = np.linalg.norm(chord, axis=1)
    norm[norm == 0] = 1.0
    rel = pts - pts[:, :1]
    cross = chord[:, None, 0] * rel[..., 1] - chord[:, None, 1] * rel[..., 0]
    return cross.mean(axis=1) / norm


def cluster(paths: Sequence[Path], cfg: ClusterConfig) -> Clustering:
    """K-means over arc-length features; effective k = min(cfg.k, len(paths))."""
    if not paths:
        raise InvariantViolation("cluster needs at least one path")
    X = feature_matrix(paths, cfg.m)
    k = min(cfg.k, len(paths))
    order = np.lexsort(X.T[::-1])
    labels_sorted, centers, history = _lloyd(X[order], k, cfg)

    labels = np.empty(len(paths), dtype=np.int64)
    labels[order] = labels_sorted
    left = np.argsort(-_lateral_offsets(centers), kind="stable")
    rank = np.empty(k, dtype=np.int64)
    rank[left] = np.arange(k)
    labels, centers = rank[labels], centers[left]
    reps: list[int] = []
    for c in range(k):
        members = np.flatnonzero(labels == c)
        d = np.einsum("ij,ij->i", X[members] - centers[c], X[members] - centers[c])
        reps.append(int(members[d == d.min()].min()))
    return Clustering(labels, centers, tuple(reps), tuple(history), len(history))


def representatives_of(paths: Sequence[Path], clustering: Clustering) -> list[Path]:
    return [paths[i] for i in clustering.representatives]

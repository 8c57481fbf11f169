"""Binarization, DBSCAN clustering and localization error metrics."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import ConfigError
from .rti import VoxelImage


@dataclass
class BinarizedImage:
    active: np.ndarray  # sorted voxel indices
    threshold: float


@dataclass
class Cluster:
    members: np.ndarray
    centroid: tuple[float, float]
    score: float


@dataclass
class LocalizationResult:
    estimates: list[tuple[float, float]]
    truth: list[tuple[float, float]]
    errors: list[float]
    shortfall: bool = False
    clusters: list[Cluster] = field(default_factory=list)


def binarize(image: VoxelImage | np.ndarray, threshold: float = 0.5) -> BinarizedImage:
    """Voxels strictly above ``threshold * max``; an image with no positive max is empty."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must lie in (0, 1)")
    x = image.values if isinstance(image, VoxelImage) else np.asarray(image, dtype=float)
    peak = float(x.max()) if x.size else 0.0
    if peak <= 0.0:
        return BinarizedImage(np.zeros(0, dtype=np.int64), threshold)
    return BinarizedImage(np.nonzero(x > threshold * peak)[0], threshold)


def dbscan(points: np.ndarray, eps: float = 0.5, min_pts: int = 3) -> list[np.ndarray]:
    """Cluster labels by DBSCAN; returns member index arrays in discovery order.

    Points are visited in index order.  A core point has at least ``min_pts``
    points (itself included) within distance ``eps``.  Border points join the
    first cluster that reaches them; noise is left out.
    """
    if eps <= 0 or min_pts < 1:
        raise ConfigError("eps must be > 0 and min_pts >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []
    adj = cdist(pts, pts) <= eps
    neighbors = [np.nonzero(row)[0] for row in adj]
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    labels = np.full(n, -1)
    clusters: list[np.ndarray] = []
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        cid = len(clusters)
        labels[i] = cid
        queue = deque([i])
        members = [i]
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbors[p]:
                if labels[q] == -1:
                    labels[q] = cid
                    members.append(q)
                    queue.append(q)
        clusters.append(np.sort(np.array(members)))
    return clusters


def make_clusters(image: VoxelImage, active: BinarizedImage, eps: float = 0.5, min_pts: int = 3) -> list[Cluster]:
    """DBSCAN over active voxel centres, with value-weighted centroids."""
    idx = active.active
    if idx.size == 0:
        return []
    centers = image.grid.centers()[idx]
    out = []
    for members in dbscan(centers, eps, min_pts):
        vox = idx[members]
        wts = image.values[vox]
        score = float(wts.sum())
        c = (wts[:, None] * centers[members]).sum(axis=0) / score
        out.append(Cluster(vox, (float(c[0]), float(c[1])), score))
    return out


def estimate_positions(clusters: Sequence[Cluster], k: int = 1) -> tuple[list[tuple[float, float]], bool]:
    """Centroids of the ``k`` highest-scoring clusters and a shortfall flag."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    ranked = sorted(range(len(clusters)), key=lambda i: (-clusters[i].score, i))
    return [clusters[i].centroid for i in ranked[:k]], len(clusters) < k


def localization_error(
    estimates: Sequence[tuple[float, float]],
    truth: Sequence[tuple[float, float]],
    penalty: float,
) -> list[float]:
    """Per-truth error under the minimum-cost estimate assignment.

    Truths left without an estimate are charged ``penalty``.
    """
    if not truth:
        raise ConfigError("truth must be nonempty")
    errors = [float(penalty)] * len(truth)
    if estimates:
        cost = cdist(np.asarray(truth, dtype=float), np.asarray(estimates, dtype=float))
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            errors[r] = float(cost[r, c])
    return errors


def error_summary(errors: Sequence[float]) -> dict[str, float]:
    e = np.asarray(errors, dtype=float)
    return {"mean": float(e.mean()), "median": float(np.median(e)), "count": float(e.size)}


def empirical_cdf(errors: Sequence[float]) -> list[tuple[float, float]]:
    """(error, cumulative fraction) at every observed error, ending at 1.0."""
    e = np.sort(np.asarray(errors, dtype=float))
    n = e.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(e)]


def locate(image: VoxelImage, truth: Sequence[tuple[float, float]], k: int = 1, threshold: float = 0.5,
           eps: float = 0.5, min_pts: int = 3, penalty: float = 10.0) -> LocalizationResult:
    """Binarize, cluster, pick the dominant centroids and score them against ``truth``."""
    clusters = make_clusters(image, binarize(image, threshold), eps, min_pts)
    est, short = estimate_positions(clusters, k)
    errs = localization_error(est, truth, penalty) if truth else []
    return LocalizationResult(est, list(truth), errs, short, clusters)

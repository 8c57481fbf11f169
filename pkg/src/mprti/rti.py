"""Weight matrix construction and Elastic Net image reconstruction.

The solver minimizes::

    0.5 * ||y - W x||^2 + lam * ((1 - alpha) / 2 * ||x||^2 + alpha * ||x||_1)

by cyclic coordinate descent on the sparse columns of ``W`` (no column
standardization unless requested).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractError, GeometryError
from .geometry import Pathway, VoxelGrid

AUTO_1SE = "auto"


@dataclass(frozen=True)
class ElasticNetConfig:
    alpha: float = 0.87
    lam: float | str = AUTO_1SE
    cv_folds: int = 5
    max_iterations: int = 10_000
    tolerance: float = 1e-6
    cv_tolerance: float = 1e-4
    num_lambdas: int = 100
    lambda_decades: float = 4.0
    cv_seed: int = 0
    standardize: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if isinstance(self.lam, str):
            if self.lam != AUTO_1SE:
                raise ConfigError(f"lambda must be a number or {AUTO_1SE!r}")
        elif self.lam < 0:
            raise ConfigError("lambda must be >= 0")


@dataclass
class WeightMatrix:
    w: sp.csr_matrix
    gamma: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape


@dataclass
class VoxelImage:
    values: np.ndarray
    grid: VoxelGrid
    lam: float = 0.0
    converged: bool = True
    iterations: int = 0

    def as_2d(self) -> np.ndarray:
        """(ny, nx) array with row 0 at the smallest y."""
        return self.values.reshape(self.grid.ny, self.grid.nx)


def build_weight_matrix(pathways: Sequence[Pathway], grid: VoxelGrid, gamma: float) -> WeightMatrix:
    """Row u marks voxels inside the gamma-ellipse of any segment of path u, valued 1/sqrt(d_u)."""
    if gamma <= 0:
        raise ConfigError("gamma must be > 0")
    if not pathways:
        raise ContractError("at least one pathway is required")
    centers = grid.centers()
    half = grid.size / 2.0
    x0, y0 = grid.origin
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for u, path in enumerate(pathways):
        d = path.distance
        if d <= 0:
            raise GeometryError(f"pathway {u} has zero length")
        anchors = np.asarray(path.anchors(), dtype=float)
        hit = np.zeros(0, dtype=np.int64)
        for k in range(len(anchors) - 1):
            a, b = anchors[k], anchors[k + 1]
            seg = path.segment_lengths[k]
            # ellipse extent beyond the segment's bounding box is at most its semi-minor axis
            margin = 0.5 * math.sqrt(gamma * (2.0 * seg + gamma)) + half
            lo = np.minimum(a, b) - margin
            hi = np.maximum(a, b) + margin
            ix0 = max(0, int(math.floor((lo[0] - x0) / grid.size)))
            ix1 = min(grid.nx - 1, int(math.ceil((hi[0] - x0) / grid.size)))
            iy0 = max(0, int(math.floor((lo[1] - y0) / grid.size)))
            iy1 = min(grid.ny - 1, int(math.ceil((hi[1] - y0) / grid.size)))
            if ix0 > ix1 or iy0 > iy1:
                continue
            iy, ix = np.mgrid[iy0 : iy1 + 1, ix0 : ix1 + 1]
            idx = (iy * grid.nx + ix).ravel()
            c = centers[idx]
            detour = np.hypot(*(c - a).T) + np.hypot(*(c - b).T)
            hit = np.union1d(hit, idx[detour < seg + gamma])
        rows.append(np.full(hit.size, u, dtype=np.int64))
        cols.append(hit)
        vals.append(np.full(hit.size, 1.0 / math.sqrt(d)))
    w = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(pathways), grid.num_voxels),
    )
    return WeightMatrix(w, gamma)


@numba.njit(cache=True)
def _cd_kernel(indptr, indices, data, colsq, l1w, y, x, lam_l1, lam_l2, max_iter, tol):
    # residual r = y - W x
    r = y.copy()
    m = colsq.size
    for j in range(m):
        if x[j] != 0.0:
            for p in range(indptr[j], indptr[j + 1]):
                r[indices[p]] -= data[p] * x[j]
    active = np.zeros(m, dtype=np.bool_)
    it = 0
    converged = False
    while it < max_iter:
        # full sweep
        it += 1
        maxd = 0.0
        for j in range(m):
            cs = colsq[j]
            if cs == 0.0:
                continue
            xj = x[j]
            rho = cs * xj
            for p in range(indptr[j], indptr[j + 1]):
                rho += data[p] * r[indices[p]]
            thr = lam_l1 * l1w[j]
            if rho > thr:
                new = (rho - thr) / (cs + lam_l2)
            elif rho < -thr:
                new = (rho + thr) / (cs + lam_l2)
            else:
                new = 0.0
            delta = new - xj
            if delta != 0.0:
                for p in range(indptr[j], indptr[j + 1]):
                    r[indices[p]] -= data[p] * delta
                x[j] = new
                if abs(delta) > maxd:
                    maxd = abs(delta)
            active[j] = new != 0.0
        if maxd < tol:
            converged = True
            break
        # sweeps restricted to the active set
        act = np.nonzero(active)[0]
        while it < max_iter:
            it += 1
            maxd = 0.0
            for j in act:
                cs = colsq[j]
                xj = x[j]
                rho = cs * xj
                for p in range(indptr[j], indptr[j + 1]):
                    rho += data[p] * r[indices[p]]
                thr = lam_l1 * l1w[j]
                if rho > thr:
                    new = (rho - thr) / (cs + lam_l2)
                elif rho < -thr:
                    new = (rho + thr) / (cs + lam_l2)
                else:
                    new = 0.0
                delta = new - xj
                if delta != 0.0:
                    for p in range(indptr[j], indptr[j + 1]):
                        r[indices[p]] -= data[p] * delta
                    x[j] = new
                    if abs(delta) > maxd:
                        maxd = abs(delta)
            if maxd < tol:
                break
    return it, converged


class _Design:
    """Design matrix prepared for the coordinate-descent kernel.

    Identical nonzero columns are merged: ``k`` copies of column ``w`` become
    one column ``sqrt(k) * w`` whose L1 weight is ``sqrt(k)``.  For alpha < 1
    the optimum splits evenly across copies, so the reduced problem is an
    exact reparametrization (``t = s / sqrt(k)`` per copy).  All-zero columns
    are dropped; their coefficient is always 0.
    """

    def __init__(self, w):
        w = sp.csc_matrix(w, dtype=float)
        w.sum_duplicates()
        w.sort_indices()
        self.num_columns = w.shape[1]
        groups: dict[bytes, list[int]] = {}
        for j in range(w.shape[1]):
            lo, hi = w.indptr[j], w.indptr[j + 1]
            if lo == hi or not np.any(w.data[lo:hi]):
                continue
            key = w.indices[lo:hi].tobytes() + w.data[lo:hi].tobytes()
            groups.setdefault(key, []).append(j)
        self.groups = list(groups.values())
        reps = [g[0] for g in self.groups]
        mult = np.array([len(g) for g in self.groups], dtype=float)
        self.root = np.sqrt(mult)
        reduced = w[:, reps] @ sp.diags(self.root) if reps else sp.csc_matrix((w.shape[0], 0))
        reduced = sp.csc_matrix(reduced)
        reduced.sort_indices()
        self.indptr = reduced.indptr.astype(np.int64)
        self.indices = reduced.indices.astype(np.int64)
        self.data = reduced.data.astype(np.float64)
        self.colsq = np.asarray(reduced.multiply(reduced).sum(axis=0)).ravel()
        self.member = np.concatenate([np.array(g, dtype=np.int64) for g in self.groups]) if self.groups else np.zeros(0, np.int64)
        self.owner = np.repeat(np.arange(len(self.groups)), mult.astype(np.int64))

    def reduce(self, x: np.ndarray) -> np.ndarray:
        s = np.zeros(len(self.groups))
        np.add.at(s, self.owner, x[self.member])
        return s / self.root

    def expand(self, s: np.ndarray) -> np.ndarray:
        x = np.zeros(self.num_columns)
        x[self.member] = (s / self.root)[self.owner]
        return x

    def solve_reduced(self, y, lam, alpha, max_iter, tol, s0=None):
        s = np.zeros(len(self.groups)) if s0 is None else np.array(s0, dtype=float)
        it, conv = _cd_kernel(
            self.indptr, self.indices, self.data, self.colsq, self.root, np.asarray(y, dtype=float), s,
            lam * alpha, lam * (1.0 - alpha), max_iter, tol,
        )
        return s, int(it), bool(conv)

    def solve(self, y, lam, alpha, max_iter, tol, x0=None):
        s0 = None if x0 is None else self.reduce(np.asarray(x0, dtype=float))
        s, it, conv = self.solve_reduced(y, lam, alpha, max_iter, tol, s0)
        return self.expand(s), it, conv


def objective(w, y: np.ndarray, x: np.ndarray, lam: float, alpha: float) -> float:
    r = y - w @ x
    return 0.5 * float(r @ r) + lam * (0.5 * (1.0 - alpha) * float(x @ x) + alpha * float(np.abs(x).sum()))


def kkt_violation(w, y: np.ndarray, x: np.ndarray, lam: float, alpha: float) -> float:
    """Largest excess of the subgradient optimality conditions (0 at an exact optimum)."""
    g = np.asarray(w.T @ (y - w @ x)).ravel() - lam * (1.0 - alpha) * x
    nz = x != 0
    viol = np.zeros_like(x)
    viol[nz] = np.abs(g[nz] - lam * alpha * np.sign(x[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - lam * alpha, 0.0)
    return float(viol.max()) if viol.size else 0.0


def lambda_max(w, y: np.ndarray, alpha: float) -> float:
    return float(np.max(np.abs(w.T @ y))) / max(alpha, 1e-3) if w.shape[1] else 0.0


def lambda_grid(w, y: np.ndarray, alpha: float, num: int = 100, decades: float = 4.0) -> np.ndarray:
    """Geometric grid from lambda_max down ``decades`` decades (largest first)."""
    lmax = lambda_max(w, y, alpha)
    if lmax <= 0:
        return np.array([0.0])
    return lmax * np.logspace(0.0, -decades, num)


def fold_assignment(n: int, folds: int, seed: int = 0) -> np.ndarray:
    """Fold label per row: a seeded permutation cut into near-equal parts."""
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    for k, part in enumerate(np.array_split(perm, folds)):
        labels[part] = k
    return labels


def cv_curve(w, y: np.ndarray, alpha: float, lambdas: np.ndarray, folds: int, seed: int = 0,
             max_iter: int = 10_000, tol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of held-out squared error per lambda."""
    w = sp.csr_matrix(w)
    y = np.asarray(y, dtype=float)
    labels = fold_assignment(len(y), folds, seed)
    errs = np.zeros((folds, len(lambdas)))
    for k in range(folds):
        test = labels == k
        train = ~test
        design = _Design(w[train])
        wt, yt, ytr = w[test], y[test], y[train]
        s = None
        for i, lam in enumerate(lambdas):
            s, _, _ = design.solve_reduced(ytr, lam, alpha, max_iter, tol, s)
            res = yt - wt @ design.expand(s)
            errs[k, i] = float(res @ res) / max(int(test.sum()), 1)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / math.sqrt(folds)
    return mean, se


def select_lambda_1se(w, y: np.ndarray, alpha: float, folds: int = 5, seed: int = 0,
                      num: int = 100, decades: float = 4.0, max_iter: int = 10_000, tol: float = 1e-6) -> float:
    """Largest grid lambda whose CV error is within one SE of the minimum.

    Folds are reduced to leave-one-out when there are fewer rows than folds;
    with a single row no split exists and the smallest grid value is used.
    """
    y = np.asarray(y, dtype=float)
    lambdas = lambda_grid(w, y, alpha, num, decades)
    if not np.any(y) or lambdas[0] == 0.0:
        return float(lambdas[0])
    n = len(y)
    if n < 2:
        return float(lambdas[-1])
    k = min(folds, n)
    mean, se = cv_curve(w, y, alpha, lambdas, k, seed, max_iter, tol)
    best = int(np.argmin(mean))
    ok = np.nonzero(mean <= mean[best] + se[best])[0]
    return float(lambdas[ok.min()])


def elastic_net(w, y: np.ndarray, config: ElasticNetConfig = ElasticNetConfig(), grid: VoxelGrid | None = None) -> VoxelImage:
    """Elastic Net reconstruction; ``config.lam == "auto"`` selects lambda by 1-SE CV."""
    if isinstance(w, WeightMatrix):
        w = w.w
    y = np.asarray(y, dtype=float)
    if w.shape[0] != y.size:
        raise ContractError(f"W has {w.shape[0]} rows but y has {y.size} entries")
    scale = None
    if config.standardize:
        norms = np.sqrt(np.asarray(sp.csc_matrix(w).multiply(w).sum(axis=0)).ravel())
        scale = np.where(norms > 0, norms, 1.0)
        w = sp.csc_matrix(w) @ sp.diags(1.0 / scale)
    if config.lam == AUTO_1SE:
        lam = select_lambda_1se(w, y, config.alpha, config.cv_folds, config.cv_seed, config.num_lambdas,
                                config.lambda_decades, config.max_iterations, config.cv_tolerance)
    else:
        lam = float(config.lam)
    design = _Design(w)
    x, it, conv = design.solve(y, lam, config.alpha, config.max_iterations, config.tolerance)
    if scale is not None:
        x = x / scale
    if grid is None:
        grid = VoxelGrid((0.0, 0.0), 1.0, w.shape[1], 1)
    return VoxelImage(x, grid, lam, conv, it)

"""Bayesian optimization of the imaging hyperparameters (alpha, gamma, threshold)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .errors import ConfigError

JITTER = 1e-6
LENGTH_SCALES = np.geomspace(0.05, 2.0, 25)

DEFAULT_BOUNDS = {"alpha": (0.0, 1.0), "gamma": (0.005, 0.2)}
THRESHOLD_BOUNDS = (0.1, 0.9)


@dataclass(frozen=True)
class TuneSpace:
    bounds: dict[str, tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    budget: int = 30
    seed: int = 0
    candidates: int = 1024
    refine: int = 5
    penalty: float = 10.0

    def __post_init__(self):
        if not self.bounds:
            raise ConfigError("tune space needs at least one parameter")
        for name, (lo, hi) in self.bounds.items():
            if not lo < hi:
                raise ConfigError(f"bounds for {name} must satisfy lower < upper")
        if self.budget < self.dim + 2:
            raise ConfigError(f"budget must be >= {self.dim + 2}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def names(self) -> list[str]:
        return list(self.bounds)

    @property
    def initial_size(self) -> int:
        return min(self.budget, max(5, self.dim + 2))

    def to_params(self, u: np.ndarray) -> dict[str, float]:
        return {n: float(lo + (hi - lo) * ui) for (n, (lo, hi)), ui in zip(self.bounds.items(), u)}


@dataclass
class TuneTrace:
    params: list[dict[str, float]] = field(default_factory=list)
    values: list[float] = field(default_factory=list)

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.values))

    @property
    def best(self) -> tuple[dict[str, float], float]:
        i = self.best_index
        return self.params[i], self.values[i]

    def best_so_far(self) -> list[float]:
        return list(np.minimum.accumulate(self.values))


class GaussianProcess:
    """Zero-mean GP with an isotropic squared-exponential kernel on standardized targets.

    The length scale is picked from a fixed grid by marginal likelihood, which
    keeps the fit deterministic.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, length_scale: float | None = None):
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mu = float(y.mean())
        self.sd = float(y.std()) or 1.0
        self.z = (y - self.mu) / self.sd
        scales = LENGTH_SCALES if length_scale is None else [length_scale]
        best = None
        for ell in scales:
            fit = self._fit(ell)
            if fit is not None and (best is None or fit[0] > best[0]):
                best = fit
        if best is None:
            raise ConfigError("GP fit failed")
        _, self.ell, self.chol, self.weights = best

    def _kernel(self, a: np.ndarray, b: np.ndarray, ell: float) -> np.ndarray:
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return np.exp(-0.5 * d2 / ell**2)

    def _fit(self, ell: float):
        k = self._kernel(self.x, self.x, ell) + JITTER * np.eye(len(self.x))
        try:
            c = cho_factor(k, lower=True)
        except np.linalg.LinAlgError:
            return None
        w = cho_solve(c, self.z)
        loglik = -0.5 * self.z @ w - np.log(np.diag(c[0])).sum()
        return loglik, ell, c, w

    def predict(self, xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xq = np.atleast_2d(xq)
        ks = self._kernel(xq, self.x, self.ell)
        mean = ks @ self.weights
        v = cho_solve(self.chol, ks.T)
        var = np.maximum(1.0 - np.sum(ks * v.T, axis=1), 1e-12)
        return self.mu + self.sd * mean, self.sd * np.sqrt(var)


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    z = (best - mean) / std
    return (best - mean) * norm.cdf(z) + std * norm.pdf(z)


def _propose(gp: GaussianProcess, best: float, space: TuneSpace, rng: np.random.Generator) -> np.ndarray:
    cand = rng.random((space.candidates, space.dim))
    ei = expected_improvement(*gp.predict(cand), best)
    starts = cand[np.argsort(-ei, kind="stable")[: space.refine]]
    top_u, top_ei = starts[0], float(ei.max())

    def neg_ei(u):
        return -float(expected_improvement(*gp.predict(u[None, :]), best)[0])

    for s in starts:
        res = minimize(neg_ei, s, method="L-BFGS-B", bounds=[(0.0, 1.0)] * space.dim)
        if np.isfinite(res.fun) and -res.fun > top_ei:
            top_u, top_ei = np.clip(res.x, 0.0, 1.0), -float(res.fun)
    return top_u


def bayes_optimize(objective: Callable[[dict[str, float]], float], space: TuneSpace,
                   progress: Callable[[int, dict[str, float], float], None] | None = None) -> TuneTrace:
    """Minimize ``objective`` over ``space``: Latin hypercube start, then GP + expected improvement."""
    rng = np.random.default_rng(space.seed)
    design = qmc.LatinHypercube(d=space.dim, seed=rng).random(space.initial_size)
    trace = TuneTrace()
    units: list[np.ndarray] = []

    def evaluate(u: np.ndarray) -> None:
        p = space.to_params(u)
        v = float(objective(p))
        if not math.isfinite(v):
            v = space.penalty
        units.append(u)
        trace.params.append(p)
        trace.values.append(v)
        if progress:
            progress(len(trace.values) - 1, p, v)

    for u in design:
        evaluate(u)
    while len(trace.values) < space.budget:
        gp = GaussianProcess(np.array(units), np.array(trace.values))
        evaluate(_propose(gp, min(trace.values), space, rng))
    return trace


@dataclass(frozen=True)
class CalibrationScene:
    """One target position of a simulated scenario used for tuning."""

    simulator: object  # pipeline.Simulator
    position: tuple[float, float]
    index: int


class MeanErrorObjective:
    """Mean localization error over calibration scenes as a function of the parameters.

    RSS changes do not depend on the tuned parameters, so they are computed
    once per scene.  Unknown parameter names are rejected.
    """

    def __init__(self, scenes: Sequence[CalibrationScene]):
        if not scenes:
            raise ConfigError("calibration scenes must be nonempty")
        self.scenes = list(scenes)
        self._dy = [s.simulator.rss_change(s.position, s.index) for s in self.scenes]

    def errors(self, params: dict[str, float]) -> list[float]:
        unknown = set(params) - {"alpha", "gamma", "threshold"}
        if unknown:
            raise ConfigError(f"unknown tuning parameters {sorted(unknown)}")
        out = []
        for scene, dy in zip(self.scenes, self._dy):
            sim = scene.simulator
            sc = sim.scenario
            solver = replace(sc.solver, alpha=params.get("alpha", sc.solver.alpha))
            _, res = sim.localize(dy, scene.position, gamma=params.get("gamma", sc.gamma), solver=solver,
                                  threshold=params.get("threshold"))
            out.append(res.errors[0])
        return out

    def __call__(self, params: dict[str, float]) -> float:
        return float(np.mean(self.errors(params)))


def objective_mean_error(params: dict[str, float], scenes: Sequence[CalibrationScene]) -> float:
    return MeanErrorObjective(scenes)(params)

"""Scenario runs, parameter sweeps, tuning and protocol simulation with artifacts on disk."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import formats
from .config import RunConfig, config_snapshot
from .errors import MprtiError
from .geometry import enumerate_links, perimeter_nodes, trace_all
from .locate import LocalizationResult, empirical_cdf
from .pipeline import Scenario, Simulator
from .protocol import build_plan, build_switch_schedule, simulate_round, uniform_latency
from .tune import CalibrationScene, MeanErrorObjective, THRESHOLD_BOUNDS, TuneSpace, TuneTrace, bayes_optimize

log = logging.getLogger(__name__)


@dataclass
class PositionRecord:
    index: int
    result: LocalizationResult
    image: np.ndarray | None  # (ny, nx)
    note: str = ""


@dataclass
class ScenarioResult:
    records: list[PositionRecord]
    penalty: float

    @property
    def errors(self) -> list[float]:
        return [e for r in self.records for e in r.result.errors]

    def cdf(self) -> list[tuple[float, float]]:
        return empirical_cdf(self.errors) if self.errors else []

    def summary(self) -> dict[str, float]:
        e = np.asarray(self.errors, dtype=float)
        if e.size == 0:
            return {"positions": len(self.records), "median_m": float("nan"), "mean_m": float("nan"),
                    "frac_below_1m": float("nan"), "detected": 0}
        return {"positions": len(self.records), "median_m": float(np.median(e)), "mean_m": float(e.mean()),
                "frac_below_1m": float((e < 1.0).mean()),
                "detected": sum(bool(r.result.estimates) for r in self.records)}


_worker_sim: Simulator | None = None


def _init_worker(scenario: Scenario) -> None:
    global _worker_sim
    _worker_sim = Simulator(scenario)


def _run_one(sim: Simulator, index: int, position) -> PositionRecord:
    try:
        out = sim.run_position(index, position)
        note = "" if out.result.estimates else "no clusters"
        if not out.image.converged:
            note = (note + "; " if note else "") + "solver not converged"
        return PositionRecord(index, out.result, out.image.as_2d(), note)
    except MprtiError as exc:
        # degeneracies are charged the penalty and the run continues
        log.warning("position %d: %s", index, exc)
        truth = [position] if position is not None else []
        errs = [sim.penalty()] * len(truth)
        return PositionRecord(index, LocalizationResult([], truth, errs), None, f"{exc.category}: {exc}")


def _run_in_worker(args) -> PositionRecord:
    return _run_one(_worker_sim, *args)


def simulate_positions(scenario: Scenario, workers: int = 1, simulator: Simulator | None = None) -> ScenarioResult:
    """Localize every target position of ``scenario``; results are ordered by position index."""
    positions = list(scenario.positions)
    jobs = list(enumerate(positions)) if positions else [(0, None)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(scenario,)) as ex:
            records = list(ex.map(_run_in_worker, jobs))
        lp = scenario.locate.penalty
        penalty = scenario.scene().diagonal if lp is None else lp
    else:
        sim = simulator or Simulator(scenario)
        records = [_run_one(sim, i, p) for i, p in jobs]
        penalty = sim.penalty()
    return ScenarioResult(records, penalty)


def write_scenario_artifacts(out: Path, result: ScenarioResult) -> None:
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)
    for r in result.records:
        if r.image is not None:
            formats.write_pgm(img_dir / f"position_{r.index:03d}.pgm", r.image)
    rows = []
    for r in result.records:
        base = next(formats.result_rows([(r.index, r.result)]))
        rows.append([*base, r.note])
    formats.write_rows(out / "results.csv", [*formats.RESULT_HEADER, "note"], rows)
    formats.write_cdf(out / "cdf.csv", result.cdf())
    s = result.summary()
    formats.write_rows(out / "summary.csv", list(s), [list(s.values())])


def run_scenario(cfg: RunConfig, out: str | Path | None = None, workers: int = 1) -> ScenarioResult:
    """Run every target position and write images, results, CDF and a config snapshot."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config_snapshot(cfg))
    result = simulate_positions(cfg.scenario, workers)
    write_scenario_artifacts(out, result)
    return result


def sweep_scenario(cfg: RunConfig, value: int) -> Scenario:
    sc, lay = cfg.scenario, cfg.layout
    var = cfg.sweep.variable
    if var == "maxOrder":
        return replace(sc, max_order=value, channel_order=max(value, sc.channel_order))
    count, elements = (value, lay.elements) if var == "numNodes" else (lay.count, value)
    if lay.explicit and var == "numNodes":
        raise MprtiError("a numNodes sweep needs a generated node layout (nodes: {count, elements, inset})")
    if lay.explicit:
        nodes = tuple(replace(n, num_elements=value) for n in lay.explicit)
    else:
        nodes = perimeter_nodes(sc.width, sc.depth, count, elements, lay.inset)
    return replace(sc, nodes=nodes)


def run_sweep(cfg: RunConfig, out: str | Path | None = None, workers: int = 1) -> dict[int, ScenarioResult]:
    """One scenario run per sweep value plus combined CDF and summary tables."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config_snapshot(cfg))
    var = cfg.sweep.variable
    results: dict[int, ScenarioResult] = {}
    cdf_rows, summary_rows = [], []
    for v in cfg.sweep.values:
        sub = out / f"{var}_{v}"
        sub.mkdir(exist_ok=True)
        res = simulate_positions(sweep_scenario(cfg, v), workers)
        write_scenario_artifacts(sub, res)
        results[v] = res
        cdf_rows += [[var, v, e, c] for e, c in res.cdf()]
        s = res.summary()
        summary_rows.append([var, v, *s.values()])
        log.info("%s=%s median %.3f m", var, v, s["median_m"])
    formats.write_rows(out / "sweep_cdf.csv", ["variable", "value", "error_m", "cumulative_fraction"], cdf_rows)
    keys = list(ScenarioResult([], 0.0).summary())
    formats.write_rows(out / "sweep_summary.csv", ["variable", "value", *keys], summary_rows)
    return results


def calibration_scenes(cfg: RunConfig, simulator: Simulator | None = None) -> list[CalibrationScene]:
    sim = simulator or Simulator(cfg.scenario)
    pos = cfg.scenario.positions
    bad = [i for i in cfg.tune.calibration if not 0 <= i < len(pos)]
    if bad:
        raise MprtiError(f"calibration indices {bad} out of range for {len(pos)} positions")
    return [CalibrationScene(sim, pos[i], i) for i in cfg.tune.calibration]


def tune_space(cfg: RunConfig, penalty: float) -> TuneSpace:
    bounds = {"alpha": (0.0, 1.0), "gamma": (0.005, 0.2)}
    if cfg.tune.tune_threshold:
        bounds["threshold"] = THRESHOLD_BOUNDS
    return TuneSpace(bounds, cfg.tune.budget, cfg.tune.seed, penalty=penalty)


def run_tune(cfg: RunConfig, out: str | Path | None = None) -> TuneTrace:
    """Tune over the calibration positions; write the trace and an overlay config with the best values."""
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(config_snapshot(cfg))
    sim = Simulator(cfg.scenario)
    objective = MeanErrorObjective(calibration_scenes(cfg, sim))
    trace = bayes_optimize(objective, tune_space(cfg, sim.penalty()),
                           progress=lambda i, p, v: log.info("eval %d %s -> %.4f", i, p, v))
    formats.write_tune_trace(out / "tune_trace.csv", trace)
    best, value = trace.best
    lines = ["# best parameters from tuning; overlay onto a scenario config", f"# mean_error_m: {formats.fmt(value)}",
             "rti:", f"  alpha: {formats.fmt(best['alpha'])}", f"  gamma: {formats.fmt(best['gamma'])}"]
    if "threshold" in best:
        lines += ["locate:", f"  threshold: {formats.fmt(best['threshold'])}"]
    (out / "best_overlay.yaml").write_text("\n".join(lines) + "\n")
    return trace


def run_trace(cfg: RunConfig, out: str | Path | None = None) -> Path:
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = cfg.scenario.scene()
    pairs = enumerate_links(scene).links
    paths = [p for link in trace_all(scene, cfg.scenario.max_order) for p in link]
    target = out / "pathways.csv"
    formats.write_pathways(target, paths, pairs)
    return target


def run_protocol(cfg: RunConfig, out: str | Path | None = None):
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    p = cfg.protocol
    plan = build_plan(p.nodes, p.t_rep, p.local_save, p.guard_time)
    schedule = build_switch_schedule(p.elements, p.elements, p.symbol_length)
    log_ = simulate_round(plan, schedule, uniform_latency(p.latency_min, p.latency_max), cfg.scenario.seed,
                          p.transfer_time)
    formats.write_event_log(out / "events.csv", log_)
    text = formats.plan_text(plan) + f"snapshot_duration_s: {formats.fmt(schedule.duration)}\n" \
        + f"round_duration_s: {formats.fmt(log_.duration)}\n"
    (out / "plan.txt").write_text(text)
    return plan, schedule, log_

"""YAML run configuration with field and line diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .channel import WaveformSpec
from .errors import ConfigError
from .geometry import NodePlacement, perimeter_nodes
from .pipeline import LocateConfig, Scenario, position_grid
from .rti import AUTO_1SE, ElasticNetConfig

SWEEP_VARIABLES = ("numNodes", "numElements", "maxOrder")


@dataclass(frozen=True)
class NodeLayout:
    count: int = 4
    elements: int = 8
    inset: float = 1.0
    explicit: tuple[NodePlacement, ...] = ()


@dataclass(frozen=True)
class GridSpec:
    nx: int = 9
    ny: int = 7
    spacing: float = 0.5


@dataclass(frozen=True)
class SweepSpec:
    variable: str = "numNodes"
    values: tuple[int, ...] = (4, 8, 12)

    def __post_init__(self):
        if self.variable not in SWEEP_VARIABLES:
            raise ConfigError(f"sweep variable must be one of {SWEEP_VARIABLES}")
        if not self.values or any(int(v) != v or v < 0 for v in self.values):
            raise ConfigError("sweep values must be a nonempty list of non-negative integers")
        if self.variable != "maxOrder" and any(v < 1 for v in self.values):
            raise ConfigError("numNodes and numElements values must be positive")


@dataclass(frozen=True)
class TuneSpec:
    budget: int = 30
    seed: int = 0
    calibration: tuple[int, ...] = (3, 19, 31, 43, 59)
    tune_threshold: bool = False


@dataclass(frozen=True)
class ProtocolSpec:
    nodes: int = 4
    elements: int = 8
    symbol_length: float = 1.28e-6
    t_rep: float = 0.1
    latency_min: float = 1e-3
    latency_max: float = 20e-3
    local_save: bool = False
    guard_time: float = 0.0
    transfer_time: float = 10e-3


@dataclass(frozen=True)
class RunConfig:
    scenario: Scenario
    layout: NodeLayout = NodeLayout()
    grid: GridSpec | None = GridSpec()
    sweep: SweepSpec = SweepSpec()
    tune: TuneSpec = TuneSpec()
    protocol: ProtocolSpec = ProtocolSpec()
    out: str = "out"
    source: str = ""

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, scenario=replace(self.scenario, seed=seed), tune=replace(self.tune, seed=seed))

    def with_max_order(self, order: int) -> "RunConfig":
        sc = self.scenario
        return replace(self, scenario=replace(sc, max_order=order, channel_order=max(order, sc.channel_order)))


class _Lines:
    """Maps key paths of a YAML document to source line numbers."""

    def __init__(self, text: str):
        self.marks: dict[tuple, int] = {}
        node = yaml.compose(text) if text.strip() else None
        if node is not None:
            self._walk(node, ())

    def _walk(self, node, path):
        self.marks[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                self._walk(v, path + (k.value,))
                # report the key's line rather than where its value starts
                self.marks[path + (k.value,)] = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                self._walk(v, path + (i,))

    def line(self, path) -> int | None:
        path = tuple(path)
        while path not in self.marks and path:
            path = path[:-1]
        return self.marks.get(path)


class _Reader:
    def __init__(self, data: dict, lines: _Lines, source: str):
        self.data, self.lines, self.source = data, lines, source

    def fail(self, path, msg) -> ConfigError:
        ln = self.lines.line(path)
        where = f"{self.source}:{ln}" if ln else self.source
        return ConfigError(f"{where}: {'.'.join(map(str, path))}: {msg}")

    def section(self, name: str) -> dict:
        v = self.data.get(name, {})
        if v is None:
            return {}
        if not isinstance(v, dict):
            raise self.fail((name,), "expected a mapping")
        return v

    def take(self, sec: str, values: dict, key: str, kind, default):
        path = (sec, key) if sec else (key,)
        if key not in values:
            return default
        v = values[key]
        try:
            if kind is bool:
                if not isinstance(v, bool):
                    raise TypeError
                return v
            if kind is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError
                return int(v)
            if kind is float:
                if isinstance(v, str) and v.lower() in ("inf", "+inf", "-inf"):
                    return float(v)
                if isinstance(v, bool):
                    raise TypeError
                return float(v)
            if kind is str:
                if not isinstance(v, str):
                    raise TypeError
                return v
        except (TypeError, ValueError):
            raise self.fail(path, f"expected {kind.__name__}, got {v!r}") from None
        return v

    def check_keys(self, sec: str, values: dict, allowed):
        for k in values:
            if k not in allowed:
                raise self.fail((sec, k) if sec else (k,), f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _fields(cls) -> dict[str, Any]:
    return {f.name: f for f in fields(cls)}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        data = yaml.safe_load(text) if text.strip() else {}
        lines = _Lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        ln = f":{mark.line + 1}" if mark else ""
        raise ConfigError(f"{source}{ln}: invalid YAML: {getattr(exc, 'problem', exc)}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    r = _Reader(data, lines, source)
    top = {"room", "nodes", "waveform", "channel", "beamform", "rti", "locate", "targets", "sweep", "tune",
           "protocol", "seed", "out"}
    r.check_keys("", data, top)

    room = r.section("room")
    r.check_keys("room", room, {"width", "depth", "voxel_size", "antenna_height"})
    width = r.take("room", room, "width", float, 7.04)
    depth = r.take("room", room, "depth", float, 6.31)
    voxel = r.take("room", room, "voxel_size", float, 0.1)
    height = r.take("room", room, "antenna_height", float, 1.3)
    if width <= 0 or depth <= 0 or voxel <= 0:
        raise r.fail(("room",), "width, depth and voxel_size must be > 0")

    layout = _parse_nodes(r, data.get("nodes"))

    wf = r.section("waveform")
    r.check_keys("waveform", wf, set(_fields(WaveformSpec)))
    waveform = WaveformSpec(
        r.take("waveform", wf, "carrier_frequency", float, WaveformSpec.carrier_frequency),
        r.take("waveform", wf, "bandwidth", float, WaveformSpec.bandwidth),
        r.take("waveform", wf, "num_delay_bins", int, WaveformSpec.num_delay_bins),
        r.take("waveform", wf, "num_snapshots", int, WaveformSpec.num_snapshots),
    )

    ch = r.section("channel")
    ch_keys = {"max_order", "channel_order", "reflection_loss_db", "noise_db", "phase_drift_deg", "target_radius",
               "shadowing_db"}
    r.check_keys("channel", ch, ch_keys)
    base = Scenario()
    kw: dict[str, Any] = {}
    for key in ch_keys:
        kind = int if key.endswith("order") else float
        kw[key] = r.take("channel", ch, key, kind, getattr(base, key))
    if "max_order" in ch and "channel_order" not in ch:
        kw["channel_order"] = max(kw["max_order"], base.channel_order)
    for key in ("max_order", "channel_order"):
        if kw[key] not in (0, 1, 2):
            raise r.fail(("channel", key), "reflection order must be 0, 1 or 2")
    if kw["max_order"] > kw["channel_order"]:
        raise r.fail(("channel", "max_order"), "max_order cannot exceed channel_order")

    bf = r.section("beamform")
    r.check_keys("beamform", bf, {"floor_db", "power_form"})
    kw["floor_db"] = r.take("beamform", bf, "floor_db", float, base.floor_db)
    kw["power_form"] = r.take("beamform", bf, "power_form", str, base.power_form)
    if kw["power_form"] not in ("expectation", "printed"):
        raise r.fail(("beamform", "power_form"), "must be 'expectation' or 'printed'")

    rt = r.section("rti")
    solver_fields = _fields(ElasticNetConfig)
    r.check_keys("rti", rt, set(solver_fields) | {"gamma"})
    kw["gamma"] = r.take("rti", rt, "gamma", float, base.gamma)
    if kw["gamma"] <= 0:
        raise r.fail(("rti", "gamma"), "must be > 0")
    skw = {}
    for name in solver_fields:
        if name not in rt:
            continue
        if name == "lam":
            v = rt[name]
            skw[name] = v if v == AUTO_1SE else r.take("rti", rt, name, float, None)
        elif name == "standardize":
            skw[name] = r.take("rti", rt, name, bool, False)
        else:
            kind = int if name in ("cv_folds", "max_iterations", "num_lambdas", "cv_seed") else float
            skw[name] = r.take("rti", rt, name, kind, None)
    try:
        kw["solver"] = ElasticNetConfig(**skw)
    except ConfigError as exc:
        raise r.fail(("rti",), str(exc)) from None

    lc = r.section("locate")
    r.check_keys("locate", lc, set(_fields(LocateConfig)))
    loc = LocateConfig(
        r.take("locate", lc, "threshold", float, 0.5),
        r.take("locate", lc, "eps", float, 0.5),
        r.take("locate", lc, "min_pts", int, 3),
        r.take("locate", lc, "k", int, 1),
        r.take("locate", lc, "penalty", float, None),
    )
    if not 0 < loc.threshold < 1:
        raise r.fail(("locate", "threshold"), "must lie in (0, 1)")
    if loc.eps <= 0 or loc.min_pts < 1 or loc.k < 1:
        raise r.fail(("locate",), "eps must be > 0, min_pts and k >= 1")
    kw["locate"] = loc

    grid, positions = _parse_targets(r, data.get("targets"), width, depth)
    seed = r.take("", data, "seed", int, 0)

    sw = r.section("sweep")
    r.check_keys("sweep", sw, {"variable", "values"})
    try:
        sweep = SweepSpec(r.take("sweep", sw, "variable", str, SweepSpec.variable),
                          tuple(sw.get("values", SweepSpec.values)))
    except (ConfigError, TypeError) as exc:
        raise r.fail(("sweep",), str(exc)) from None

    tu = r.section("tune")
    r.check_keys("tune", tu, set(_fields(TuneSpec)))
    tune = TuneSpec(r.take("tune", tu, "budget", int, 30), r.take("tune", tu, "seed", int, seed),
                    tuple(tu.get("calibration", TuneSpec.calibration)), r.take("tune", tu, "tune_threshold", bool, False))

    pr = r.section("protocol")
    r.check_keys("protocol", pr, set(_fields(ProtocolSpec)))
    pdef = ProtocolSpec()
    pkw = {}
    for name, f in _fields(ProtocolSpec).items():
        kind = {int: int, float: float, bool: bool}[type(getattr(pdef, name))]
        pkw[name] = r.take("protocol", pr, name, kind, getattr(pdef, name))
    protocol = ProtocolSpec(**pkw)

    out = r.take("", data, "out", str, "out")
    nodes = layout.explicit or perimeter_nodes(width, depth, layout.count, layout.elements, layout.inset)
    scenario = Scenario(width=width, depth=depth, nodes=nodes, voxel_size=voxel, antenna_height=height,
                        waveform=waveform, positions=positions, seed=seed, **kw)
    try:
        scenario.scene()
    except Exception as exc:
        raise r.fail(("nodes",), str(exc)) from None
    return RunConfig(scenario, layout, grid, sweep, tune, protocol, out, text)


def _parse_nodes(r: _Reader, v) -> NodeLayout:
    if v is None:
        return NodeLayout()
    if isinstance(v, dict):
        r.check_keys("nodes", v, {"count", "elements", "inset"})
        lay = NodeLayout(r.take("nodes", v, "count", int, 4), r.take("nodes", v, "elements", int, 8),
                         r.take("nodes", v, "inset", float, 1.0))
        if lay.count < 2 or lay.elements < 1:
            raise r.fail(("nodes",), "need count >= 2 and elements >= 1")
        return lay
    if isinstance(v, list):
        out = []
        for i, n in enumerate(v):
            if not isinstance(n, dict) or "position" not in n:
                raise r.fail(("nodes", i), "each node needs a position")
            try:
                x, y = (float(c) for c in n["position"])
                out.append(NodePlacement(int(n.get("id", i + 1)), (x, y), float(n.get("boresight", 0.0)),
                                         int(n.get("elements", 1))))
            except (TypeError, ValueError):
                raise r.fail(("nodes", i), "malformed node entry") from None
        if len(out) < 2:
            raise r.fail(("nodes",), "at least two nodes are required")
        return NodeLayout(len(out), out[0].num_elements, 0.0, tuple(out))
    raise r.fail(("nodes",), "expected a mapping (count/elements/inset) or a list of nodes")


def _parse_targets(r: _Reader, v, width, depth):
    if v is None:
        g = GridSpec()
        return g, position_grid(width, depth, g.nx, g.ny, g.spacing)
    if isinstance(v, dict):
        r.check_keys("targets", v, {"grid", "positions"})
        if "positions" in v:
            return None, _positions(r, v["positions"], width, depth)
        gd = v.get("grid") or {}
        r.check_keys("targets", gd, {"nx", "ny", "spacing"})
        g = GridSpec(r.take("targets", gd, "nx", int, 9), r.take("targets", gd, "ny", int, 7),
                     r.take("targets", gd, "spacing", float, 0.5))
        pos = position_grid(width, depth, g.nx, g.ny, g.spacing)
        _check_inside(r, pos, width, depth)
        return g, pos
    if isinstance(v, list):
        return None, _positions(r, v, width, depth)
    raise r.fail(("targets",), "expected a grid mapping or a list of positions")


def _positions(r, v, width, depth):
    if not isinstance(v, list):
        raise r.fail(("targets",), "positions must be a list")
    pos = []
    for i, p in enumerate(v):
        try:
            x, y = (float(c) for c in p)
        except (TypeError, ValueError):
            raise r.fail(("targets", i), f"malformed position {p!r}") from None
        pos.append((x, y))
    _check_inside(r, pos, width, depth)
    return tuple(pos)


def _check_inside(r, pos, width, depth):
    for i, (x, y) in enumerate(pos):
        if not (0 < x < width and 0 < y < depth):
            raise r.fail(("targets", i), f"position ({x}, {y}) lies outside the room")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return parse_config("", "<defaults>")
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p))


def _plain(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def config_snapshot(cfg: RunConfig) -> str:
    """Fully resolved configuration as YAML, written next to every run's outputs."""
    sc = cfg.scenario
    doc = {
        "room": {"width": sc.width, "depth": sc.depth, "voxel_size": sc.voxel_size, "antenna_height": sc.antenna_height},
        "nodes": [{"id": n.id, "position": list(n.position), "boresight": n.boresight, "elements": n.num_elements}
                  for n in sc.nodes],
        "waveform": asdict(sc.waveform),
        "channel": {k: getattr(sc, k) for k in ("max_order", "channel_order", "reflection_loss_db", "noise_db",
                                                "phase_drift_deg", "target_radius", "shadowing_db")},
        "beamform": {"floor_db": sc.floor_db, "power_form": sc.power_form},
        "rti": {"gamma": sc.gamma, **asdict(sc.solver)},
        "locate": asdict(sc.locate),
        "targets": {"positions": [list(p) for p in sc.positions]},
        "sweep": {"variable": cfg.sweep.variable, "values": list(cfg.sweep.values)},
        "tune": asdict(cfg.tune),
        "protocol": asdict(cfg.protocol),
        "seed": sc.seed,
    }
    if doc["locate"]["penalty"] is None:
        del doc["locate"]["penalty"]
    return yaml.safe_dump(_plain(doc), sort_keys=False)

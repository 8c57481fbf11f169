"""End-to-end simulation: channels -> RSS changes -> image -> position estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .beamform import DEFAULT_FLOOR_DB, PowerForm, RssChangeVector, link_rss_change
from .channel import TargetModel, WaveformSpec, default_path_gain, response_matrix, synthesize_link
from .errors import ConfigError
from .geometry import NodePlacement, Pathway, Scene, enumerate_links, perimeter_nodes, trace_pathways
from .locate import LocalizationResult, locate
from .rti import ElasticNetConfig, VoxelImage, build_weight_matrix, elastic_net

Point = tuple[float, float]

# RNG stream tags keep baseline and target-present noise independent
_BASELINE = 0
_PRESENT = 1


@dataclass(frozen=True)
class LocateConfig:
    threshold: float = 0.5
    eps: float = 0.5
    min_pts: int = 3
    k: int = 1
    penalty: float | None = None  # defaults to the room diagonal


@dataclass(frozen=True)
class Scenario:
    width: float = 7.04
    depth: float = 6.31
    nodes: tuple[NodePlacement, ...] = field(default_factory=lambda: perimeter_nodes(7.04, 6.31, 4, 8, inset=1.0))
    voxel_size: float = 0.1
    antenna_height: float = 1.3
    waveform: WaveformSpec = WaveformSpec()
    positions: tuple[Point, ...] = ()
    target_radius: float = 0.3
    shadowing_db: float = math.inf
    max_order: int = 2
    channel_order: int = 2
    reflection_loss_db: float = 6.0
    noise_db: float = -40.0
    phase_drift_deg: float = 0.0
    floor_db: float = DEFAULT_FLOOR_DB
    power_form: PowerForm = "expectation"
    gamma: float = 0.03
    solver: ElasticNetConfig = ElasticNetConfig()
    locate: LocateConfig = LocateConfig()
    seed: int = 0

    def scene(self) -> Scene:
        return Scene(self.width, self.depth, self.nodes, self.voxel_size, self.antenna_height)

    def with_nodes(self, count: int, elements: int, inset: float = 1.0) -> "Scenario":
        return replace(self, nodes=perimeter_nodes(self.width, self.depth, count, elements, inset))


def position_grid(width: float, depth: float, nx: int = 9, ny: int = 7, spacing: float = 0.5) -> tuple[Point, ...]:
    """``nx * ny`` target positions at ``spacing`` centred in the room (63 by default)."""
    x0 = width / 2.0 - spacing * (nx - 1) / 2.0
    y0 = depth / 2.0 - spacing * (ny - 1) / 2.0
    return tuple((round(x0 + i * spacing, 6), round(y0 + j * spacing, 6)) for j in range(ny) for i in range(nx))


@dataclass
class _Link:
    pair: tuple[int, int]
    num_tx: int
    num_rx: int
    physical: list[Pathway]
    model: list[Pathway]
    gains: np.ndarray
    a_physical: np.ndarray
    a_model: np.ndarray


@dataclass
class PositionOutcome:
    index: int
    truth: Point | None
    dy: RssChangeVector
    image: VoxelImage
    result: LocalizationResult


class Simulator:
    """Holds the traced links of a scenario and turns target positions into RSS changes.

    The physical channel always contains every pathway up to
    ``channel_order``; the model used for beamforming and the weight matrix
    uses pathways up to ``max_order``.
    """

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.scene = scenario.scene()
        if scenario.max_order > scenario.channel_order:
            raise ConfigError("max_order cannot exceed channel_order")
        spec = scenario.waveform
        self.links: list[_Link] = []
        for l, pair in enumerate(enumerate_links(self.scene).links):
            tx, rx = self.scene.node(pair[0]), self.scene.node(pair[1])
            phys = trace_pathways(self.scene, pair, scenario.channel_order, link_index=l)
            model = [p for p in phys if p.order <= scenario.max_order]
            gains = np.array([default_path_gain(p, spec, scenario.reflection_loss_db) for p in phys])
            a_phys = response_matrix(phys, spec, tx.num_elements, rx.num_elements)
            a_model = a_phys[:, [p.index for p in model]]
            self.links.append(_Link(pair, tx.num_elements, rx.num_elements, phys, model, gains, a_phys, a_model))
        self.model_paths = [p for lk in self.links for p in lk.model]
        self._baseline = [self._snapshots(l, (), (_BASELINE,)) for l in range(len(self.links))]
        self._weights: dict[float, object] = {}

    def _snapshots(self, l: int, targets: Sequence[TargetModel], tag: tuple[int, ...]) -> np.ndarray:
        s = self.scenario
        lk = self.links[l]
        snaps = synthesize_link(
            lk.physical, lk.gains, s.waveform, lk.num_tx, lk.num_rx, targets, s.noise_db,
            seed=(s.seed, *tag), phase_drift_std_deg=s.phase_drift_deg, link=l, responses=lk.a_physical,
        )
        return np.column_stack([sn.h for sn in snaps])

    def targets_at(self, position: Point | None) -> list[TargetModel]:
        if position is None:
            return []
        if not self.scene.contains(position):
            raise ConfigError(f"target position {position} lies outside the room")
        return [TargetModel(position, self.scenario.target_radius, self.scenario.shadowing_db)]

    def rss_change(self, position: Point | None, index: int = 0) -> RssChangeVector:
        """Stacked dB change of every model pathway with a target at ``position``."""
        targets = self.targets_at(position)
        vals, index_map, dropped = [], [], []
        for l, lk in enumerate(self.links):
            if not lk.model:
                continue
            cur = self._snapshots(l, targets, (_PRESENT, index)) if targets else self._baseline[l]
            dy, valid = link_rss_change(cur, self._baseline[l], lk.a_model, self.scenario.floor_db, self.scenario.power_form)
            for i, p in enumerate(lk.model):
                (index_map if valid[i] else dropped).append((l, p.index))
            vals.append(dy[valid])
        return RssChangeVector(np.concatenate(vals) if vals else np.zeros(0), index_map, dropped)

    def weight_matrix(self, gamma: float):
        if gamma not in self._weights:
            self._weights[gamma] = build_weight_matrix(self.model_paths, self.scene.grid, gamma).w
        return self._weights[gamma]

    def rows_for(self, dy: RssChangeVector) -> np.ndarray:
        """Weight-matrix rows matching the (link, path) entries kept in ``dy``."""
        lookup = {(p.link, p.index): u for u, p in enumerate(self.model_paths)}
        return np.array([lookup[key] for key in dy.index_map], dtype=np.int64)

    def reconstruct(self, dy: RssChangeVector, gamma: float, solver: ElasticNetConfig) -> VoxelImage:
        w = self.weight_matrix(gamma)[self.rows_for(dy)]
        # attenuation is positive where paths are shadowed
        return elastic_net(w, -dy.values, solver, self.scene.grid)

    def penalty(self) -> float:
        p = self.scenario.locate.penalty
        return self.scene.diagonal if p is None else p

    def localize(self, dy: RssChangeVector, truth: Point | None, gamma: float | None = None,
                 solver: ElasticNetConfig | None = None, threshold: float | None = None) -> tuple[VoxelImage, LocalizationResult]:
        s = self.scenario
        image = self.reconstruct(dy, s.gamma if gamma is None else gamma, s.solver if solver is None else solver)
        lc = s.locate
        res = locate(image, [truth] if truth is not None else [], lc.k, lc.threshold if threshold is None else threshold,
                     lc.eps, lc.min_pts, self.penalty())
        return image, res

    def run_position(self, index: int, position: Point | None) -> PositionOutcome:
        dy = self.rss_change(position, index)
        image, res = self.localize(dy, position)
        return PositionOutcome(index, position, dy, image, res)

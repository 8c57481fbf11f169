"""Per-pathway RSS change by double-directional delay-angular beamforming."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .channel import ChannelSnapshot, WaveformSpec, response_matrix
from .errors import ContractError
from .geometry import Pathway

log = logging.getLogger(__name__)

DEFAULT_FLOOR_DB = -60.0
DEGENERATE_RATIO = 1e-15

PowerForm = Literal["expectation", "printed"]


@dataclass
class CorrelationMatrix:
    r: np.ndarray
    snapshot_count: int


@dataclass
class RssChangeVector:
    """Stacked per-path RSS changes (dB) and the (link, path) behind each row."""

    values: np.ndarray
    index_map: list[tuple[int, int]]
    dropped: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.values)


def snapshot_matrix(snapshots: Sequence[ChannelSnapshot]) -> np.ndarray:
    """Columns are the snapshot vectors."""
    if not snapshots:
        raise ContractError("at least one snapshot is required")
    n = snapshots[0].h.size
    if any(s.h.size != n for s in snapshots):
        raise ContractError("snapshots have unequal lengths")
    return np.column_stack([s.h for s in snapshots])


def correlation(snapshots: Sequence[ChannelSnapshot]) -> CorrelationMatrix:
    """Sample mean of h h^H over the snapshots."""
    h = snapshot_matrix(snapshots)
    return CorrelationMatrix(h @ h.conj().T / h.shape[1], h.shape[1])


def beam_power(r: CorrelationMatrix | np.ndarray, a: np.ndarray) -> float:
    """Quadratic form a^H R R^H a."""
    mat = r.r if isinstance(r, CorrelationMatrix) else np.asarray(r)
    a = np.asarray(a)
    if mat.shape != (a.size, a.size):
        raise ContractError(f"steering length {a.size} does not match R of shape {mat.shape}")
    v = mat.conj().T @ a
    return float(np.real(np.vdot(v, v)))


def beam_powers(h: np.ndarray, a: np.ndarray, form: PowerForm = "expectation") -> np.ndarray:
    """Beam power of every steering column of ``a`` against snapshot matrix ``h``.

    Never forms R.  ``"expectation"`` gives a^H R a = mean |a^H h|^2;
    ``"printed"`` gives a^H R R^H a = ||R a||^2 with R a = H (H^H a) / S.
    """
    s = h.shape[1]
    proj = h.conj().T @ a  # (S, P): h_s^H a_p
    if form == "expectation":
        return np.mean(np.abs(proj) ** 2, axis=0)
    if form == "printed":
        ra = h @ proj / s
        return np.sum(np.abs(ra) ** 2, axis=0)
    raise ValueError(f"unknown power form {form!r}")


def link_rss_change(
    current: Sequence[ChannelSnapshot] | np.ndarray,
    baseline: Sequence[ChannelSnapshot] | np.ndarray,
    steering: np.ndarray,
    floor_db: float = DEFAULT_FLOOR_DB,
    form: PowerForm = "expectation",
) -> tuple[np.ndarray, np.ndarray]:
    """Per-path dB change for one link; returns (values, valid mask).

    Paths whose baseline power is zero or below ``DEGENERATE_RATIO`` times the
    strongest baseline path power are marked invalid.
    """
    hc = current if isinstance(current, np.ndarray) else snapshot_matrix(current)
    hb = baseline if isinstance(baseline, np.ndarray) else snapshot_matrix(baseline)
    if hc.shape[0] != steering.shape[0] or hb.shape[0] != steering.shape[0]:
        raise ContractError("snapshot length does not match steering vectors")
    pc = beam_powers(hc, steering, form)
    pb = beam_powers(hb, steering, form)
    valid = pb > 0
    if valid.any():
        valid &= pb > DEGENERATE_RATIO * pb.max()
    with np.errstate(divide="ignore", invalid="ignore"):
        dy = 10.0 * np.log10(pc / np.where(valid, pb, 1.0))
    dy = np.where(np.isfinite(dy), dy, floor_db)
    dy = np.maximum(dy, floor_db)
    return np.where(valid, dy, 0.0), valid


def rss_change(
    current: Sequence[Sequence[ChannelSnapshot]],
    baseline: Sequence[Sequence[ChannelSnapshot]],
    pathways: Sequence[Sequence[Pathway]],
    spec: WaveformSpec,
    floor_db: float = DEFAULT_FLOOR_DB,
    form: PowerForm = "expectation",
) -> RssChangeVector:
    """Stacked RSS change vector over all links.

    ``current[l]``, ``baseline[l]`` and ``pathways[l]`` belong to link ``l``.
    Degenerate paths are left out of the vector and listed in ``dropped``.
    """
    if not (len(current) == len(baseline) == len(pathways)):
        raise ContractError("current, baseline and pathways must cover the same links")
    values: list[np.ndarray] = []
    index_map: list[tuple[int, int]] = []
    dropped: list[tuple[int, int]] = []
    for l, (cur, base, paths) in enumerate(zip(current, baseline, pathways)):
        if not paths:
            continue
        first = cur[0]
        a = response_matrix(paths, spec, first.num_tx, first.num_rx)
        dy, valid = link_rss_change(cur, base, a, floor_db, form)
        for i, ok in enumerate(valid):
            if ok:
                index_map.append((l, paths[i].index))
            else:
                dropped.append((l, paths[i].index))
                log.warning("link %d path %d: degenerate baseline beam power, dropped", l, paths[i].index)
        values.append(dy[valid])
    vals = np.concatenate(values) if values else np.zeros(0)
    return RssChangeVector(vals, index_map, dropped)

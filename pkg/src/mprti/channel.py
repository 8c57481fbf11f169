"""Vectorized MIMO-OFDM channel synthesis from traced pathways.

A link's channel vector stacks Tx element, Rx element and delay bin with the
delay index varying fastest (Kronecker order Tx (x) Rx (x) delay).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .geometry import SPEED_OF_LIGHT, Pathway


@dataclass(frozen=True)
class WaveformSpec:
    carrier_frequency: float = 4.85001e9
    bandwidth: float = 100e6
    num_delay_bins: int = 128
    num_snapshots: int = 10

    def __post_init__(self) -> None:
        if self.num_delay_bins < 1 or self.num_snapshots < 1:
            raise ConfigError("num_delay_bins and num_snapshots must be >= 1")
        if self.bandwidth <= 0 or self.carrier_frequency <= 0:
            raise ConfigError("bandwidth and carrier frequency must be > 0")

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.num_delay_bins

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True)
class TargetModel:
    center: tuple[float, float]
    radius: float = 0.3
    shadowing_db: float = math.inf

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ConfigError("target radius must be > 0")

    @property
    def amplitude_factor(self) -> float:
        if math.isinf(self.shadowing_db):
            return 0.0
        return 10.0 ** (-self.shadowing_db / 20.0)


@dataclass(frozen=True)
class ChannelSnapshot:
    link: int
    t: int
    h: np.ndarray
    num_tx: int
    num_rx: int
    num_delay_bins: int


def steering_tx(phi: float, num_elements: int) -> np.ndarray:
    """Half-wavelength ULA response, entries exp(-j pi m sin phi)."""
    m = np.arange(num_elements)
    return np.exp(-1j * np.pi * m * np.sin(phi))


steering_rx = steering_tx


def autocorr(t: np.ndarray | float, spec: WaveformSpec) -> np.ndarray:
    """OFDM preamble autocorrelation at lag ``t`` (seconds), value 1 at zero lag."""
    t = np.asarray(t, dtype=float)
    d = spec.num_delay_bins
    x = spec.subcarrier_spacing * t
    den = np.sin(np.pi * x)
    near = np.abs(den) < 1e-12
    safe = np.where(near, 1.0, den)
    ratio = np.where(near, d * np.cos(np.pi * d * x) / np.cos(np.pi * x), np.sin(np.pi * d * x) / safe)
    return np.exp(-1j * np.pi * x) * ratio / d


def autocorr_vector(tau: float, spec: WaveformSpec) -> np.ndarray:
    bins = np.arange(spec.num_delay_bins) / spec.bandwidth
    return autocorr(bins - tau, spec)


def response(tau: float, aod: float, aoa: float, spec: WaveformSpec, num_tx: int, num_rx: int) -> np.ndarray:
    return np.kron(np.kron(steering_tx(aod, num_tx), steering_rx(aoa, num_rx)), autocorr_vector(tau, spec))


def path_response(path: Pathway, spec: WaveformSpec, num_tx: int, num_rx: int) -> np.ndarray:
    """Unit-gain combined delay-angular response of one pathway."""
    return response(path.delay, path.aod, path.aoa, spec, num_tx, num_rx)


def response_matrix(paths: Sequence[Pathway], spec: WaveformSpec, num_tx: int, num_rx: int) -> np.ndarray:
    """Columns are :func:`path_response` for each pathway."""
    if not paths:
        return np.zeros((num_tx * num_rx * spec.num_delay_bins, 0), dtype=complex)
    return np.column_stack([path_response(p, spec, num_tx, num_rx) for p in paths])


def default_path_gain(path: Pathway, spec: WaveformSpec, reflection_loss_db: float = 6.0) -> complex:
    """Free-space amplitude with a fixed loss per wall bounce and carrier phase."""
    d = path.distance
    if d <= 0:
        raise ContractError("path distance must be > 0")
    amp = spec.wavelength / (4.0 * math.pi * d) * 10.0 ** (-reflection_loss_db * path.order / 20.0)
    return amp * complex(np.exp(-2j * math.pi * spec.carrier_frequency * path.delay))


def reference_amplitude(spec: WaveformSpec) -> float:
    """Free-space amplitude at 1 m; the unit against which noise power is quoted."""
    return spec.wavelength / (4.0 * math.pi)


def _segment_point_distance(a: tuple[float, float], b: tuple[float, float], p: tuple[float, float]) -> float:
    ax, ay = a
    vx, vy = b[0] - ax, b[1] - ay
    wx, wy = p[0] - ax, p[1] - ay
    vv = vx * vx + vy * vy
    s = 0.0 if vv == 0.0 else min(1.0, max(0.0, (wx * vx + wy * vy) / vv))
    return math.hypot(wx - s * vx, wy - s * vy)


def is_blocked(path: Pathway, target: TargetModel) -> bool:
    """True iff some segment passes through the open disk of the target."""
    anchors = path.anchors()
    return any(
        _segment_point_distance(anchors[k], anchors[k + 1], target.center) < target.radius
        for k in range(len(anchors) - 1)
    )


def blockage_factors(paths: Sequence[Pathway], targets: Sequence[TargetModel]) -> np.ndarray:
    f = np.ones(len(paths))
    for i, p in enumerate(paths):
        for tg in targets:
            if is_blocked(p, tg):
                f[i] *= tg.amplitude_factor
    return f


def synthesize_link(
    paths: Sequence[Pathway],
    gains: Sequence[complex],
    spec: WaveformSpec,
    num_tx: int,
    num_rx: int,
    targets: Sequence[TargetModel] = (),
    noise_power_db: float = -math.inf,
    seed: int | Sequence[int] = 0,
    phase_drift_std_deg: float = 0.0,
    link: int = 0,
    responses: np.ndarray | None = None,
) -> list[ChannelSnapshot]:
    """Noisy snapshots ``h = sum_u gamma_u b_u a_u + n`` for one link.

    ``noise_power_db`` is the per-element complex noise variance relative to
    the squared free-space amplitude at 1 m.  Each snapshot uses its own RNG
    stream derived from ``(seed, link, t)`` so that links and snapshots can be
    generated in any order.  A precomputed :func:`response_matrix` may be
    passed as ``responses`` to avoid rebuilding it.
    """
    gains = np.asarray(gains, dtype=complex)
    if len(gains) != len(paths):
        raise ContractError(f"{len(gains)} gains for {len(paths)} pathways")
    a = response_matrix(paths, spec, num_tx, num_rx) if responses is None else responses
    h0 = a @ (gains * blockage_factors(paths, targets))
    sigma = 0.0
    if np.isfinite(noise_power_db):
        sigma = reference_amplitude(spec) * 10.0 ** (noise_power_db / 20.0)
    seed_key = [int(s) for s in np.atleast_1d(seed)]
    out = []
    for t in range(spec.num_snapshots):
        rng = np.random.default_rng([*seed_key, link, t])
        h = h0.copy()
        if phase_drift_std_deg > 0:
            h = h * np.exp(1j * np.deg2rad(phase_drift_std_deg) * rng.standard_normal())
        if sigma > 0:
            h = h + sigma / math.sqrt(2.0) * (rng.standard_normal(h.size) + 1j * rng.standard_normal(h.size))
        out.append(ChannelSnapshot(link, t, h, num_tx, num_rx, spec.num_delay_bins))
    return out

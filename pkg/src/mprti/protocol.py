"""Discrete-event model of switched-antenna sounding and the multi-link schedule.

Within a link, the Tx holds each element for ``2 * M_R`` symbols while the Rx
steps through its elements every two symbols.  Across links, one node at a
time transmits while all higher-numbered nodes receive; the master PC
drives each phase with a command/notification handshake and receivers
start capturing on the global repetition grid ``k * T_rep``.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError

MASTER = 0


@dataclass(frozen=True)
class Slot:
    offset: float
    tx_element: int
    rx_element: int
    symbol: int


@dataclass(frozen=True)
class SwitchSchedule:
    num_tx: int
    num_rx: int
    symbol_length: float
    slots: tuple[Slot, ...]

    @property
    def duration(self) -> float:
        return self.num_tx * 2 * self.num_rx * self.symbol_length

    @property
    def symbols_per_tx_element(self) -> int:
        return 2 * self.num_rx


def build_switch_schedule(num_tx: int, num_rx: int, symbol_length: float) -> SwitchSchedule:
    """One slot per Rx dwell of two symbols, Tx-major order."""
    if num_tx < 1 or num_rx < 1:
        raise ConfigError("element counts must be >= 1")
    if symbol_length <= 0:
        raise ConfigError("symbol length must be > 0")
    slots = []
    for t, r in itertools.product(range(num_tx), range(num_rx)):
        sym = 2 * (t * num_rx + r)
        slots.append(Slot(sym * symbol_length, t, r, sym))
    return SwitchSchedule(num_tx, num_rx, symbol_length, tuple(slots))


@dataclass(frozen=True)
class Phase:
    tx: int
    rx: tuple[int, ...]


@dataclass(frozen=True)
class MeasurementPlan:
    phases: tuple[Phase, ...]
    t_rep: float = 0.1
    local_save: bool = False
    guard_time: float = 0.0

    def links(self) -> list[tuple[int, int]]:
        return [(p.tx, r) for p in self.phases for r in p.rx]


def build_plan(num_nodes: int, t_rep: float = 0.1, local_save: bool = False, guard_time: float = 0.0) -> MeasurementPlan:
    """Phase p transmits from node p to nodes p+1..n (1-based ids)."""
    if num_nodes < 2:
        raise ConfigError("a plan needs at least two nodes")
    if t_rep <= 0:
        raise ConfigError("t_rep must be > 0")
    phases = tuple(Phase(p, tuple(range(p + 1, num_nodes + 1))) for p in range(1, num_nodes))
    return MeasurementPlan(phases, t_rep, local_save, guard_time)


@dataclass(frozen=True)
class Event:
    time: float
    node: int
    kind: str
    phase: int
    detail: str = ""


@dataclass
class EventLog:
    events: list[Event] = field(default_factory=list)
    duration: float = 0.0

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


def uniform_latency(low: float = 1e-3, high: float = 20e-3) -> Callable[[np.random.Generator], float]:
    return lambda rng: float(rng.uniform(low, high))


def fixed_latency(value: float) -> Callable[[np.random.Generator], float]:
    return lambda rng: value


def _next_grid(t: float, t_rep: float, strict: bool) -> float:
    k = math.floor(t / t_rep + 1e-12)
    g = k * t_rep
    if strict or g < t - 1e-12:
        k += 1
    return k * t_rep


def simulate_round(
    plan: MeasurementPlan,
    schedule: SwitchSchedule,
    latency: Callable[[np.random.Generator], float] | None = None,
    seed: int = 0,
    transfer_time: float = 10e-3,
) -> EventLog:
    """Run one full measurement round and return its time-ordered event log.

    Per phase: the master commands the Tx; the Tx starts transmitting on the
    next grid instant and notifies the master; the master then broadcasts the
    reception request; each Rx captures starting at the first grid instant
    strictly after the request arrives; captured data travel back to the
    master (or are saved locally, in which case only a completion notice is
    sent).  The next phase starts when the master has heard from every Rx.
    Transmission cycles that pass before a receiver is armed are logged as
    ``cycle_skipped``.
    """
    latency = latency or uniform_latency()
    rng = np.random.default_rng(seed)
    t_rep = plan.t_rep
    queue: list[tuple[float, int, Event]] = []
    order = itertools.count()

    def emit(ev: Event) -> None:
        heapq.heappush(queue, (ev.time, next(order), ev))

    t = 0.0
    for pi, ph in enumerate(plan.phases):
        t += plan.guard_time if pi else 0.0
        emit(Event(t, MASTER, "command_sent", pi, f"tx_start->node{ph.tx}"))
        t_cmd = t + latency(rng)
        emit(Event(t_cmd, ph.tx, "command_received", pi, "tx_start"))
        t_tx = _next_grid(t_cmd, t_rep, strict=False)
        emit(Event(t_tx, ph.tx, "transmission_start", pi, f"cycle={round(t_tx / t_rep)}"))
        t_notify = t_cmd + latency(rng)
        emit(Event(t_cmd, ph.tx, "notify_sent", pi, "tx_started"))
        emit(Event(t_notify, MASTER, "notify_received", pi, f"node{ph.tx}"))
        emit(Event(t_notify, MASTER, "rx_request_broadcast", pi, ",".join(f"node{r}" for r in ph.rx)))
        done = t_notify
        for r in ph.rx:
            t_req = t_notify + latency(rng)
            emit(Event(t_req, r, "rx_request_received", pi, ""))
            t_cap = max(_next_grid(t_req, t_rep, strict=True), t_tx)
            k_first, k_cap = round(t_tx / t_rep), round(t_cap / t_rep)
            for k in range(k_first, k_cap):
                emit(Event(k * t_rep, r, "cycle_skipped", pi, f"cycle={k}"))
            emit(Event(t_cap, r, "capture_start", pi, f"cycle={k_cap}"))
            t_end = t_cap + schedule.duration
            emit(Event(t_end, r, "capture_end", pi, ""))
            if plan.local_save:
                t_back = t_end + latency(rng)
                emit(Event(t_back, MASTER, "capture_done_received", pi, f"node{r}"))
            else:
                emit(Event(t_end, r, "data_transfer_start", pi, ""))
                t_back = t_end + latency(rng) + transfer_time
                emit(Event(t_back, MASTER, "data_received", pi, f"node{r}"))
            done = max(done, t_back)
        emit(Event(done, MASTER, "phase_complete", pi, ""))
        t = done

    log = EventLog()
    while queue:
        log.events.append(heapq.heappop(queue)[2])
    log.duration = t
    return log


def check_log(log: EventLog, plan: MeasurementPlan) -> list[str]:
    """Invariant violations in a log (empty when it is well formed)."""
    problems = []
    times = [e.time for e in log.events]
    if any(b < a for a, b in zip(times, times[1:])):
        problems.append("times decrease")
    for e in log.of_kind("capture_start"):
        k = e.time / plan.t_rep
        if abs(k - round(k)) > 1e-9:
            problems.append(f"capture at {e.time} off the T_rep grid")
    for pi in range(len(plan.phases)):
        notify = [e.time for e in log.events if e.phase == pi and e.kind == "notify_received"]
        reqs = [e.time for e in log.events if e.phase == pi and e.kind == "rx_request_received"]
        starts = [e.time for e in log.events if e.phase == pi and e.kind == "transmission_start"]
        caps = [e.time for e in log.events if e.phase == pi and e.kind == "capture_start"]
        if notify and reqs and min(reqs) < notify[0]:
            problems.append(f"phase {pi}: rx request precedes tx start notification")
        if starts and caps and min(caps) < starts[0]:
            problems.append(f"phase {pi}: capture precedes transmission start")
    covered = sorted(plan.links())
    if len(set(covered)) != len(covered):
        problems.append("a link is measured twice")
    for ph in plan.phases:
        if ph.tx in ph.rx:
            problems.append(f"node {ph.tx} both transmits and receives")
    return problems

"""Readers and writers for the on-disk artifacts.

Text files use ``\\n`` line endings and fixed float formatting so that
identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .beamform import RssChangeVector
from .channel import ChannelSnapshot
from .errors import ContractError
from .geometry import Pathway
from .locate import LocalizationResult
from .protocol import EventLog, MeasurementPlan
from .rti import VoxelImage

_HEADER = struct.Struct("<5I")  # link, M_T, M_R, D, S


def fmt(v: float) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    s = f"{v:.9g}"
    return "0" if s == "-0" else s


def write_rows(path: Path | str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) else v for v in row])
    Path(path).write_text(buf.getvalue())


# pathways

PATHWAY_HEADER = ["link", "tx", "rx", "index", "order", "walls", "delay_ns", "aod_deg", "aoa_deg", "distance_m",
                  "reflection_points"]


def pathway_rows(pathways: Iterable[Pathway], pairs: Sequence[tuple[int, int]] | None = None):
    for p in pathways:
        tx, rx = pairs[p.link] if pairs else ("", "")
        pts = ";".join(f"{fmt(x)} {fmt(y)}" for x, y in p.reflection_points)
        yield [p.link, tx, rx, p.index, p.order, "-".join(map(str, p.walls)), p.delay * 1e9,
               math.degrees(p.aod), math.degrees(p.aoa), p.distance, pts]


def write_pathways(path, pathways: Iterable[Pathway], pairs=None) -> None:
    write_rows(path, PATHWAY_HEADER, pathway_rows(pathways, pairs))


# snapshots

def write_snapshots(path, snapshots: Sequence[ChannelSnapshot]) -> None:
    """Records of a little-endian uint32 header (link, M_T, M_R, D, S) + interleaved re/im float64.

    Consecutive snapshots of one link form one record with S columns stored
    snapshot-major.
    """
    by_link: dict[int, list[ChannelSnapshot]] = {}
    for s in snapshots:
        by_link.setdefault(s.link, []).append(s)
    with open(path, "wb") as f:
        for link, snaps in by_link.items():
            s0 = snaps[0]
            f.write(_HEADER.pack(link, s0.num_tx, s0.num_rx, s0.num_delay_bins, len(snaps)))
            for s in sorted(snaps, key=lambda s: s.t):
                h = np.asarray(s.h, dtype=np.complex128)
                f.write(np.column_stack([h.real, h.imag]).astype("<f8").tobytes())


def read_snapshots(path) -> list[ChannelSnapshot]:
    data = Path(path).read_bytes()
    out = []
    pos = 0
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise ContractError("truncated snapshot header")
        link, mt, mr, d, s = _HEADER.unpack_from(data, pos)
        pos += _HEADER.size
        n = mt * mr * d
        nbytes = n * s * 16
        if len(data) - pos < nbytes:
            raise ContractError("truncated snapshot payload")
        arr = np.frombuffer(data, dtype="<f8", count=2 * n * s, offset=pos).reshape(s, n, 2)
        pos += nbytes
        for t in range(s):
            out.append(ChannelSnapshot(link, t, arr[t, :, 0] + 1j * arr[t, :, 1], mt, mr, d))
    return out


# rss change

def write_rss_change(path, dy: RssChangeVector, orders: dict[tuple[int, int], int] | None = None) -> None:
    orders = orders or {}
    rows = ([l, i, orders.get((l, i), ""), v] for (l, i), v in zip(dy.index_map, dy.values))
    write_rows(path, ["link", "path", "order", "dy_db"], rows)


# weight matrix and images

def write_weight_triplets(path, w) -> None:
    """One ``u v value`` line per nonzero, row-major; first line is ``rows cols nnz``."""
    coo = sp.csr_matrix(w).tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    lines += [f"{coo.row[k]} {coo.col[k]} {fmt(float(coo.data[k]))}" for k in order]
    Path(path).write_text("\n".join(lines) + "\n")


def read_weight_triplets(path) -> sp.csr_matrix:
    lines = Path(path).read_text().split("\n")
    n, m, nnz = (int(t) for t in lines[0].split())
    trip = [ln.split() for ln in lines[1:1 + nnz]]
    if len(trip) != nnz:
        raise ContractError("weight file has fewer triplets than declared")
    r = np.array([int(t[0]) for t in trip], dtype=np.int64)
    c = np.array([int(t[1]) for t in trip], dtype=np.int64)
    v = np.array([float(t[2]) for t in trip])
    return sp.csr_matrix((v, (r, c)), shape=(n, m))


def write_image_csv(path, image: VoxelImage) -> None:
    """Rows are y (from the grid origin upward), columns are x."""
    lines = [",".join(fmt(float(v)) for v in row) for row in image.as_2d()]
    Path(path).write_text("\n".join(lines) + "\n")


def image_to_pgm(image: VoxelImage | np.ndarray) -> bytes:
    """16-bit binary PGM; the image maximum maps to 65535 and negatives clip to 0.

    The top row of the file is the far wall (largest y).
    """
    arr = image.as_2d() if isinstance(image, VoxelImage) else np.asarray(image, dtype=float)
    arr = np.flipud(arr)
    peak = float(arr.max()) if arr.size else 0.0
    if peak > 0:
        q = np.rint(np.clip(arr, 0.0, None) / peak * 65535.0)
    else:
        q = np.zeros_like(arr)
    h, w = arr.shape
    return f"P5\n{w} {h}\n65535\n".encode() + q.astype(">u2").tobytes()


def write_pgm(path, image) -> None:
    Path(path).write_bytes(image_to_pgm(image))


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ContractError("not a binary PGM")
    w, h = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w)


# localization results

RESULT_HEADER = ["position", "truth_x", "truth_y", "est_x", "est_y", "error_m", "detected"]


def result_rows(results: Sequence[tuple[int, LocalizationResult]]):
    for idx, res in results:
        tx, ty = res.truth[0] if res.truth else (None, None)
        ex, ey = res.estimates[0] if res.estimates else (None, None)
        err = res.errors[0] if res.errors else None
        yield [idx, fmt(tx), fmt(ty), fmt(ex), fmt(ey), fmt(err), int(bool(res.estimates))]


def write_results(path, results: Sequence[tuple[int, LocalizationResult]]) -> None:
    write_rows(path, RESULT_HEADER, result_rows(results))


def write_cdf(path, cdf: Sequence[tuple[float, float]]) -> None:
    write_rows(path, ["error_m", "cumulative_fraction"], cdf)


# tuning and protocol

def write_tune_trace(path, trace) -> None:
    names = list(trace.params[0]) if trace.params else []
    best = trace.best_so_far()
    rows = ([i, *[p[n] for n in names], v, b] for i, (p, v, b) in enumerate(zip(trace.params, trace.values, best)))
    write_rows(path, ["iteration", *names, "mean_error_m", "best_so_far_m"], rows)


def write_event_log(path, log: EventLog) -> None:
    rows = ([f"{e.time:.9f}", e.node, e.kind, e.phase, e.detail] for e in log.events)
    write_rows(path, ["time_s", "node", "event", "phase", "detail"], rows)


def plan_text(plan: MeasurementPlan) -> str:
    lines = [f"t_rep_s: {fmt(plan.t_rep)}", f"local_save: {str(plan.local_save).lower()}",
             f"guard_time_s: {fmt(plan.guard_time)}", "phases:"]
    for i, ph in enumerate(plan.phases):
        lines.append(f"  - phase: {i + 1}")
        lines.append(f"    tx: {ph.tx}")
        lines.append(f"    rx: [{', '.join(map(str, ph.rx))}]")
    lines.append(f"links: {len(plan.links())}")
    return "\n".join(lines) + "\n"

"""2-D room geometry and image-method tracing of specular pathways.

The room is an axis-aligned rectangle with its lower-left corner at the
origin.  Walls are indexed counter-clockwise starting from the floor line::

    0: y = 0        1: x = width        2: y = depth        3: x = 0

Pathways are returned in a fixed order (LoS, first-order by wall index,
second-order by wall-index pair) so that path indices are stable.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GeometryError

SPEED_OF_LIGHT = 299_792_458.0
_EPS = 1e-9

Point = tuple[float, float]


@dataclass(frozen=True)
class NodePlacement:
    id: int
    position: Point
    boresight: float  # rad, azimuth of the array normal
    num_elements: int = 1

    def __post_init__(self) -> None:
        if self.num_elements < 1:
            raise ConfigError(f"node {self.id}: num_elements must be >= 1")


@dataclass(frozen=True)
class VoxelGrid:
    origin: Point
    size: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.size <= 0:
            raise ConfigError("voxel size must be > 0")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("voxel grid must contain at least one voxel")

    @classmethod
    def covering(cls, width: float, depth: float, size: float) -> "VoxelGrid":
        """Grid anchored at the origin whose cells cover the whole room."""
        nx = max(1, int(math.ceil(width / size - 1e-9)))
        ny = max(1, int(math.ceil(depth / size - 1e-9)))
        return cls((0.0, 0.0), size, nx, ny)

    @property
    def num_voxels(self) -> int:
        return self.nx * self.ny

    def centers(self) -> np.ndarray:
        """(M, 2) voxel centers; index v = iy * nx + ix (x varies fastest)."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.size
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class Scene:
    width: float
    depth: float
    nodes: tuple[NodePlacement, ...]
    voxel_size: float = 0.1
    antenna_height: float = 1.3
    grid: VoxelGrid = field(init=False)

    def __post_init__(self) -> None:
        if self.width <= 0 or self.depth <= 0:
            raise ConfigError("room width and depth must be > 0")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ConfigError("node ids must be unique")
        for n in self.nodes:
            if not self.contains(n.position, strict=True):
                raise ConfigError(f"node {n.id} at {n.position} is not strictly inside the room")
        object.__setattr__(self, "grid", VoxelGrid.covering(self.width, self.depth, self.voxel_size))

    def contains(self, p: Point, strict: bool = False) -> bool:
        x, y = p
        if strict:
            return 0.0 < x < self.width and 0.0 < y < self.depth
        return 0.0 <= x <= self.width and 0.0 <= y <= self.depth

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.depth)

    def walls(self) -> list[tuple[Point, Point]]:
        w, d = self.width, self.depth
        return [((0.0, 0.0), (w, 0.0)), ((w, 0.0), (w, d)), ((w, d), (0.0, d)), ((0.0, d), (0.0, 0.0))]

    def node(self, node_id: int) -> NodePlacement:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise ConfigError(f"unknown node id {node_id}")


@dataclass(frozen=True)
class Pathway:
    link: int
    index: int
    walls: tuple[int, ...]
    reflection_points: tuple[Point, ...]
    segment_lengths: tuple[float, ...]
    src: Point
    des: Point
    aod: float
    aoa: float

    @property
    def order(self) -> int:
        return len(self.walls)

    @property
    def distance(self) -> float:
        return float(sum(self.segment_lengths))

    @property
    def delay(self) -> float:
        return self.distance / SPEED_OF_LIGHT

    def anchors(self) -> list[Point]:
        return [self.src, *self.reflection_points, self.des]


@dataclass(frozen=True)
class LinkTopology:
    links: tuple[tuple[int, int], ...]

    @property
    def num_links(self) -> int:
        return len(self.links)


def enumerate_links(scene: Scene) -> LinkTopology:
    """All unordered node pairs, lower id first, node 1's pairs first."""
    if len(scene.nodes) < 2:
        raise ConfigError("at least two nodes are required to form a link")
    ids = sorted(n.id for n in scene.nodes)
    return LinkTopology(tuple(itertools.combinations(ids, 2)))


def mirror(p: Point, wall: int, width: float, depth: float) -> Point:
    """Mirror image of a point across one wall line."""
    x, y = p
    if wall == 0:
        return (x, -y)
    if wall == 1:
        return (2.0 * width - x, y)
    if wall == 2:
        return (x, 2.0 * depth - y)
    if wall == 3:
        return (-x, y)
    raise ValueError(f"invalid wall index {wall}")


def _hit_wall(a: Point, b: Point, wall: int, width: float, depth: float) -> tuple[float, Point] | None:
    """Intersection of segment a->b with a wall line, as (t, point) with t in [0, 1]."""
    (ax, ay), (bx, by) = a, b
    if wall in (0, 2):
        c = 0.0 if wall == 0 else depth
        den = by - ay
        if abs(den) < 1e-15:
            return None
        t = (c - ay) / den
        x = ax + t * (bx - ax)
        if not (-_EPS <= x <= width + _EPS):
            return None
        pt = (min(max(x, 0.0), width), c)
    else:
        c = width if wall == 1 else 0.0
        den = bx - ax
        if abs(den) < 1e-15:
            return None
        t = (c - ax) / den
        y = ay + t * (by - ay)
        if not (-_EPS <= y <= depth + _EPS):
            return None
        pt = (c, min(max(y, 0.0), depth))
    return t, pt


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _image_path(src: Point, des: Point, seq: tuple[int, ...], width: float, depth: float) -> list[Point] | None:
    images = [src]
    for w in seq:
        images.append(mirror(images[-1], w, width, depth))
    points: list[Point] = []
    target = des
    for k in range(len(seq) - 1, -1, -1):
        hit = _hit_wall(images[k + 1], target, seq[k], width, depth)
        if hit is None:
            return None
        t, pt = hit
        if not (_EPS < t < 1.0 - _EPS):
            return None
        points.append(pt)
        target = pt
    points.reverse()
    return points


def trace_pathways(scene: Scene, link: tuple[int, int], max_order: int = 2, link_index: int = 0) -> list[Pathway]:
    """Specular pathways between the two nodes of ``link`` up to ``max_order`` bounces.

    The first node of the pair is the source (transmitter).  AoD and AoA are
    measured from the respective array boresights and wrapped to (-pi, pi].
    """
    if max_order not in (0, 1, 2):
        raise ConfigError(f"max_order must be 0, 1 or 2, got {max_order}")
    tx, rx = scene.node(link[0]), scene.node(link[1])
    src, des = tx.position, rx.position
    if math.dist(src, des) < _EPS:
        raise GeometryError(f"link {link}: coincident nodes")

    sequences: list[tuple[int, ...]] = [()]
    if max_order >= 1:
        sequences += [(w,) for w in range(4)]
    if max_order >= 2:
        sequences += [(a, b) for a in range(4) for b in range(4) if a != b]

    paths: list[Pathway] = []
    for seq in sequences:
        refl = _image_path(src, des, seq, scene.width, scene.depth) if seq else []
        if refl is None:
            continue
        anchors = [src, *refl, des]
        seg = tuple(math.dist(anchors[k], anchors[k + 1]) for k in range(len(anchors) - 1))
        if min(seg) < _EPS:
            continue
        first, last = anchors[1], anchors[-2]
        aod = _wrap(math.atan2(first[1] - src[1], first[0] - src[0]) - tx.boresight)
        aoa = _wrap(math.atan2(last[1] - des[1], last[0] - des[0]) - rx.boresight)
        paths.append(
            Pathway(
                link=link_index,
                index=len(paths),
                walls=seq,
                reflection_points=tuple(refl),
                segment_lengths=seg,
                src=src,
                des=des,
                aod=aod,
                aoa=aoa,
            )
        )
    return paths


def trace_all(scene: Scene, max_order: int = 2) -> list[list[Pathway]]:
    """Pathways for every link of the scene, indexed like :func:`enumerate_links`."""
    topo = enumerate_links(scene)
    return [trace_pathways(scene, pair, max_order, link_index=l) for l, pair in enumerate(topo.links)]


def pathway_geometry_distances(path: Pathway, voxel_center: Point) -> list[float]:
    """Per-segment detour sums |v - start| + |v - end| along the path's anchors."""
    anchors = path.anchors()
    return [math.dist(voxel_center, anchors[k]) + math.dist(voxel_center, anchors[k + 1]) for k in range(len(anchors) - 1)]


def perimeter_nodes(width: float, depth: float, count: int, num_elements: int = 1, inset: float = 0.3) -> tuple[NodePlacement, ...]:
    """Place ``count`` nodes on a rectangle inset from the walls, facing the room centre.

    Counts divisible by four put a node at every inset corner and spread the
    rest evenly along each side; other counts are spread evenly along the
    inset perimeter.  Ids run counter-clockwise from the lower-left corner.
    """
    if count < 1:
        raise ConfigError("node count must be >= 1")
    x0, y0, x1, y1 = inset, inset, width - inset, depth - inset
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    if count % 4 == 0:
        k = count // 4
        pts = []
        for c in range(4):
            a, b = corners[c], corners[(c + 1) % 4]
            pts += [(a[0] + (b[0] - a[0]) * j / k, a[1] + (b[1] - a[1]) * j / k) for j in range(k)]
    else:
        w, d = x1 - x0, y1 - y0
        per = 2.0 * (w + d)
        pts = []
        for i in range(count):
            s = per * i / count
            if s < w:
                pts.append((x0 + s, y0))
            elif s < w + d:
                pts.append((x1, y0 + s - w))
            elif s < 2 * w + d:
                pts.append((x1 - (s - w - d), y1))
            else:
                pts.append((x0, y1 - (s - 2 * w - d)))
    cx, cy = width / 2.0, depth / 2.0
    return tuple(
        NodePlacement(i + 1, (float(p[0]), float(p[1])), math.atan2(cy - p[1], cx - p[0]), num_elements)
        for i, p in enumerate(pts)
    )

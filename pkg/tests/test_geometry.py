import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mprti.errors import ConfigError, GeometryError
from mprti.geometry import (
    NodePlacement, Scene, VoxelGrid, enumerate_links, pathway_geometry_distances, perimeter_nodes, trace_pathways,
)

from oracles import iterated_image, shoot_ray


def two_node_scene(a, b, width=7.04, depth=6.31, ba=0.0, bb=0.0):
    return Scene(width, depth, (NodePlacement(1, a, ba), NodePlacement(2, b, bb)))


@pytest.mark.parametrize("n,links", [(2, 1), (4, 6), (12, 66)])
def test_link_counts(n, links):
    scene = Scene(7.04, 6.31, perimeter_nodes(7.04, 6.31, n))
    topo = enumerate_links(scene)
    assert topo.num_links == links
    assert topo.links[0] == (1, 2)
    assert all(a < b for a, b in topo.links)


def test_link_order_node_one_first():
    scene = Scene(7.04, 6.31, perimeter_nodes(7.04, 6.31, 4))
    assert enumerate_links(scene).links == ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4))


def test_single_node_rejected():
    with pytest.raises(ConfigError):
        enumerate_links(Scene(5, 5, (NodePlacement(1, (1, 1), 0),)))


def test_scene_validation():
    with pytest.raises(ConfigError):
        Scene(5, 5, (NodePlacement(1, (0.0, 1.0), 0), NodePlacement(2, (1, 1), 0)))
    with pytest.raises(ConfigError):
        Scene(5, 5, (NodePlacement(1, (1, 1), 0), NodePlacement(1, (2, 1), 0)))
    with pytest.raises(ConfigError):
        Scene(-1, 5, ())
    with pytest.raises(ConfigError):
        NodePlacement(1, (1, 1), 0, num_elements=0)


def test_first_order_mirror_example():
    scene = two_node_scene((1, 1), (3, 1), width=6, depth=5)
    paths = trace_pathways(scene, (1, 2), 1)
    west = [p for p in paths if p.walls == (3,)][0]
    assert west.reflection_points[0] == pytest.approx((0.0, 1.0))
    assert west.distance == pytest.approx(4.0, abs=1e-12)


def test_los_only():
    scene = two_node_scene((1, 1), (3, 2))
    paths = trace_pathways(scene, (1, 2), 0)
    assert len(paths) == 1 and paths[0].order == 0
    assert paths[0].distance == pytest.approx(math.sqrt(5))
    assert paths[0].delay == pytest.approx(math.sqrt(5) / 299_792_458.0)


def test_ordering_and_counts():
    scene = two_node_scene((1, 1), (3, 2))
    paths = trace_pathways(scene, (1, 2), 2)
    orders = [p.order for p in paths]
    assert orders == sorted(orders)
    assert orders.count(0) == 1 and orders.count(1) == 4
    firsts = [p.walls[0] for p in paths if p.order == 1]
    assert firsts == sorted(firsts)
    seconds = [p.walls for p in paths if p.order == 2]
    assert seconds == sorted(seconds)
    assert all(a != b for a, b in seconds)
    assert [p.index for p in paths] == list(range(len(paths)))


def test_coincident_nodes():
    scene = Scene(5, 5, (NodePlacement(1, (1, 1), 0), NodePlacement(2, (1, 1), 0)))
    with pytest.raises(GeometryError):
        trace_pathways(scene, (1, 2))


def test_invalid_order():
    scene = two_node_scene((1, 1), (3, 2))
    with pytest.raises(ConfigError):
        trace_pathways(scene, (1, 2), 3)


def test_angles_relative_to_boresight():
    scene = two_node_scene((1, 1), (3, 1), ba=0.0, bb=math.pi)
    los = trace_pathways(scene, (1, 2), 0)[0]
    assert los.aod == pytest.approx(0.0)
    assert los.aoa == pytest.approx(0.0, abs=1e-12)
    scene = two_node_scene((1, 1), (3, 1), ba=math.pi / 2, bb=0.0)
    los = trace_pathways(scene, (1, 2), 0)[0]
    assert los.aod == pytest.approx(-math.pi / 2)
    assert abs(los.aoa) == pytest.approx(math.pi)


def random_instance(rng):
    w, d = rng.uniform(2, 12), rng.uniform(2, 12)
    a = (rng.uniform(0.05, w - 0.05), rng.uniform(0.05, d - 0.05))
    b = (rng.uniform(0.05, w - 0.05), rng.uniform(0.05, d - 0.05))
    return two_node_scene(a, b, w, d, rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi)), a, b, w, d


def validate_path(p, a, b, w, d, tol=1e-6):
    anchors = [a, *p.reflection_points, b]
    first = np.subtract(anchors[1], a)
    hits, walls, miss, reach = shoot_ray(a, first, w, d, p.order, b, tol)
    assert tuple(walls) == p.walls
    for h, r in zip(hits, p.reflection_points):
        assert math.dist(h, r) < tol
    assert miss < tol and reach
    img = iterated_image(a, p.walls, w, d)
    assert abs(p.distance - math.dist(img, b)) < 1e-9
    assert abs(p.distance - sum(p.segment_lengths)) < 1e-12


def test_random_rooms_forward_shooting():
    rng = np.random.default_rng(7)
    for _ in range(200):
        scene, a, b, w, d = random_instance(rng)
        for p in trace_pathways(scene, (1, 2), 2):
            validate_path(p, a, b, w, d)


def test_specular_law():
    rng = np.random.default_rng(3)
    for _ in range(50):
        scene, a, b, w, d = random_instance(rng)
        for p in trace_pathways(scene, (1, 2), 2):
            anchors = p.anchors()
            for k, wall in enumerate(p.walls):
                pin = np.subtract(anchors[k + 1], anchors[k])
                pout = np.subtract(anchors[k + 2], anchors[k + 1])
                n = np.array([0.0, 1.0]) if wall in (0, 2) else np.array([1.0, 0.0])
                # tangential components equal, normal components opposite
                t = np.array([-n[1], n[0]])
                pin, pout = pin / np.linalg.norm(pin), pout / np.linalg.norm(pout)
                assert abs(pin @ t - pout @ t) < 1e-9
                assert abs(pin @ n + pout @ n) < 1e-9


def test_reciprocity():
    rng = np.random.default_rng(11)
    for _ in range(30):
        scene, a, b, w, d = random_instance(rng)
        fwd = trace_pathways(scene, (1, 2), 2)
        rev = trace_pathways(scene, (2, 1), 2)
        assert sorted(round(p.delay * 1e12, 6) for p in fwd) == sorted(round(p.delay * 1e12, 6) for p in rev)
        f = sorted((round(p.distance, 9), round(p.aod, 9), round(p.aoa, 9)) for p in fwd)
        r = sorted((round(p.distance, 9), round(p.aoa, 9), round(p.aod, 9)) for p in rev)
        assert f == r


def test_reference_room_paths_validate():
    nodes = perimeter_nodes(7.04, 6.31, 4, 8, inset=1.0)
    scene = Scene(7.04, 6.31, nodes)
    for pair in enumerate_links(scene).links:
        paths = trace_pathways(scene, pair, 2)
        a, b = scene.node(pair[0]).position, scene.node(pair[1]).position
        assert paths[0].order == 0
        assert len(paths) >= 5
        for p in paths:
            validate_path(p, a, b, 7.04, 6.31)


def test_geometry_distances():
    scene = two_node_scene((1, 1), (5, 1))
    los = trace_pathways(scene, (1, 2), 0)[0]
    assert pathway_geometry_distances(los, (3, 1)) == [pytest.approx(4.0)]
    assert pathway_geometry_distances(los, (1, 1)) == [pytest.approx(4.0)]
    rng = np.random.default_rng(5)
    for p in trace_pathways(scene, (1, 2), 2):
        v = tuple(rng.uniform(0, 5, 2))
        anchors = p.anchors()
        expect = [math.hypot(v[0] - anchors[k][0], v[1] - anchors[k][1])
                  + math.hypot(v[0] - anchors[k + 1][0], v[1] - anchors[k + 1][1]) for k in range(p.order + 1)]
        assert pathway_geometry_distances(p, v) == pytest.approx(expect, abs=1e-12)


def test_voxel_grid():
    g = VoxelGrid.covering(7.04, 6.31, 0.1)
    assert (g.nx, g.ny) == (71, 64)
    c = g.centers()
    assert c.shape == (g.num_voxels, 2)
    assert tuple(c[0]) == pytest.approx((0.05, 0.05))
    assert tuple(c[1]) == pytest.approx((0.15, 0.05))
    assert tuple(c[g.nx]) == pytest.approx((0.05, 0.15))
    with pytest.raises(ConfigError):
        VoxelGrid((0, 0), 0.0, 1, 1)


@pytest.mark.parametrize("count", [2, 3, 4, 8, 12])
def test_perimeter_nodes(count):
    nodes = perimeter_nodes(7.04, 6.31, count, 8, inset=1.0)
    assert len(nodes) == count
    assert [n.id for n in nodes] == list(range(1, count + 1))
    Scene(7.04, 6.31, nodes)
    for n in nodes:
        # boresight faces the room centre
        to_c = math.atan2(6.31 / 2 - n.position[1], 7.04 / 2 - n.position[0])
        assert abs(math.remainder(n.boresight - to_c, 2 * math.pi)) < 1e-9
        assert n.num_elements == 8


coord = st.floats(0.05, 0.95)


@settings(max_examples=150, deadline=None)
@given(st.floats(1.0, 15.0), st.floats(1.0, 15.0), coord, coord, coord, coord)
def test_property_paths_valid(w, d, ax, ay, bx, by):
    a, b = (ax * w, ay * d), (bx * w, by * d)
    if math.dist(a, b) < 1e-3:
        return
    scene = two_node_scene(a, b, w, d)
    paths = trace_pathways(scene, (1, 2), 2)
    assert paths[0].order == 0 and sum(p.order == 0 for p in paths) == 1
    for p in paths:
        for (x, y), wall in zip(p.reflection_points, p.walls):
            assert -1e-9 <= x <= w + 1e-9 and -1e-9 <= y <= d + 1e-9
            assert abs((y, x, y, x)[wall] - (0.0, w, d, 0.0)[wall]) < 1e-9
        img = iterated_image(a, p.walls, w, d)
        assert abs(p.distance - math.dist(img, b)) < 1e-9

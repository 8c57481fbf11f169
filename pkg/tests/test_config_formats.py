import csv
import io
import math
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp
import yaml

from mprti import formats
from mprti.channel import ChannelSnapshot
from mprti.config import config_snapshot, load_config, parse_config
from mprti.errors import ConfigError, ContractError
from mprti.geometry import NodePlacement, Scene, VoxelGrid, trace_pathways
from mprti.locate import LocalizationResult
from mprti.protocol import build_plan, build_switch_schedule, fixed_latency, simulate_round
from mprti.rti import VoxelImage
from mprti.tune import TuneTrace

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = parse_config("")
    sc = cfg.scenario
    assert (sc.width, sc.depth) == (7.04, 6.31)
    assert len(sc.nodes) == 4 and all(n.num_elements == 8 for n in sc.nodes)
    assert len(sc.positions) == 63
    assert sc.gamma == 0.03 and sc.solver.alpha == 0.87


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_parse(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.scenario.scene() is not None


def test_overrides():
    cfg = parse_config("""
nodes: {count: 8, elements: 2}
channel: {max_order: 0}
rti: {gamma: 0.05, alpha: 0.5}
targets: [[1.0, 1.0], [2.0, 3.0]]
seed: 4
""")
    sc = cfg.scenario
    assert len(sc.nodes) == 8 and sc.nodes[0].num_elements == 2
    assert sc.max_order == 0 and sc.channel_order == 2
    assert sc.gamma == 0.05 and sc.solver.alpha == 0.5
    assert sc.positions == ((1.0, 1.0), (2.0, 3.0))
    assert sc.seed == 4 and cfg.tune.seed == 4
    assert cfg.with_seed(9).scenario.seed == 9
    assert cfg.with_max_order(2).scenario.max_order == 2


def test_explicit_nodes():
    cfg = parse_config("""
nodes:
  - {id: 1, position: [1, 1], boresight: 0.5, elements: 4}
  - {id: 2, position: [5, 5], elements: 4}
""")
    assert [n.id for n in cfg.scenario.nodes] == [1, 2]
    assert cfg.scenario.nodes[0].boresight == 0.5


def error_of(text):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "cfg.yaml")
    return str(exc.value)


def test_diagnostics_have_line_and_field():
    msg = error_of("room:\n  width: 7\n  depht: 6\n")
    assert msg.startswith("cfg.yaml:3:") and "room.depht" in msg
    msg = error_of("seed: 0\nrti:\n  gamma: fast\n")
    assert "cfg.yaml:3:" in msg and "rti.gamma" in msg and "float" in msg
    msg = error_of("targets:\n  - [1, 1]\n  - [20, 1]\n")
    assert "cfg.yaml:3:" in msg and "outside" in msg
    assert "invalid YAML" in error_of("room: [1, 2\n")
    assert "unknown field" in error_of("bogus: 1\n")


@pytest.mark.parametrize("text", [
    "channel: {max_order: 3}",
    "channel: {max_order: 2, channel_order: 1}",
    "locate: {threshold: 1.5}",
    "nodes: {count: 1}",
    "sweep: {variable: height, values: [1]}",
    "sweep: {variable: numNodes, values: []}",
    "beamform: {power_form: other}",
    "rti: {gamma: -1}",
    "nodes: [{id: 1, position: [0.0, 1.0]}, {id: 2, position: [1, 1]}]",
])
def test_invalid_configs(text):
    error_of(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/x.yaml")


def test_snapshot_round_trip():
    cfg = load_config(CONFIGS / "default.yaml")
    snap = config_snapshot(cfg)
    again = parse_config(snap, "snapshot")
    assert again.scenario == cfg.scenario
    assert config_snapshot(again) == snap
    assert yaml.safe_load(snap)["channel"]["shadowing_db"] in ("inf", cfg.scenario.shadowing_db)


def read_csv(path):
    return list(csv.reader(io.StringIO(Path(path).read_text())))


def test_pathways_csv(tmp_path):
    scene = Scene(6, 5, (NodePlacement(1, (1, 1), 0), NodePlacement(2, (3, 1), 0)))
    paths = trace_pathways(scene, (1, 2), 1)
    formats.write_pathways(tmp_path / "p.csv", paths, [(1, 2)])
    rows = read_csv(tmp_path / "p.csv")
    assert rows[0] == formats.PATHWAY_HEADER
    assert len(rows) == 1 + len(paths)
    los = rows[1]
    assert los[4] == "0" and los[5] == "" and float(los[9]) == pytest.approx(2.0)
    west = [r for r in rows[1:] if r[5] == "3"][0]
    assert west[10] == "0 1" and float(west[9]) == pytest.approx(4.0)
    assert float(west[6]) == pytest.approx(4.0 / 299_792_458.0 * 1e9, rel=1e-8)


def test_snapshot_binary_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    snaps = [ChannelSnapshot(l, t, rng.standard_normal(12) + 1j * rng.standard_normal(12), 2, 3, 2)
             for l in (0, 3) for t in range(4)]
    formats.write_snapshots(tmp_path / "s.bin", snaps)
    data = (tmp_path / "s.bin").read_bytes()
    assert len(data) == 2 * (20 + 4 * 12 * 16)
    assert data[:20] == np.array([0, 2, 3, 2, 4], dtype="<u4").tobytes()
    back = formats.read_snapshots(tmp_path / "s.bin")
    assert [(s.link, s.t) for s in back] == [(s.link, s.t) for s in snaps]
    assert all(np.array_equal(a.h, b.h) for a, b in zip(back, snaps))
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(ContractError):
        formats.read_snapshots(tmp_path / "t.bin")


def test_weight_triplets_round_trip(tmp_path):
    w = sp.random(7, 11, density=0.3, random_state=1, format="csr")
    formats.write_weight_triplets(tmp_path / "w.txt", w)
    text = (tmp_path / "w.txt").read_text().split("\n")
    assert text[0] == f"7 11 {w.nnz}"
    back = formats.read_weight_triplets(tmp_path / "w.txt")
    assert np.allclose(back.toarray(), w.toarray(), rtol=1e-8)


def test_pgm(tmp_path):
    grid = VoxelGrid((0.0, 0.0), 0.1, 3, 2)
    img = VoxelImage(np.array([0.0, 1.0, 2.0, -1.0, 4.0, 0.5]), grid)
    formats.write_pgm(tmp_path / "i.pgm", img)
    raw = (tmp_path / "i.pgm").read_bytes()
    assert raw.startswith(b"P5\n3 2\n65535\n")
    arr = formats.read_pgm(tmp_path / "i.pgm")
    # first file row is the top (largest y) grid row
    assert arr.tolist() == [[0, 65535, 8192], [0, 16384, 32768]]
    assert formats.image_to_pgm(np.zeros((2, 2))).endswith(b"\0" * 8)


def test_results_and_cdf(tmp_path):
    res = [(0, LocalizationResult([(1.0, 2.0)], [(1.0, 2.5)], [0.5])),
           (1, LocalizationResult([], [(3.0, 3.0)], [9.454]))]
    formats.write_results(tmp_path / "r.csv", res)
    rows = read_csv(tmp_path / "r.csv")
    assert rows[0] == formats.RESULT_HEADER
    assert rows[1] == ["0", "1", "2.5", "1", "2", "0.5", "1"]
    assert rows[2] == ["1", "3", "3", "", "", "9.454", "0"]
    formats.write_cdf(tmp_path / "c.csv", [(0.5, 0.5), (9.454, 1.0)])
    assert (tmp_path / "c.csv").read_text() == "error_m,cumulative_fraction\n0.5,0.5\n9.454,1\n"


def test_fmt():
    assert formats.fmt(-0.0) == "0"
    assert formats.fmt(1 / 3) == "0.333333333"
    assert formats.fmt(math.inf) == "inf"
    assert formats.fmt(None) == ""
    assert formats.fmt(np.int64(3)) == "3"


def test_tune_trace_csv(tmp_path):
    t = TuneTrace([{"alpha": 0.5, "gamma": 0.03}, {"alpha": 0.9, "gamma": 0.1}], [1.0, 0.5])
    formats.write_tune_trace(tmp_path / "t.csv", t)
    rows = read_csv(tmp_path / "t.csv")
    assert rows == [["iteration", "alpha", "gamma", "mean_error_m", "best_so_far_m"],
                    ["0", "0.5", "0.03", "1", "1"], ["1", "0.9", "0.1", "0.5", "0.5"]]


def test_event_log_and_plan(tmp_path):
    plan = build_plan(4)
    log = simulate_round(plan, build_switch_schedule(8, 8, 1.28e-6), fixed_latency(5e-3))
    formats.write_event_log(tmp_path / "e.csv", log)
    rows = read_csv(tmp_path / "e.csv")
    assert rows[0] == ["time_s", "node", "event", "phase", "detail"]
    assert len(rows) == 1 + len(log.events)
    assert rows[1][:3] == ["0.000000000", "0", "command_sent"]
    text = formats.plan_text(plan)
    doc = yaml.safe_load(text)
    assert doc["links"] == 6
    assert [p["rx"] for p in doc["phases"]] == [[2, 3, 4], [3, 4], [4]]

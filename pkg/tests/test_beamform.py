import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mprti.beamform import (
    DEFAULT_FLOOR_DB, CorrelationMatrix, beam_power, beam_powers, correlation, link_rss_change, rss_change,
)
from mprti.channel import ChannelSnapshot, WaveformSpec, response, response_matrix, synthesize_link
from mprti.errors import ContractError
from mprti.geometry import Pathway

from oracles import correlation_loops

SPEC = WaveformSpec()


def snaps(hs, link=0):
    return [ChannelSnapshot(link, t, np.asarray(h), 1, 1, len(h)) for t, h in enumerate(hs)]


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def separated_paths(rng, m, count=3):
    """Paths with sin-angle gaps above two null-to-null beamwidths and delay gaps above two bins."""
    bw = 2.0 / m
    while True:
        st_ = rng.uniform(-0.95, 0.95, count)
        sr = rng.uniform(-0.95, 0.95, count)
        taus = np.sort(rng.uniform(0, 80, count))
        if all(abs(st_[i] - st_[j]) > 2 * bw and abs(sr[i] - sr[j]) > 2 * bw
               for i in range(count) for j in range(i)) and np.min(np.diff(taus)) > 2:
            break
    return [Pathway(0, i, (), (), (t / SPEC.bandwidth * 299_792_458.0,), (0.0, 0.0), (1.0, 0.0),
                    math.asin(a), math.asin(b)) for i, (t, a, b) in enumerate(zip(taus, st_, sr))]


def test_correlation_examples():
    rng = np.random.default_rng(0)
    h = rand_c(rng, 6)
    r = correlation(snaps([h])).r
    assert np.allclose(r, np.outer(h, h.conj()))
    assert np.allclose(correlation(snaps([h, -h])).r, r)
    hs = [rand_c(rng, 5) for _ in range(10)]
    cm = correlation(snaps(hs))
    assert cm.snapshot_count == 10
    assert np.allclose(cm.r, correlation_loops(hs))
    assert np.linalg.norm(cm.r - cm.r.conj().T) < 1e-10 * np.linalg.norm(cm.r)
    assert np.linalg.eigvalsh(cm.r).min() > -1e-10
    with pytest.raises(ContractError):
        correlation([])


def test_beam_power_examples():
    rng = np.random.default_rng(1)
    a = rand_c(rng, 4)
    a /= np.linalg.norm(a)
    assert beam_power(np.eye(4), a) == pytest.approx(1.0)
    h = np.array([1, 1j, 0, 0])
    perp = np.array([1j, 1, 0, 0]) / math.sqrt(2)
    assert beam_power(CorrelationMatrix(np.outer(h, h.conj()), 1), perp) == pytest.approx(0.0, abs=1e-15)
    b = rand_c(rng, 4, 4)
    r = b @ b.conj().T
    assert beam_power(r, a) == pytest.approx(np.real(a.conj() @ r @ r.conj().T @ a))
    with pytest.raises(ContractError):
        beam_power(r, a[:3])


def test_beam_powers_both_forms_match_explicit_r():
    rng = np.random.default_rng(2)
    h = rand_c(rng, 12, 7)
    a = rand_c(rng, 12, 3)
    r = h @ h.conj().T / 7
    exp = [np.real(a[:, i].conj() @ r @ a[:, i]) for i in range(3)]
    prt = [np.real(a[:, i].conj() @ r @ r.conj().T @ a[:, i]) for i in range(3)]
    assert np.allclose(beam_powers(h, a, "expectation"), exp)
    assert np.allclose(beam_powers(h, a, "printed"), prt)
    with pytest.raises(ValueError):
        beam_powers(h, a, "other")


def test_identical_gives_zero():
    rng = np.random.default_rng(3)
    h = rand_c(rng, 16, 4)
    a = rand_c(rng, 16, 3)
    dy, valid = link_rss_change(h, h, a)
    assert valid.all() and np.all(dy == 0)


def test_halved_gain_single_path():
    a = response(20 / SPEC.bandwidth, 0.3, -0.2, SPEC, 4, 4)[:, None]
    dy, _ = link_rss_change(0.5 * a, a, a)
    assert dy[0] == pytest.approx(20 * math.log10(0.5), abs=1e-9)


def test_printed_form_squares_the_ratio():
    # a^H R R^H a carries |a^H h|^2 ||h||^2, so a halved path reads -12.04 dB
    a = response(20 / SPEC.bandwidth, 0.3, -0.2, SPEC, 4, 4)[:, None]
    dy, _ = link_rss_change(0.5 * a, a, a, form="printed")
    assert dy[0] == pytest.approx(40 * math.log10(0.5), abs=1e-9)


def test_clamp_and_degenerate():
    a = response(20 / SPEC.bandwidth, 0.0, 0.0, SPEC, 2, 2)
    b = response(60 / SPEC.bandwidth, 0.0, 0.0, SPEC, 2, 2)
    steer = np.column_stack([a, b])
    base = (a + 1e-9 * b)[:, None]
    cur = np.zeros_like(base)
    dy, valid = link_rss_change(cur, base, steer)
    assert valid[0] and dy[0] == DEFAULT_FLOOR_DB
    base = a[:, None]
    dy, valid = link_rss_change(base, base, np.column_stack([a, np.zeros_like(a)]))
    assert valid.tolist() == [True, False]
    assert np.isfinite(dy).all()


def test_symmetry_and_scale_invariance():
    rng = np.random.default_rng(4)
    paths = separated_paths(rng, 8)
    a = response_matrix(paths, SPEC, 8, 8)
    g0 = rand_c(rng, 3)
    hb = np.column_stack([a @ g0 + 1e-3 * rand_c(rng, a.shape[0]) for _ in range(5)])
    hc = np.column_stack([a @ (g0 * [1, 0.3, 2]) + 1e-3 * rand_c(rng, a.shape[0]) for _ in range(5)])
    d1, _ = link_rss_change(hc, hb, a)
    d2, _ = link_rss_change(hb, hc, a)
    assert np.allclose(d1, -d2, atol=1e-12)
    c = 0.3 - 2.1j
    d3, _ = link_rss_change(c * hc, c * hb, a)
    assert np.allclose(d1, d3, atol=1e-9)


def test_separated_paths_recover_injected_change():
    rng = np.random.default_rng(5)
    for _ in range(30):
        paths = separated_paths(rng, 8)
        a = response_matrix(paths, SPEC, 8, 8)
        g = rng.uniform(0.5, 1.0, 3) * np.exp(2j * np.pi * rng.random(3))
        change = rng.uniform(-12, 6, 3)
        hb = synthesize_link(paths, g, SPEC, 8, 8, responses=a)
        hc = synthesize_link(paths, g * 10 ** (change / 20), SPEC, 8, 8, responses=a)
        out = rss_change([hc], [hb], [paths], SPEC)
        assert np.abs(out.values - change).max() < 0.1
        assert out.index_map == [(0, 0), (0, 1), (0, 2)]


def test_close_paths_match_scalar_projection():
    # two paths half a bin apart leak into each other; the result must still equal the per-snapshot projection
    rng = np.random.default_rng(6)
    p = [Pathway(0, 0, (), (), (3.0,), (0, 0), (1, 0), 0.1, 0.1),
         Pathway(0, 1, (), (), (3.0 + 0.5 * 299_792_458.0 / SPEC.bandwidth,), (0, 0), (1, 0), 0.15, 0.12)]
    a = response_matrix(p, SPEC, 8, 8)
    g = np.array([1.0, 0.8j])
    hb = np.column_stack([a @ g + 1e-3 * rand_c(rng, a.shape[0]) for _ in range(4)])
    hc = np.column_stack([a @ (g * [0, 1]) + 1e-3 * rand_c(rng, a.shape[0]) for _ in range(4)])
    dy, _ = link_rss_change(hc, hb, a)
    for i in range(2):
        pc = np.mean([abs(np.vdot(a[:, i], hc[:, s])) ** 2 for s in range(4)])
        pb = np.mean([abs(np.vdot(a[:, i], hb[:, s])) ** 2 for s in range(4)])
        assert dy[i] == pytest.approx(max(10 * math.log10(pc / pb), DEFAULT_FLOOR_DB), abs=1e-9)
    assert dy[0] > -60


def test_rss_change_stacks_links_and_logs_dropped(caplog):
    a = response(10 / SPEC.bandwidth, 0.0, 0.0, SPEC, 1, 1)
    p0 = Pathway(0, 0, (), (), (3.0,), (0, 0), (1, 0), 0.0, 0.0)
    good = snaps([a])
    zero = snaps([np.zeros_like(a)], link=1)
    out = rss_change([good, zero], [good, zero], [[p0], [p0]], SPEC)
    assert out.index_map == [(0, 0)]
    assert out.dropped == [(1, 0)]
    assert "degenerate" in caplog.text
    with pytest.raises(ContractError):
        rss_change([good], [good, zero], [[p0]], SPEC)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-30, 10))
def test_property_clamped_finite(seed, scale_db):
    rng = np.random.default_rng(seed)
    a = rand_c(rng, 8, 3)
    hb = rand_c(rng, 8, 2)
    hc = hb * 10 ** (scale_db / 20) + rand_c(rng, 8, 2) * rng.random()
    dy, valid = link_rss_change(hc, hb, a)
    assert np.isfinite(dy).all() and (dy >= DEFAULT_FLOOR_DB).all()

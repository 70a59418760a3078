from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regionsep.das import (
    PairError,
    all_pairs,
    assemble_das_features,
    das_signal_set,
    das_sum,
    pairwise_avg,
    pairwise_diff,
    resolve_pairs,
    shift_align,
    shift_signal,
    validate_pairs,
)
from regionsep.dsp import MultichannelAudio
from regionsep.geometry import SUBSET_PAIRS, ArrayGeometry, compute_delays, linear_array
from regionsep.roomsim import RoomSpec, simulate_rir

SPACING = 343.0 / 16000  # one sample of travel per mic at endfire


def delay_exact_geometry(m=8):
    pos = np.zeros((m, 3))
    pos[:, 0] = SPACING * np.arange(m)
    return ArrayGeometry(pos)


def endfire_capture(rng, m=8, n=16000, lead=40):
    """Plane wave from +x: mic i hears the source i samples earlier than mic 0."""
    s = rng.standard_normal(n + lead + m)
    return s, np.stack([s[lead + i : lead + i + n] for i in range(m)], axis=1)


def test_shift_definition():
    x = np.zeros(32)
    x[10] = 1.0
    assert np.argmax(shift_signal(x, 3)) == 13
    assert np.argmax(shift_signal(x, -4)) == 6
    assert np.array_equal(shift_signal(x, 0), x)
    with pytest.raises(ValueError):
        shift_signal(x, 32)


def test_zero_delays_identity(rng):
    y = rng.standard_normal((500, 4))
    al = shift_align(y, compute_delays(linear_array(4, 0.1), 90.0, 16000))
    assert al.delays.shifts == (0, 0, 0, 0)
    assert np.array_equal(al.signals, y)


def test_das_sum_examples(rng):
    x = rng.standard_normal(400)
    g = linear_array(2, 0.1)
    d = compute_delays(g, 90.0, 16000)
    assert np.allclose(das_sum(shift_align(np.stack([x, x], 1), d)), x)
    assert np.allclose(das_sum(shift_align(np.stack([x, -x], 1), d)), 0.0)


def test_array_gain_matches_mic_count():
    gains = []
    for trial in range(10):
        r = np.random.default_rng(trial)
        s = r.standard_normal(160000)
        noise = r.standard_normal((160000, 8))
        al = shift_align(s[:, None] + noise, compute_delays(linear_array(), 90.0, 16000))
        out = das_sum(al)
        snr_in = 10 * np.log10(np.sum(s**2) / np.sum(noise[:, 0] ** 2))
        snr_out = 10 * np.log10(np.sum(s**2) / np.sum((out - s) ** 2))
        gains.append(snr_out - snr_in)
    assert np.mean(gains) == pytest.approx(10 * np.log10(8), abs=1.0)


def test_pair_counts_and_order():
    assert len(all_pairs(8)) == 28
    assert all_pairs(3) == [(0, 1), (0, 2), (1, 2)]
    assert resolve_pairs("subset", 8) == list(SUBSET_PAIRS)
    assert resolve_pairs("all-pairs", 4) == all_pairs(4)
    assert validate_pairs([(3, 1)], 4) == [(1, 3)]


@pytest.mark.parametrize("bad", [[(1, 1)], [(0, 8)], [(0, 1), (1, 0)], [(-1, 2)]])
def test_invalid_pairs_rejected(bad):
    with pytest.raises(PairError):
        validate_pairs(bad, 8)


def test_pair_ops_examples(rng):
    x = rng.standard_normal(300)
    y = np.stack([x, x, 2 * x], axis=1)
    al = shift_align(y, compute_delays(linear_array(3, 0.1), 90.0, 16000))
    assert np.allclose(pairwise_avg(al, [(0, 1)])[0], x)
    assert np.allclose(pairwise_diff(al, [(0, 1)])[0], 0.0)
    # the average carries 1/2, the difference does not
    assert np.allclose(pairwise_avg(al, [(0, 2)])[0], 1.5 * x)
    assert np.allclose(pairwise_diff(al, [(0, 2)])[0], -x)


@pytest.mark.parametrize("m", [2, 3, 4, 6, 8])
def test_all_pairs_channel_identity(m, rng):
    audio = MultichannelAudio(rng.standard_normal((3200, m)), 16000)
    feats = assemble_das_features(audio, linear_array(m, 0.2), 75.0, "all_pairs")
    assert feats.num_channels == m * m + 1
    assert feats.fbank.values.shape[1:] == (9, 80)


def test_subset_has_17_channels(rng):
    audio = MultichannelAudio(rng.standard_normal((3200, 8)), 16000)
    assert assemble_das_features(audio, linear_array(), 75.0, "subset").num_channels == 17


def test_stack_order(rng):
    y = rng.standard_normal((1000, 3))
    al = shift_align(y, compute_delays(linear_array(3, 0.1), 90.0, 16000))
    ss = das_signal_set(al, all_pairs(3))
    stacked = ss.stacked()
    assert stacked.shape == (3 + 1 + 3 + 3, 1000)
    assert np.allclose(stacked[:3], y.T)
    assert np.allclose(stacked[3], y.mean(axis=1))
    assert np.allclose(stacked[4], (y[:, 0] + y[:, 1]) / 2)
    assert np.allclose(stacked[-1], y[:, 1] - y[:, 2])


def test_channel_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        assemble_das_features(MultichannelAudio(rng.standard_normal((3200, 4)), 16000), linear_array(), 75.0)


def test_m2_sum_equals_pair_average(rng):
    y = rng.standard_normal((500, 2))
    al = shift_align(y, compute_delays(linear_array(2, 0.1), 60.0, 16000))
    assert np.allclose(das_sum(al), pairwise_avg(al, all_pairs(2)).mean(axis=0))


def test_integer_delay_target_cancels(rng):
    s, y = endfire_capture(rng)
    g = delay_exact_geometry()
    d = compute_delays(g, 0.0, 16000)
    assert d.shifts == tuple(range(8))
    al = shift_align(y, d)
    diffs = pairwise_diff(al, all_pairs(8))
    valid = slice(8, None)  # skip the zero-filled head
    ref = np.sum(al.signals[valid, 0] ** 2)
    supp = [10 * np.log10(ref / max(np.sum(dd[valid] ** 2), 1e-300)) for dd in diffs]
    assert min(supp) >= 60.0


def test_aligned_anechoic_pairs_correlate_at_lag_zero(rng):
    g = delay_exact_geometry()
    room = RoomSpec((14.0, 6.0, 4.0), 0.0)
    origin = np.array([2.0, 3.0, 1.5])
    mics = g.mic_positions + origin
    h = simulate_rir(room, origin + np.array([8.0, 0.0, 0.0]), mics)
    s = rng.standard_normal(8000)
    y = np.stack([np.convolve(s, hi)[:8000] for hi in h], axis=1)
    al = shift_align(y, compute_delays(g, 0.0, 16000)).signals
    for i, j in [(0, 7), (2, 5), (3, 4)]:
        xc = np.correlate(al[100:-100, i], al[100:-100, j], "full")
        assert np.argmax(xc) - (len(al) - 201) == 0


def test_steering_beats_mis_steering(rng):
    g = delay_exact_geometry()
    _, y = endfire_capture(rng)
    on = das_sum(shift_align(y, compute_delays(g, 0.0, 16000)))
    off = das_sum(shift_align(y, compute_delays(g, 90.0, 16000)))
    assert np.sum(on**2) >= np.sum(off**2)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 2**31), st.floats(0.0, 360.0, exclude_max=True))
def test_signal_set_is_homogeneous(a, seed, angle):
    y = np.random.default_rng(seed).standard_normal((700, 4))
    d = compute_delays(linear_array(4, 0.2), angle, 16000)
    base = das_signal_set(shift_align(y, d), all_pairs(4)).stacked()
    scaled = das_signal_set(shift_align(a * y, d), all_pairs(4)).stacked()
    assert np.allclose(scaled, a * base, rtol=1e-9, atol=1e-9)

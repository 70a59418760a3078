from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from regionsep.dsp import (
    FFT_SIZE,
    FRAME_LEN,
    HOP,
    LOG_FLOOR,
    N_BINS,
    MultichannelAudio,
    ShapeError,
    StreamingISTFT,
    StreamingSTFT,
    analysis_window,
    fbank_array,
    hz_to_mel,
    interior_slice,
    istft,
    istft_array,
    mel_filterbank,
    num_frames,
    stft,
    stft_array,
)


def _rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_frame_count_formula():
    assert num_frames(16000) == 49
    spec = stft_array(np.zeros(16000))
    assert spec.shape == (49, N_BINS)
    assert not np.any(spec)
    with pytest.raises(ShapeError):
        num_frames(FRAME_LEN - 1)


def test_stft_matches_direct_frame_dft(rng):
    x = rng.standard_normal(4000)
    w = np.array([math.sqrt(0.5 - 0.5 * math.cos(2 * math.pi * n / FRAME_LEN)) for n in range(FRAME_LEN)])
    spec = stft_array(x)
    for k in (0, 3, spec.shape[0] - 1):
        frame = x[k * HOP : k * HOP + FRAME_LEN] * w
        assert np.allclose(spec[k], np.fft.rfft(frame, FFT_SIZE))


def test_sinusoid_peaks_at_its_bin():
    k = 37
    t = np.arange(16000)
    x = np.cos(2 * np.pi * k * 16000 / FFT_SIZE * t / 16000)
    mags = np.abs(stft_array(x))
    assert np.all(np.argmax(mags[1:-1], axis=1) == k)


@pytest.mark.parametrize("n0", [0, 100])
def test_impulse_gives_flat_first_frame(n0):
    x = np.zeros(2000)
    x[n0] = 1.0
    mag = np.abs(stft_array(x)[0])
    assert np.allclose(mag, analysis_window()[n0])


def test_parseval_per_frame(rng):
    x = rng.standard_normal(3200)
    spec = stft_array(x)
    w = analysis_window()
    for k in range(spec.shape[0]):
        e_time = np.sum((x[k * HOP : k * HOP + FRAME_LEN] * w) ** 2)
        p = np.abs(spec[k]) ** 2
        e_freq = (p[0] + p[-1] + 2 * p[1:-1].sum()) / FFT_SIZE
        assert e_freq == pytest.approx(e_time, rel=1e-6)


def test_round_trip_interior(rng):
    x = rng.standard_normal(16000)
    y = istft_array(stft_array(x), len(x))
    sl = interior_slice(len(x))
    assert _rel_err(y[sl], x[sl]) < 1e-6


def test_istft_zero_and_linearity(rng):
    spec = stft_array(rng.standard_normal(8000))
    assert not np.any(istft_array(np.zeros_like(spec), 8000))
    assert np.allclose(istft_array(2 * spec, 8000), 2 * istft_array(spec, 8000))


def test_multichannel_wrappers(rng):
    audio = MultichannelAudio(rng.standard_normal((8000, 3)), 16000)
    s = stft(audio)
    assert s.frames.shape == (3, num_frames(8000), N_BINS)
    back = istft(s, 8000)
    sl = interior_slice(8000)
    assert _rel_err(back.samples[sl], audio.samples[sl]) < 1e-6
    with pytest.raises(ValueError):
        stft(MultichannelAudio(np.zeros((8000, 1)), 8000))


def test_mel_scale_and_filterbank():
    assert hz_to_mel(1000.0) == pytest.approx(999.9855, abs=1e-3)
    fb = mel_filterbank()
    assert fb.shape == (80, N_BINS)
    assert np.all(fb >= 0) and np.all(fb.max(axis=1) <= 1.0)
    peaks = np.argmax(fb, axis=1)
    assert np.all(np.diff(peaks) >= 0)


def test_fbank_floor_and_scaling(rng):
    zeros = fbank_array(np.zeros((5, N_BINS)))
    assert np.all(zeros == np.log(LOG_FLOOR))
    x = rng.standard_normal(8000)
    a = fbank_array(stft_array(x))
    b = fbank_array(stft_array(10 * x))
    assert np.allclose(b - a, math.log(100.0))


def test_white_noise_fbank_follows_filter_mass(rng):
    x = rng.standard_normal(160000)
    power = np.exp(fbank_array(stft_array(x))).mean(axis=0)
    fb = mel_filterbank()
    expected = fb.sum(axis=1)
    ratio = power / expected
    assert np.all(np.abs(ratio / ratio.mean() - 1) < 0.2)


def test_streaming_stft_matches_offline(rng):
    x = rng.standard_normal((2, 3200))
    s = StreamingSTFT(2)
    frames = [s.push(x[:, h * HOP : (h + 1) * HOP]) for h in range(10)]
    assert frames[0] is None
    online = np.stack(frames[1:], axis=1)
    assert np.allclose(online, stft_array(x))
    with pytest.raises(ShapeError):
        s.push(np.zeros((3, HOP)))


def test_streaming_istft_matches_offline(rng):
    x = rng.standard_normal(3200)
    spec = stft_array(x)
    inv = StreamingISTFT(1)
    hops = np.concatenate([inv.push(spec[k][None])[0] for k in range(spec.shape[0])])
    assert np.allclose(hops, istft_array(spec, 3200)[: len(hops)])


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(FRAME_LEN * 2, 4000), elements=st.floats(-1e3, 1e3)))
def test_round_trip_property(x):
    sl = interior_slice(len(x))
    ref = x[sl]
    y = istft_array(stft_array(x), len(x))[sl]
    scale = max(np.linalg.norm(ref), 1e-9)
    assert np.linalg.norm(y - ref) / scale < 1e-6


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 4.0), st.integers(0, 2**31))
def test_fbank_monotone_in_power(gain, seed):
    r = np.random.default_rng(seed)
    spec = r.standard_normal((4, N_BINS)) + 1j * r.standard_normal((4, N_BINS))
    assert np.all(fbank_array(gain * spec) >= fbank_array(spec))

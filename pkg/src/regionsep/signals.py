"""Synthetic dry source signals for scene simulation.

``speech_like`` produces syllable-rate bursts of harmonic (voiced) and
high-band noise (unvoiced) segments with a talker-specific pitch and
formants.  The result is sparse in time-frequency like real speech, which is
what mask-based separation relies on.  Real recordings can be used instead
through ``wav_path`` sources.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .dsp import SAMPLE_RATE


def _unit_rms(x: np.ndarray) -> np.ndarray:
    rms = np.sqrt(np.mean(x**2))
    return x / rms if rms > 0 else x


def _resonator(x: np.ndarray, freq: float, bw: float, sr: int) -> np.ndarray:
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    return lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r], x)


def speech_like(duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    f0_base = rng.uniform(90.0, 240.0)
    formants = [rng.uniform(300, 900), rng.uniform(900, 2300), rng.uniform(2300, 3400)]
    pos = int(rng.uniform(0.0, 0.15) * sample_rate)
    while pos < n:
        seg = int(rng.uniform(0.08, 0.3) * sample_rate)
        seg = min(seg, n - pos)
        if seg <= 16:
            break
        t = np.arange(seg) / sample_rate
        env = np.sin(np.pi * np.arange(seg) / seg) ** 0.7
        if rng.random() < 0.75:
            f0 = f0_base * (1.0 + 0.08 * rng.standard_normal()) * (1.0 + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-3))
            phase = 2 * np.pi * np.cumsum(f0) / sample_rate
            nharm = int(min(40, (sample_rate / 2 - 200) // f0.max()))
            k = np.arange(1, nharm + 1)
            amps = 1.0 / k
            src = (amps[:, None] * np.sin(k[:, None] * phase[None, :] + rng.uniform(0, 2 * np.pi, nharm)[:, None])).sum(0)
            shaped = sum(_resonator(src, f * rng.uniform(0.9, 1.1), 80.0 + 0.06 * f, sample_rate) for f in formants)
            seg_sig = shaped
        else:
            lo = rng.uniform(1500, 3500)
            sos = butter(4, [lo, min(lo * 2.2, 7500)], btype="bandpass", fs=sample_rate, output="sos")
            seg_sig = 0.5 * sosfilt(sos, rng.standard_normal(seg))
        out[pos : pos + seg] += _unit_rms(seg_sig) * env * rng.uniform(0.5, 1.0)
        pos += seg + int(rng.uniform(0.03, 0.2) * sample_rate)
    return _unit_rms(out)


def colored_noise(duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE, slope_db_per_oct: float = -3.0) -> np.ndarray:
    """Stationary noise with a power spectrum falling ``slope_db_per_oct`` per octave."""
    n = int(round(duration * sample_rate))
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / sample_rate)
    f[0] = f[1]
    spec *= (f / f[1]) ** (slope_db_per_oct / 20.0 / np.log10(2.0))
    return _unit_rms(np.fft.irfft(spec, n))


def make_signal(kind: str, duration: float, seed: int, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if kind == "speech":
        return speech_like(duration, rng, sample_rate)
    if kind == "noise":
        return colored_noise(duration, rng, sample_rate)
    if kind == "white":
        return _unit_rms(rng.standard_normal(int(round(duration * sample_rate))))
    raise ValueError(f"unknown synthetic signal kind {kind!r}")

"""Framing, STFT/iSTFT and log-mel filterbank features.

All pipelines run at 16 kHz with 40 ms frames (640 samples) and a 20 ms hop
(320 samples).  Frames are zero-padded to a 1024-point FFT.  The analysis and
synthesis windows are both the square root of a periodic Hann window, which
at 50 % overlap satisfies ``sum_k w[n - k*hop]**2 == 1`` so overlap-add
reconstructs exactly and never amplifies a masked spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 640
HOP = 320
FFT_SIZE = 1024
N_BINS = FFT_SIZE // 2 + 1
N_MELS = 80
LOG_FLOOR = 1e-10


class ShapeError(ValueError):
    pass


def analysis_window(frame_len: int = FRAME_LEN) -> np.ndarray:
    n = np.arange(frame_len)
    return np.sqrt(0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_len))


def ola_gain(window: np.ndarray, hop: int) -> float:
    """Constant value of sum_k w[n - k*hop]**2 in the steady state."""
    w2 = window**2
    acc = np.zeros(hop)
    for start in range(0, len(window), hop):
        seg = w2[start : start + hop]
        acc[: len(seg)] += seg
    if not np.allclose(acc, acc[0], rtol=1e-9, atol=1e-12):
        raise ValueError("window does not satisfy the constant overlap-add condition")
    return float(acc[0])


_WINDOW = analysis_window()
_OLA_GAIN = ola_gain(_WINDOW, HOP)


@dataclass
class MultichannelAudio:
    samples: np.ndarray  # (T, M)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self) -> None:
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ShapeError("samples must be a (T, M) matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("audio contains non-finite values")
        self.samples = x

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return self.samples.shape[1]

    def channels(self) -> np.ndarray:
        """Channel-major view, shape (M, T)."""
        return self.samples.T


@dataclass
class SpectrogramStack:
    frames: np.ndarray  # complex (C, T_frames, F)
    frame_len: int = FRAME_LEN
    hop: int = HOP
    fft_size: int = FFT_SIZE

    def __post_init__(self) -> None:
        if self.frames.ndim != 3 or self.frames.shape[2] != self.fft_size // 2 + 1:
            raise ShapeError(f"expected (C, T, {self.fft_size // 2 + 1}) spectrogram, got {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[1]


def num_frames(num_samples: int, frame_len: int = FRAME_LEN, hop: int = HOP) -> int:
    if num_samples < frame_len:
        raise ShapeError(f"signal of {num_samples} samples is shorter than one frame ({frame_len})")
    return 1 + (num_samples - frame_len) // hop


def stft_array(x: np.ndarray) -> np.ndarray:
    """STFT of channel-major signals ``(..., T)`` -> ``(..., T_frames, F)``."""
    x = np.asarray(x, dtype=float)
    n = num_frames(x.shape[-1])
    idx = np.arange(FRAME_LEN)[None, :] + HOP * np.arange(n)[:, None]
    return np.fft.rfft(x[..., idx] * _WINDOW, n=FFT_SIZE, axis=-1)


def istft_array(spec: np.ndarray, out_len: int) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft_array`."""
    spec = np.asarray(spec)
    if spec.ndim < 2 or spec.shape[-1] != N_BINS:
        raise ShapeError(f"expected (..., T_frames, {N_BINS}) spectrogram, got {spec.shape}")
    n = spec.shape[-2]
    needed = FRAME_LEN + HOP * (n - 1) if n else 0
    frames = np.fft.irfft(spec, n=FFT_SIZE, axis=-1)[..., :FRAME_LEN] * _WINDOW
    lead = spec.shape[:-2]
    out = np.zeros(lead + (max(out_len, needed),))
    # two interleaved passes: frames of equal parity never overlap at 50 % hop
    for parity in (0, 1):
        sel = frames[..., parity::2, :]
        k = sel.shape[-2]
        if k == 0:
            continue
        starts = HOP * (parity + 2 * np.arange(k))
        idx = starts[:, None] + np.arange(FRAME_LEN)[None, :]
        out[..., idx] += sel
    out /= _OLA_GAIN
    return out[..., :out_len]


def stft(audio: MultichannelAudio) -> SpectrogramStack:
    if audio.sample_rate != SAMPLE_RATE:
        raise ValueError(f"expected {SAMPLE_RATE} Hz audio, got {audio.sample_rate}")
    return SpectrogramStack(stft_array(audio.channels()))


def istft(spec: SpectrogramStack, out_len: int) -> MultichannelAudio:
    if (spec.frame_len, spec.hop, spec.fft_size) != (FRAME_LEN, HOP, FFT_SIZE):
        raise ShapeError("spectrogram was not produced with this module's framing")
    return MultichannelAudio(istft_array(spec.frames, out_len).T, SAMPLE_RATE)


def interior_slice(num_samples: int) -> slice:
    """Samples covered by two full frames, where reconstruction is exact."""
    n = num_frames(num_samples)
    return slice(HOP, HOP * n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int = N_MELS, fft_size: int = FFT_SIZE, sample_rate: int = SAMPLE_RATE, fmin: float = 0.0, fmax: float | None = None
) -> np.ndarray:
    """Triangular HTK-mel filters, shape ``(n_mels, fft_size // 2 + 1)``."""
    fmax = sample_rate / 2 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


_MEL = mel_filterbank()


@dataclass
class FbankMatrix:
    values: np.ndarray  # (C, T_frames, n_mels)


def fbank_array(spec: np.ndarray) -> np.ndarray:
    power = np.abs(spec) ** 2
    return np.log(np.maximum(power @ _MEL.T, LOG_FLOOR))


def fbank(spec: SpectrogramStack) -> FbankMatrix:
    return FbankMatrix(fbank_array(spec.frames))


class StreamingSTFT:
    """Hop-by-hop analysis with one hop of history per channel."""

    def __init__(self, num_channels: int):
        self.num_channels = num_channels
        self._history = np.zeros((num_channels, HOP))
        self._primed = False

    def push(self, hop: np.ndarray) -> np.ndarray | None:
        """Feed ``(num_channels, HOP)`` samples; returns a ``(C, F)`` frame once one is complete."""
        hop = np.asarray(hop, dtype=float)
        if hop.shape != (self.num_channels, HOP):
            raise ShapeError(f"expected hop of shape {(self.num_channels, HOP)}, got {hop.shape}")
        frame = np.concatenate([self._history, hop], axis=1)
        self._history = hop.copy()
        if not self._primed:
            self._primed = True
            return None
        return np.fft.rfft(frame * _WINDOW, n=FFT_SIZE, axis=-1)


class StreamingISTFT:
    """Overlap-add synthesis that emits one finished hop per frame."""

    def __init__(self, num_channels: int = 1):
        self._tail = np.zeros((num_channels, HOP))

    def push(self, frame_spec: np.ndarray) -> np.ndarray:
        frame = np.fft.irfft(frame_spec, n=FFT_SIZE, axis=-1)[..., :FRAME_LEN] * _WINDOW
        out = (self._tail + frame[..., :HOP]) / _OLA_GAIN
        self._tail = frame[..., HOP:].copy()
        return out

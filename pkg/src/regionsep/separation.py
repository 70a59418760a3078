"""Mask-based separation on the delay-and-sum output.

The separated signal is ``istft(mask * stft(y_s))`` where ``y_s`` is the
delay-and-sum average of the array steered at a region's central angle.
Masks come from an ideal-ratio oracle built from scene ground truth, from a
feature file written by an external model, or are all-ones (passthrough).

Metrics compare against the target images pushed through the same
alignment and averaging, so the reference lives in the ``y_s`` domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .audio_io import read_feature, write_feature
from .das import das_sum, shift_align
from .dsp import HOP, N_BINS, SAMPLE_RATE, MultichannelAudio, StreamingISTFT, StreamingSTFT, istft_array, num_frames, stft_array
from .geometry import ArrayGeometry, Region, SteeringDelays, compute_delays, mirror_azimuth
from .scene import SceneTruth

EPS = 1e-8


class MaskError(ValueError):
    pass


@dataclass
class TFMask:
    values: np.ndarray  # (T_frames, F)

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != N_BINS:
            raise MaskError(f"mask must have shape (T_frames, {N_BINS}), got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise MaskError("mask values must lie in [0, 1]")
        self.values = v

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


def steering(geom: ArrayGeometry, angle: float, sample_rate: int = SAMPLE_RATE) -> SteeringDelays:
    return compute_delays(geom, angle, sample_rate)


def beamform(audio: MultichannelAudio | np.ndarray, geom: ArrayGeometry, angle: float) -> np.ndarray:
    """Delay-and-sum output ``y_s`` steered at ``angle``, shape ``(T,)``."""
    return das_sum(shift_align(audio, steering(geom, angle)))


# ---------------------------------------------------------------- mask sources


class MaskSource:
    """Supplies one mask row per STFT frame of ``y_s``."""

    kind = "abstract"

    def full(self, num_frames: int) -> TFMask:
        raise NotImplementedError

    def frame(self, index: int) -> np.ndarray:
        raise NotImplementedError


class PassthroughMask(MaskSource):
    kind = "passthrough"

    def full(self, num_frames: int) -> TFMask:
        return TFMask(np.ones((num_frames, N_BINS)))

    def frame(self, index: int) -> np.ndarray:
        return np.ones(N_BINS)


class FixedMask(MaskSource):
    """A precomputed mask, e.g. an oracle mask or one loaded from disk."""

    kind = "fixed"

    def __init__(self, mask: TFMask):
        self.mask = mask

    def full(self, num_frames: int) -> TFMask:
        if num_frames != self.mask.num_frames:
            raise MaskError(f"mask has {self.mask.num_frames} frames, signal has {num_frames}")
        return self.mask

    def frame(self, index: int) -> np.ndarray:
        if index >= self.mask.num_frames:
            raise MaskError(f"mask has no frame {index}")
        return self.mask.values[index]


class FileMask(FixedMask):
    kind = "file"

    def __init__(self, path: str | Path, clip: bool = False):
        values, _ = read_feature(path, kind="mask")
        if values.ndim == 3 and values.shape[0] == 1:
            values = values[0]
        if clip:
            values = np.clip(values, 0.0, 1.0)
        super().__init__(TFMask(values))
        self.path = str(path)


class OracleMask(FixedMask):
    kind = "oracle"

    def __init__(self, truth: SceneTruth, region: Region, angle: float | None = None, fold_mirror: bool | None = None):
        super().__init__(oracle_mask(truth, region, angle, fold_mirror=fold_mirror))


def save_mask(path: str | Path, mask: TFMask) -> Path:
    return write_feature(path, mask.values, "mask")


# ---------------------------------------------------------------- oracle


def is_target(source: dict, region: Region, fold_mirror: bool) -> bool:
    """Region membership of a scene source from its recorded azimuth and distance.

    With ``fold_mirror`` the azimuth reflected across the array axis also
    counts, since a linear array cannot tell the two apart.
    """
    az, dist = source["azimuth"], source["distance"]
    if region.contains(az, dist):
        return True
    return fold_mirror and region.contains(mirror_azimuth(az), dist)


def split_sources(truth: SceneTruth, region: Region, fold_mirror: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sum of in-region source images and sum of everything else (noise included)."""
    if not truth.source_images and not np.any(truth.noise_image):
        raise MaskError("scene carries no per-source ground truth")
    fold = truth.geometry.is_collinear() if fold_mirror is None else fold_mirror
    shape = truth.mixture.samples.shape
    target = np.zeros(shape)
    other = truth.noise_image.copy()
    for src, img in zip(truth.sources, truth.source_images):
        if is_target(src, region, fold):
            target += img
        else:
            other += img
    return target, other


def oracle_mask(
    truth: SceneTruth,
    region: Region,
    angle: float | None = None,
    geom: ArrayGeometry | None = None,
    fold_mirror: bool | None = None,
) -> TFMask:
    """Ideal ratio mask |S_t| / (|S_t| + |S_nt| + eps) in the delay-and-sum domain."""
    geom = geom or truth.geometry
    angle = region.center if angle is None else angle
    target, other = split_sources(truth, region, fold_mirror)
    st = stft_array(beamform(target, geom, angle))
    snt = stft_array(beamform(other, geom, angle))
    mag_t = np.abs(st)
    return TFMask(mag_t / (mag_t + np.abs(snt) + EPS))


def reference_signal(truth: SceneTruth, region: Region, angle: float | None = None, fold_mirror: bool | None = None) -> np.ndarray:
    """In-region target images aligned and averaged like ``y_s``."""
    angle = region.center if angle is None else angle
    target, _ = split_sources(truth, region, fold_mirror)
    return beamform(target, truth.geometry, angle)


# ---------------------------------------------------------------- offline


def apply_mask_to_signal(ys: np.ndarray, mask: TFMask) -> np.ndarray:
    spec = stft_array(ys)
    if spec.shape != mask.values.shape:
        raise MaskError(f"mask shape {mask.values.shape} does not match STFT shape {spec.shape}")
    return istft_array(mask.values * spec, len(ys))


def apply_mask(audio: MultichannelAudio | np.ndarray, geom: ArrayGeometry, angle: float, mask: TFMask) -> np.ndarray:
    return apply_mask_to_signal(beamform(audio, geom, angle), mask)


def separate(audio: MultichannelAudio, geom: ArrayGeometry, angle: float, source: MaskSource) -> np.ndarray:
    ys = beamform(audio, geom, angle)
    if isinstance(source, PassthroughMask):
        return ys.copy()
    return apply_mask_to_signal(ys, source.full(num_frames(len(ys))))


# ---------------------------------------------------------------- streaming


class StreamSeparator:
    """Single-session streaming separation, one 320-sample hop in, one hop out.

    Negative alignment shifts need look-ahead, so ``y_s`` trails the input by
    ``ceil(max_advance / hop)`` hops; the STFT adds one more hop.  Output hop
    ``h`` equals offline samples ``[(h - delay_hops) * hop, (h - delay_hops + 1) * hop)``.
    """

    def __init__(self, geom: ArrayGeometry, angle: float, mask_source: MaskSource, sample_rate: int = SAMPLE_RATE):
        self.geom = geom
        self.delays = steering(geom, angle, sample_rate)
        self.mask_source = mask_source
        self.num_channels = geom.num_mics
        shifts = np.asarray(self.delays.shifts)
        self._shifts = shifts
        self._advance = self.delays.max_advance
        self._history = max(0, int(shifts.max()))
        self.delay_hops = math.ceil(self._advance / HOP) + 1
        self._raw = np.zeros((self.num_channels, 0))
        self._raw_start = 0  # absolute index of _raw[:, 0]
        self._consumed = 0
        self._ys_done = 0
        self._ys_pending = np.zeros(0)
        self._stft = StreamingSTFT(1)
        self._istft = StreamingISTFT(1)
        self._frame_index = 0
        self._ready: list[np.ndarray] = []

    def _advance_ys(self) -> None:
        end = self._consumed - self._advance
        if end <= self._ys_done:
            return
        n = np.arange(self._ys_done, end)
        acc = np.zeros(len(n))
        for ch, s in enumerate(self._shifts):
            src = n - s
            valid = src >= 0
            acc[valid] += self._raw[ch, src[valid] - self._raw_start]
        self._ys_pending = np.concatenate([self._ys_pending, acc / self.num_channels])
        self._ys_done = end
        keep_from = max(self._raw_start, self._ys_done - self._history)
        self._raw = self._raw[:, keep_from - self._raw_start :]
        self._raw_start = keep_from

    def push(self, hop: np.ndarray) -> np.ndarray:
        """Consume ``(HOP, M)`` samples and return the next ``(HOP,)`` output samples."""
        hop = np.asarray(hop, dtype=float)
        if hop.shape != (HOP, self.num_channels):
            raise ValueError(f"expected a ({HOP}, {self.num_channels}) hop, got {hop.shape}")
        self._raw = np.concatenate([self._raw, hop.T], axis=1)
        self._consumed += HOP
        self._advance_ys()
        while len(self._ys_pending) >= HOP:
            chunk, self._ys_pending = self._ys_pending[:HOP], self._ys_pending[HOP:]
            spec = self._stft.push(chunk[None, :])
            if spec is None:
                continue
            masked = spec * self.mask_source.frame(self._frame_index)
            self._frame_index += 1
            self._ready.append(self._istft.push(masked)[0])
        if self._ready:
            return self._ready.pop(0)
        return np.zeros(HOP)


def stream_separate(
    hops: Iterable[np.ndarray], geom: ArrayGeometry, angle: float, mask_source: MaskSource
) -> Iterator[np.ndarray]:
    """Frame-callback driver: yields one output hop per input hop."""
    sep = StreamSeparator(geom, angle, mask_source)
    for hop in hops:
        yield sep.push(hop)


def iter_hops(audio: MultichannelAudio | np.ndarray) -> Iterator[np.ndarray]:
    x = audio.samples if isinstance(audio, MultichannelAudio) else np.asarray(audio)
    for start in range(0, x.shape[0] - HOP + 1, HOP):
        yield x[start : start + HOP]

"""Delay-and-sum feature bank.

Channel order of the assembled stack is fixed: the M aligned microphones in
index order, then the full delay-and-sum average, then one pairwise average
per pair, then one pairwise difference per pair (both in ``pair_list``
order).  Pairwise averages carry a 1/2 factor; differences do not.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .dsp import FbankMatrix, MultichannelAudio, fbank_array, stft_array
from .geometry import SUBSET_PAIRS, ArrayGeometry, SteeringDelays, compute_delays

Pair = tuple[int, int]


class PairError(ValueError):
    pass


@dataclass
class AlignedSignals:
    signals: np.ndarray  # (T, M)
    delays: SteeringDelays

    @property
    def num_channels(self) -> int:
        return self.signals.shape[1]


@dataclass
class DasSignalSet:
    aligned: np.ndarray  # (M, T)
    full_sum: np.ndarray  # (T,)
    pair_avgs: np.ndarray  # (P, T)
    pair_diffs: np.ndarray  # (P, T)
    pair_list: list[Pair]

    def stacked(self) -> np.ndarray:
        """All channels in the documented order, shape ``(M + 1 + 2P, T)``."""
        return np.concatenate([self.aligned, self.full_sum[None, :], self.pair_avgs, self.pair_diffs], axis=0)

    @property
    def num_channels(self) -> int:
        return self.aligned.shape[0] + 1 + 2 * len(self.pair_list)


@dataclass
class DasFeatures:
    fbank: FbankMatrix
    pair_list: list[Pair]
    angle: float

    @property
    def num_channels(self) -> int:
        return self.fbank.values.shape[0]


def shift_signal(x: np.ndarray, shift: int) -> np.ndarray:
    """Shift along the last axis with zero fill; positive delays, negative advances."""
    n = x.shape[-1]
    if abs(shift) >= n:
        raise ValueError(f"shift {shift} is not smaller than signal length {n}")
    out = np.zeros_like(x)
    if shift > 0:
        out[..., shift:] = x[..., : n - shift]
    elif shift < 0:
        out[..., : n + shift] = x[..., -shift:]
    else:
        out[...] = x
    return out


def shift_align(audio: MultichannelAudio | np.ndarray, delays: SteeringDelays) -> AlignedSignals:
    x = audio.samples if isinstance(audio, MultichannelAudio) else np.asarray(audio, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(delays.shifts):
        raise ValueError(f"audio has shape {x.shape}, delays cover {len(delays.shifts)} channels")
    out = np.empty_like(x)
    for i, s in enumerate(delays.shifts):
        out[:, i] = shift_signal(x[:, i], s)
    return AlignedSignals(out, delays)


def das_sum(aligned: AlignedSignals) -> np.ndarray:
    return aligned.signals.mean(axis=1)


def all_pairs(num_mics: int) -> list[Pair]:
    return list(combinations(range(num_mics), 2))


def validate_pairs(pairs: Iterable[Sequence[int]], num_mics: int) -> list[Pair]:
    out: list[Pair] = []
    seen: set[Pair] = set()
    for p in pairs:
        i, j = int(p[0]), int(p[1])
        if i == j:
            raise PairError(f"pair ({i}, {j}) repeats a microphone")
        if not (0 <= i < num_mics and 0 <= j < num_mics):
            raise PairError(f"pair ({i}, {j}) out of range for {num_mics} microphones")
        if i > j:
            i, j = j, i
        if (i, j) in seen:
            raise PairError(f"duplicate pair ({i}, {j})")
        seen.add((i, j))
        out.append((i, j))
    return out


def pairwise_avg(aligned: AlignedSignals, pairs: Iterable[Sequence[int]]) -> np.ndarray:
    """(y'_i + y'_j) / 2 per pair, shape ``(P, T)``."""
    pl = validate_pairs(pairs, aligned.num_channels)
    y = aligned.signals
    return np.stack([0.5 * (y[:, i] + y[:, j]) for i, j in pl]) if pl else np.zeros((0, y.shape[0]))


def pairwise_diff(aligned: AlignedSignals, pairs: Iterable[Sequence[int]]) -> np.ndarray:
    """y'_i - y'_j per pair, shape ``(P, T)``."""
    pl = validate_pairs(pairs, aligned.num_channels)
    y = aligned.signals
    return np.stack([y[:, i] - y[:, j] for i, j in pl]) if pl else np.zeros((0, y.shape[0]))


def resolve_pairs(mode: str | Iterable[Sequence[int]], num_mics: int) -> list[Pair]:
    """``"all_pairs"``, ``"subset"`` (symmetric pairs of a linear array) or explicit pairs."""
    if isinstance(mode, str):
        key = mode.replace("-", "_")
        if key == "all_pairs":
            return all_pairs(num_mics)
        if key == "subset":
            return symmetric_pairs(num_mics)
        raise PairError(f"unknown pair mode {mode!r}")
    return validate_pairs(mode, num_mics)


def symmetric_pairs(num_mics: int) -> list[Pair]:
    """Mirror pairs (0, M-1), (1, M-2), ... of a linear array."""
    if num_mics == 8:
        return [tuple(p) for p in SUBSET_PAIRS]
    return [(i, num_mics - 1 - i) for i in range(num_mics // 2)]


def das_signal_set(aligned: AlignedSignals, pairs: Iterable[Sequence[int]]) -> DasSignalSet:
    pl = validate_pairs(pairs, aligned.num_channels)
    return DasSignalSet(
        aligned=aligned.signals.T.copy(),
        full_sum=das_sum(aligned),
        pair_avgs=pairwise_avg(aligned, pl),
        pair_diffs=pairwise_diff(aligned, pl),
        pair_list=pl,
    )


def assemble_das_features(
    audio: MultichannelAudio,
    geom: ArrayGeometry,
    angle: float,
    mode: str | Iterable[Sequence[int]] = "all_pairs",
) -> DasFeatures:
    if audio.num_channels != geom.num_mics:
        raise ValueError(f"audio has {audio.num_channels} channels, geometry has {geom.num_mics} mics")
    delays = compute_delays(geom, angle, audio.sample_rate)
    aligned = shift_align(audio, delays)
    sigset = das_signal_set(aligned, resolve_pairs(mode, geom.num_mics))
    return DasFeatures(FbankMatrix(fbank_array(stft_array(sigset.stacked()))), sigset.pair_list, delays.angle)

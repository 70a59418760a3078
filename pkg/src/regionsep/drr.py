"""Direct-to-reverberant ratio features from aligned microphone pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .das import AlignedSignals, Pair, validate_pairs
from .dsp import stft_array
from .geometry import SUBSET_PAIRS

EPS = 1e-8
RATIO_CLAMP_DB = 40.0


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def drr_gain(Yi: np.ndarray, Yj: np.ndarray, eps: float = EPS) -> np.ndarray:
    """|Yj| / (|Yi| + eps)."""
    _check_shapes(Yi, Yj)
    return np.abs(Yj) / (np.abs(Yi) + eps)


def compensate(Yi: np.ndarray, G: np.ndarray) -> np.ndarray:
    _check_shapes(Yi, G)
    return Yi * G


def residual_energy(Yj: np.ndarray, Yig: np.ndarray) -> np.ndarray:
    _check_shapes(Yj, Yig)
    return np.abs(Yj - Yig) ** 2


def direct_energy(Yj: np.ndarray, R: np.ndarray) -> np.ndarray:
    """|Yj|**2 - R; negative values are kept."""
    _check_shapes(Yj, R)
    return np.abs(Yj) ** 2 - R


def ratio_db(D: np.ndarray, R: np.ndarray, eps: float = EPS, clamp: float = RATIO_CLAMP_DB) -> np.ndarray:
    r = 10.0 * np.log10(np.maximum(D, eps) / np.maximum(R, eps))
    return np.clip(r, -clamp, clamp)


@dataclass
class DrrPairFeatures:
    direct: np.ndarray  # (P, T_frames, F)
    residual: np.ndarray  # (P, T_frames, F)
    mode: str
    pair_list: list[Pair]

    def emitted(self) -> np.ndarray:
        """Model-facing tensor: ``[D; R]`` stacked (2P channels) or the clamped dB ratio (P channels)."""
        if self.mode == "cat":
            return np.concatenate([self.direct, self.residual], axis=0)
        return ratio_db(self.direct, self.residual)


def pair_drr(Yi: np.ndarray, Yj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Direct and residual energy planes for one aligned pair."""
    G = drr_gain(Yi, Yj)
    R = residual_energy(Yj, compensate(Yi, G))
    return direct_energy(Yj, R), R


def drr_features(
    aligned: AlignedSignals,
    pairs: Iterable[Sequence[int]] = SUBSET_PAIRS,
    mode: str = "ratio",
) -> DrrPairFeatures:
    if mode not in ("cat", "ratio"):
        raise ValueError(f"mode must be 'cat' or 'ratio', got {mode!r}")
    pl = validate_pairs(pairs, aligned.num_channels)
    spec = stft_array(aligned.signals.T)
    direct, residual = [], []
    for i, j in pl:
        D, R = pair_drr(spec[i], spec[j])
        direct.append(D)
        residual.append(R)
    return DrrPairFeatures(np.stack(direct), np.stack(residual), mode, pl)

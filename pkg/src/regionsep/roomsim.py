"""Shoebox image-source room impulse responses.

Wall reflections are mirrored virtual sources with a uniform amplitude
reflection coefficient.  Arrivals land at fractional sample times and are
rendered with a 16-tap Hann-windowed sinc; each image contributes
``beta**order / (4 * pi * distance)``.  Reverberant responses are high-passed
to remove the DC build-up that all-positive image pulses otherwise produce,
since that build-up inflates the late energy and slows the decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.signal import butter, sosfilt

from .geometry import SPEED_OF_SOUND

SINC_TAPS = 16
WALL_MARGIN = 0.1
HIGHPASS_HZ = 50.0
# reflection loss at which the image expansion stops
ORDER_FLOOR_DB = -60.0


class RoomError(ValueError):
    pass


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple[float, float, float]
    t60: float = 0.0
    max_order: int | None = None

    def __post_init__(self) -> None:
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != 3 or min(dims) <= 2 * WALL_MARGIN:
            raise RoomError(f"invalid room dimensions {self.dims}")
        if not self.t60 >= 0:
            raise RoomError("t60 must be non-negative")
        if self.max_order is not None and self.max_order < 0:
            raise RoomError("max_order must be non-negative")
        object.__setattr__(self, "dims", dims)

    @property
    def volume(self) -> float:
        x, y, z = self.dims
        return x * y * z

    @property
    def surface(self) -> float:
        x, y, z = self.dims
        return 2.0 * (x * y + y * z + x * z)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "t60": self.t60, "max_order": self.max_order}

    @classmethod
    def from_dict(cls, doc: dict) -> "RoomSpec":
        return cls(tuple(doc["dims"]), float(doc.get("t60", 0.0)), doc.get("max_order"))

    def contains(self, point, margin: float = WALL_MARGIN) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= margin) and np.all(p <= np.asarray(self.dims) - margin))


def _unit_sphere(n: int = 2000) -> np.ndarray:
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = math.pi * (1.0 + 5**0.5) * i
    return np.abs(np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)], axis=1))


@lru_cache(maxsize=256)
def _unit_decay_time(dims: tuple[float, float, float], c: float) -> float:
    """T20-style decay time of the direction-averaged image energy for ln(1/beta) == 1.

    Energy arriving at time t along direction u has met c*t*sum(|u_k|/L_k)
    walls, so the late energy envelope is the sphere average of
    exp(-2 c t sum(|u_k|/L_k)) and its Schroeder integral has the closed form
    mean(exp(-a t) / a).  Decay time scales exactly as 1/ln(1/beta).
    """
    rates = 2.0 * c * (_unit_sphere() / np.asarray(dims)).sum(axis=1)
    t = np.linspace(0.0, 12.0 / rates.min(), 6000)
    edc = (np.exp(-np.outer(t, rates)) / rates).mean(axis=1)
    db = 10.0 * np.log10(edc / edc[0])
    sel = (db <= -5.0) & (db >= -25.0)
    slope = np.polyfit(t[sel], db[sel], 1)[0]
    return -60.0 / slope


def reflection_coefficient(room: RoomSpec, c: float = SPEED_OF_SOUND) -> float:
    """Uniform amplitude reflection coefficient giving the requested T60."""
    if room.t60 == 0:
        return 0.0
    gamma = _unit_decay_time(room.dims, c) / room.t60
    return math.exp(-gamma)


def absorption_coefficient(room: RoomSpec, c: float = SPEED_OF_SOUND) -> float:
    return 1.0 - reflection_coefficient(room, c) ** 2


def default_order(beta: float) -> int:
    if beta <= 0.0:
        return 0
    return int(math.ceil((ORDER_FLOOR_DB / 20.0) * math.log(10.0) / math.log(beta)))


@numba.njit(cache=True, nogil=True)
def _render_images(out, src, mics, dims, beta, order, sample_rate, c):
    n_mics, n_out = out.shape
    half = SINC_TAPS // 2
    cstep = math.cos(math.pi / half)
    sstep = math.sin(math.pi / half)
    for ux in range(-order, order + 1):
        ax = abs(ux)
        x = src[0] + ux * dims[0] if ux % 2 == 0 else -src[0] + (ux + 1) * dims[0]
        ry = order - ax
        for uy in range(-ry, ry + 1):
            ay = abs(uy)
            y = src[1] + uy * dims[1] if uy % 2 == 0 else -src[1] + (uy + 1) * dims[1]
            rz = ry - ay
            for uz in range(-rz, rz + 1):
                az = abs(uz)
                z = src[2] + uz * dims[2] if uz % 2 == 0 else -src[2] + (uz + 1) * dims[2]
                gain = beta ** (ax + ay + az)
                if gain == 0.0:
                    continue
                for m in range(n_mics):
                    dx = x - mics[m, 0]
                    dy = y - mics[m, 1]
                    dz = z - mics[m, 2]
                    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
                    t = dist * sample_rate / c
                    if t - half >= n_out:
                        continue
                    amp = gain / (4.0 * math.pi * dist)
                    k0 = int(math.floor(t))
                    frac = k0 - t  # in (-1, 0]
                    first = frac - (half - 1)  # offset of tap k0 - half + 1
                    s0 = math.sin(math.pi * frac)
                    # window angle pi*x/half advanced tap by tap
                    wc = math.cos(math.pi * first / half)
                    ws = math.sin(math.pi * first / half)
                    sign = 1.0 if (half - 1) % 2 == 0 else -1.0
                    for j in range(SINC_TAPS):
                        k = k0 - half + 1 + j
                        xx = first + j
                        if 0 <= k < n_out and abs(xx) < half:
                            if xx == 0.0:
                                sinc = 1.0
                            else:
                                sinc = sign * s0 / (math.pi * xx)
                            out[m, k] += amp * 0.5 * (1.0 + wc) * sinc
                        sign = -sign
                        wc, ws = wc * cstep - ws * sstep, ws * cstep + wc * sstep


def simulate_rir(
    room: RoomSpec,
    src,
    mic_positions,
    sample_rate: int = 16000,
    length: int | None = None,
    c: float = SPEED_OF_SOUND,
) -> np.ndarray:
    """Impulse responses from ``src`` to each microphone, shape ``(M, length)``.

    The image expansion runs to ``room.max_order`` reflections, or by default
    until the accumulated reflection loss reaches -60 dB.  The default length
    covers the latest direct arrival plus ``t60`` seconds.
    """
    src = np.asarray(src, dtype=float)
    mics = np.atleast_2d(np.asarray(mic_positions, dtype=float))
    if not room.contains(src):
        raise RoomError(f"source {src.tolist()} is not inside the room with {WALL_MARGIN} m margin")
    for m in mics:
        if not room.contains(m):
            raise RoomError(f"microphone {m.tolist()} is not inside the room with {WALL_MARGIN} m margin")
    beta = reflection_coefficient(room, c)
    order = default_order(beta)
    if room.max_order is not None:
        order = min(order, room.max_order)
    direct = np.linalg.norm(mics - src, axis=1) * sample_rate / c
    if length is None:
        length = int(math.ceil(direct.max() + room.t60 * sample_rate)) + SINC_TAPS
    out = np.zeros((mics.shape[0], length))
    _render_images(out, src, mics, np.asarray(room.dims, dtype=float), beta, order, float(sample_rate), float(c))
    if room.t60 > 0:
        out = sosfilt(_highpass(sample_rate), out, axis=-1)
    return out


@lru_cache(maxsize=8)
def _highpass(sample_rate: int) -> np.ndarray:
    return butter(4, HIGHPASS_HZ, btype="highpass", fs=sample_rate, output="sos")


def schroeder_curve(h: np.ndarray) -> np.ndarray:
    """Backward-integrated energy decay in dB, normalized to 0 dB at the start.

    For ``(..., T)`` input the squared responses are summed over the leading
    axes first, which gives the spatially averaged decay of several positions.
    """
    h = np.asarray(h, dtype=float)
    energy = (h**2).reshape(-1, h.shape[-1]).sum(axis=0)
    e = np.cumsum(energy[::-1])[::-1]
    return 10.0 * np.log10(np.maximum(e / e[0], 1e-300))


def schroeder_decay_time(h: np.ndarray, sample_rate: int = 16000, lo_db: float = -5.0, hi_db: float = -25.0) -> float:
    """T60 extrapolated from a line fit to the Schroeder curve between two levels."""
    edc = schroeder_curve(h)
    i0 = int(np.argmax(edc <= lo_db))
    i1 = int(np.argmax(edc <= hi_db))
    if i1 <= i0 + 1:
        raise ValueError("decay range not covered by the impulse response")
    t = np.arange(i0, i1) / sample_rate
    slope = np.polyfit(t, edc[i0:i1], 1)[0]
    return -60.0 / slope

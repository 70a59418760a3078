"""Array geometry, target regions and integer steering delays."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

SPEED_OF_SOUND = 343.0
DEFAULT_STEER_DISTANCE = 100.0

# guards floor() against distance differences that are integers up to rounding
_FLOOR_TOL = 1e-9


class GeometryError(ValueError):
    pass


def normalize_angle(angle: float) -> float:
    """Wrap an angle in degrees into [0, 360)."""
    if not math.isfinite(angle):
        raise GeometryError(f"angle must be finite, got {angle}")
    a = math.fmod(angle, 360.0)
    if a < 0:
        a += 360.0
    if a >= 360.0:  # fmod of tiny negatives
        a = 0.0
    return a


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions in the array's local frame (meters)."""

    mic_positions: np.ndarray
    ref_index: int = 0

    def __post_init__(self) -> None:
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] not in (2, 3):
            raise GeometryError("mic_positions must be an (M, 3) array")
        if pos.shape[1] == 2:
            pos = np.hstack([pos, np.zeros((pos.shape[0], 1))])
        if pos.shape[0] < 2:
            raise GeometryError("need at least two microphones")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("mic positions must be finite")
        if not 0 <= self.ref_index < pos.shape[0]:
            raise GeometryError(f"ref_index {self.ref_index} out of range for {pos.shape[0]} mics")
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        iu = np.triu_indices(pos.shape[0], k=1)
        if np.any(dist[iu] <= 1e-6):
            raise GeometryError("two microphones share a position")
        pos.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)

    @property
    def aperture(self) -> float:
        """Largest inter-microphone distance."""
        diff = self.mic_positions[:, None, :] - self.mic_positions[None, :, :]
        return float(np.linalg.norm(diff, axis=-1).max())

    def is_collinear(self, tol: float = 1e-9) -> bool:
        centered = self.mic_positions - self.centroid
        sv = np.linalg.svd(centered, compute_uv=False)
        return bool(sv[1] <= tol * max(sv[0], 1.0))

    def to_dict(self) -> dict:
        return {"mics": self.mic_positions.tolist(), "ref": self.ref_index}

    @classmethod
    def from_dict(cls, doc: dict) -> "ArrayGeometry":
        try:
            mics = doc["mics"]
        except (KeyError, TypeError) as exc:
            raise GeometryError("geometry document needs a 'mics' list") from exc
        return cls(np.asarray(mics, dtype=float), int(doc.get("ref", 0)))

    @classmethod
    def load(cls, path: str | Path) -> "ArrayGeometry":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def linear_array(num_mics: int = 8, aperture: float = 0.38, ref_index: int = 0) -> ArrayGeometry:
    """Uniform linear array along the local x axis, centered at the origin."""
    xs = np.linspace(-aperture / 2, aperture / 2, num_mics)
    pos = np.zeros((num_mics, 3))
    pos[:, 0] = xs
    return ArrayGeometry(pos, ref_index)


@dataclass(frozen=True)
class Region:
    """Azimuth interval (degrees, counter-clockwise from the array's x axis) and distance band."""

    azimuth_min: float
    azimuth_max: float
    max_distance: float
    min_distance: float = 0.0

    def __post_init__(self) -> None:
        lo = normalize_angle(self.azimuth_min)
        hi = float(self.azimuth_max)
        # an interval may end exactly at 360
        hi = 360.0 if math.isclose(hi, 360.0) else normalize_angle(hi)
        if not lo < hi:
            raise GeometryError(f"empty azimuth interval [{self.azimuth_min}, {self.azimuth_max}]")
        if not self.max_distance > 0:
            raise GeometryError("max_distance must be positive")
        if not 0 <= self.min_distance < self.max_distance:
            raise GeometryError("need 0 <= min_distance < max_distance")
        object.__setattr__(self, "azimuth_min", lo)
        object.__setattr__(self, "azimuth_max", hi)

    @property
    def center(self) -> float:
        """Steering angle used for this region."""
        return 0.5 * (self.azimuth_min + self.azimuth_max)

    @property
    def width(self) -> float:
        return self.azimuth_max - self.azimuth_min

    def contains_azimuth(self, azimuth: float, margin: float = 0.0) -> bool:
        a = normalize_angle(azimuth)
        lo, hi = self.azimuth_min - margin, self.azimuth_max + margin
        return any(lo <= a + k <= hi for k in (-360.0, 0.0, 360.0))

    def contains(self, azimuth: float, distance: float) -> bool:
        return self.contains_azimuth(azimuth) and self.min_distance <= distance <= self.max_distance

    def to_dict(self) -> dict:
        d = {"azimuth": [self.azimuth_min, self.azimuth_max], "max_distance": self.max_distance}
        if self.min_distance:
            d["min_distance"] = self.min_distance
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "Region":
        try:
            lo, hi = doc["azimuth"]
            return cls(float(lo), float(hi), float(doc["max_distance"]), float(doc.get("min_distance", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, GeometryError):
                raise
            raise GeometryError(f"bad region document: {doc!r}") from exc


DEFAULT_REGIONS = (Region(70.0, 80.0, 1.8), Region(100.0, 110.0, 1.8))
SUBSET_PAIRS = ((0, 7), (1, 6), (2, 5), (3, 4))


@dataclass(frozen=True)
class ArrayPose:
    """Placement of an array's local frame in room coordinates."""

    position: tuple[float, float, float]
    yaw: float = 0.0

    def rotation(self) -> np.ndarray:
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    def mic_positions(self, geom: ArrayGeometry) -> np.ndarray:
        return geom.mic_positions @ self.rotation().T + np.asarray(self.position, dtype=float)

    def centroid(self, geom: ArrayGeometry) -> np.ndarray:
        return self.mic_positions(geom).mean(axis=0)

    def to_dict(self) -> dict:
        return {"position": list(self.position), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, doc: dict) -> "ArrayPose":
        return cls(tuple(float(v) for v in doc["position"]), float(doc.get("yaw", 0.0)))


@dataclass(frozen=True)
class SteeringDelays:
    shifts: tuple[int, ...]
    angle: float
    sample_rate: int
    ref_index: int = 0

    def __post_init__(self) -> None:
        if self.shifts[self.ref_index] != 0:
            raise GeometryError("reference shift must be zero")
        bound = 10.0 * self.sample_rate / SPEED_OF_SOUND
        if any(abs(s) >= bound for s in self.shifts):
            raise GeometryError("steering shift exceeds the sanity bound for sub-10 m arrays")

    @property
    def max_advance(self) -> int:
        """Samples of look-ahead required by negative shifts."""
        return max(0, -min(self.shifts))


def compute_delays(
    geom: ArrayGeometry,
    angle: float,
    sample_rate: int,
    steer_distance: float = DEFAULT_STEER_DISTANCE,
    c: float = SPEED_OF_SOUND,
) -> SteeringDelays:
    """Integer alignment shifts toward a far point at ``angle`` degrees.

    The steering point sits ``steer_distance`` meters from the array centroid
    along the given azimuth, in the horizontal plane through the centroid.
    Shift ``i`` is ``floor((d_ref - d_i) * sample_rate / c)``, so a microphone
    closer to the source than the reference gets a positive shift (delay).
    """
    if sample_rate <= 0:
        raise GeometryError("sample_rate must be positive")
    angle = normalize_angle(angle)
    if steer_distance <= geom.aperture:
        raise GeometryError(
            f"far-field violation: steer_distance {steer_distance} m <= aperture {geom.aperture:.3f} m"
        )
    theta = math.radians(angle)
    point = geom.centroid + steer_distance * np.array([math.cos(theta), math.sin(theta), 0.0])
    dists = np.linalg.norm(geom.mic_positions - point, axis=1)
    raw = (dists[geom.ref_index] - dists) * sample_rate / c
    shifts = np.floor(raw + _FLOOR_TOL).astype(int)
    shifts[geom.ref_index] = 0
    return SteeringDelays(tuple(int(s) for s in shifts), float(angle), int(sample_rate), geom.ref_index)


def source_polar(source_xy: Sequence[float], array_xy: Sequence[float], yaw: float = 0.0) -> tuple[float, float]:
    """Azimuth (degrees, array frame) and horizontal distance of a source."""
    dx = float(source_xy[0]) - float(array_xy[0])
    dy = float(source_xy[1]) - float(array_xy[1])
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        raise GeometryError("source coincides with the array centroid")
    az = normalize_angle(math.degrees(math.atan2(dy, dx)) - yaw)
    return az, dist


def in_region(region: Region, source_xy: Sequence[float], array_pose: ArrayPose, geom: ArrayGeometry | None = None) -> bool:
    """Closed-interval membership test in azimuth and distance.

    Azimuth and distance are measured from the array centroid in the
    horizontal plane; when ``geom`` is omitted the pose position is taken as
    the centroid.
    """
    center = array_pose.centroid(geom) if geom is not None else np.asarray(array_pose.position, float)
    az, dist = source_polar(source_xy, center, array_pose.yaw)
    return region.contains(az, dist)


def mirror_azimuth(azimuth: float) -> float:
    """Reflection across a linear array's axis (front-back ambiguity)."""
    return normalize_angle(-azimuth)

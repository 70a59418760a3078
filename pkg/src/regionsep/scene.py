"""Region-labeled scene synthesis.

A scene places speech sources around an array according to their role:

* ``target``   inside a region (azimuth interval and distance band)
* ``interf_a`` same azimuth interval as the target, beyond the distance bound
* ``interf_b`` within the distance bound, outside every azimuth interval
* ``interf_c`` outside both
* ``source``   unconstrained (explicit positions, e.g. heatmap probes)
* ``point_noise`` a stationary noise source anywhere in the room

Every source is convolved with its simulated impulse responses and scaled
relative to the reference source (the target, or the first speech source when
there is no target) measured at microphone 0.  The mixture is the plain sum of
the scaled images and the noise image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import read_wav, write_wav
from .dsp import SAMPLE_RATE, MultichannelAudio
from .geometry import ArrayGeometry, ArrayPose, Region, in_region, linear_array, mirror_azimuth, source_polar
from .roomsim import RoomSpec, absorption_coefficient, simulate_rir
from .signals import make_signal

SPEECH_ROLES = ("target", "interf_a", "interf_b", "interf_c", "source")
ROLES = SPEECH_ROLES + ("point_noise",)

TARGET_MIN_DISTANCE = 0.5
DISTANCE_BUFFER = 0.2
AZIMUTH_MARGIN = 10.0
SOURCE_HEIGHT = 1.5
PLACEMENT_MARGIN = 0.2
MAX_ATTEMPTS = 1000
MIN_NOISE_DISTANCE = 0.3


class PlacementError(RuntimeError):
    pass


@dataclass
class SourceSpec:
    role: str
    position: tuple[float, float, float] | None = None
    signal: str = "speech"
    wav_path: str | None = None
    level_db: float | None = None
    region: int | None = None

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown source role {self.role!r}")

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, doc: dict) -> "SourceSpec":
        pos = doc.get("position")
        return cls(
            role=doc["role"],
            position=tuple(float(v) for v in pos) if pos is not None else None,
            signal=doc.get("signal", "noise" if doc["role"] == "point_noise" else "speech"),
            wav_path=doc.get("wav_path"),
            level_db=doc.get("level_db"),
            region=doc.get("region"),
        )


@dataclass
class SceneSpec:
    room: RoomSpec
    sources: list[SourceSpec]
    geometry: ArrayGeometry = field(default_factory=linear_array)
    regions: list[Region] = field(default_factory=list)
    array_pose: ArrayPose | None = None
    duration: float = 4.0
    seed: int = 0
    sample_rate: int = SAMPLE_RATE
    sir_range: tuple[float, float] = (-5.0, 5.0)
    snr_range: tuple[float, float] = (5.0, 20.0)
    exclude_mirror: bool | None = None

    def __post_init__(self) -> None:
        if self.sample_rate != SAMPLE_RATE:
            raise ValueError("scenes are synthesized at 16 kHz")
        targets = [s for s in self.sources if s.role == "target"]
        if len(targets) > max(1, len(self.regions)):
            raise ValueError("more targets than regions")
        used = [s.region for s in targets if s.region is not None]
        if len(used) != len(set(used)):
            raise ValueError("two targets share a region")
        constrained = any(s.role in ("target", "interf_a", "interf_b", "interf_c") and s.position is None for s in self.sources)
        if constrained and not self.regions:
            raise ValueError("sampled target/interferer positions need at least one region")
        if sum(s.role == "point_noise" for s in self.sources) > 1:
            raise ValueError("at most one point noise source per scene")

    @property
    def mirror_excluded(self) -> bool:
        return self.geometry.is_collinear() if self.exclude_mirror is None else self.exclude_mirror

    def to_dict(self) -> dict:
        return {
            "room": self.room.to_dict(),
            "geometry": self.geometry.to_dict(),
            "regions": [r.to_dict() for r in self.regions],
            "array_pose": self.array_pose.to_dict() if self.array_pose else None,
            "sources": [s.to_dict() for s in self.sources],
            "duration": self.duration,
            "seed": self.seed,
            "sample_rate": self.sample_rate,
            "sir_range": list(self.sir_range),
            "snr_range": list(self.snr_range),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SceneSpec":
        geom = ArrayGeometry.from_dict(doc["geometry"]) if "geometry" in doc else linear_array()
        pose = doc.get("array_pose")
        return cls(
            room=RoomSpec.from_dict(doc["room"]),
            sources=[SourceSpec.from_dict(s) for s in doc["sources"]],
            geometry=geom,
            regions=[Region.from_dict(r) for r in doc.get("regions", [])],
            array_pose=ArrayPose.from_dict(pose) if pose else None,
            duration=float(doc.get("duration", 4.0)),
            seed=int(doc.get("seed", 0)),
            sir_range=tuple(doc.get("sir_range", (-5.0, 5.0))),
            snr_range=tuple(doc.get("snr_range", (5.0, 20.0))),
        )


@dataclass
class SceneTruth:
    mixture: MultichannelAudio
    source_images: list[np.ndarray]  # each (T, M)
    noise_image: np.ndarray  # (T, M)
    metadata: dict
    scene_id: str | None = None

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry.from_dict(self.metadata["geometry"])

    @property
    def regions(self) -> list[Region]:
        return [Region.from_dict(r) for r in self.metadata["regions"]]

    @property
    def sources(self) -> list[dict]:
        return self.metadata["sources"]


# ---------------------------------------------------------------- placement


def _excluded_intervals(regions: Sequence[Region], mirror: bool) -> list[tuple[float, float]]:
    out = []
    for r in regions:
        out.append((r.azimuth_min - AZIMUTH_MARGIN, r.azimuth_max + AZIMUTH_MARGIN))
        if mirror:
            lo, hi = mirror_azimuth(r.azimuth_max), mirror_azimuth(r.azimuth_min)
            if hi < lo:
                hi += 360.0
            out.append((lo - AZIMUTH_MARGIN, hi + AZIMUTH_MARGIN))
    return out


def _in_intervals(az: float, intervals) -> bool:
    return any(lo <= az + k <= hi for lo, hi in intervals for k in (-360.0, 0.0, 360.0))


@dataclass(frozen=True)
class Constraint:
    """Admissible set for one sampled position, in array-relative polar coordinates."""

    kind: str
    region: Region | None = None
    regions: tuple[Region, ...] = ()
    mirror: bool = False

    def azimuth_ok(self, az: float) -> bool:
        if self.kind in ("target", "interf_a"):
            return self.region.contains_azimuth(az)
        if self.kind in ("interf_b", "interf_c"):
            return not _in_intervals(az, _excluded_intervals(self.regions, self.mirror))
        return True

    def distance_bounds(self, far: float) -> tuple[float, float]:
        if self.kind == "source":
            return MIN_NOISE_DISTANCE, far
        near_bound = max(r.max_distance for r in self.regions) if self.regions else self.region.max_distance
        if self.kind == "target":
            return max(TARGET_MIN_DISTANCE, self.region.min_distance), self.region.max_distance
        if self.kind == "interf_b":
            return TARGET_MIN_DISTANCE, near_bound
        if self.kind == "interf_a":
            return self.region.max_distance + DISTANCE_BUFFER, far
        if self.kind == "interf_c":
            return near_bound + DISTANCE_BUFFER, far
        raise ValueError(self.kind)

    def admits(self, az: float, dist: float) -> bool:
        if self.kind == "point_noise":
            return dist >= MIN_NOISE_DISTANCE
        lo, hi = self.distance_bounds(math.inf)
        if self.kind in ("interf_a", "interf_c", "source"):
            ok_dist = dist > lo - 1e-12
        else:
            ok_dist = lo <= dist <= hi
        return ok_dist and self.azimuth_ok(az)


def sample_position(
    constraint: Constraint,
    room: RoomSpec,
    rng: np.random.Generator,
    array_center: Sequence[float],
    yaw: float = 0.0,
    height: float = SOURCE_HEIGHT,
    tries: int = MAX_ATTEMPTS,
) -> np.ndarray:
    """Rejection-sample a point satisfying ``constraint`` inside ``room``.

    Speech roles draw azimuth uniformly over the admissible interval(s) and
    distance uniformly over the admissible band, at a fixed height.  Point
    noise is uniform over the room volume.
    """
    dims = np.asarray(room.dims)
    center = np.asarray(array_center, dtype=float)
    far = float(np.linalg.norm(np.maximum(center[:2], dims[:2] - center[:2])))
    for _ in range(tries):
        if constraint.kind == "point_noise":
            p = rng.uniform(PLACEMENT_MARGIN, dims - PLACEMENT_MARGIN)
            if np.linalg.norm(p[:2] - center[:2]) < MIN_NOISE_DISTANCE:
                continue
            return p
        if constraint.kind in ("target", "interf_a"):
            r = constraint.region
            az = rng.uniform(r.azimuth_min, r.azimuth_max)
        else:
            az = rng.uniform(0.0, 360.0)
            if not constraint.azimuth_ok(az):
                continue
        lo, hi = constraint.distance_bounds(far)
        if hi <= lo:
            raise PlacementError(f"{constraint.kind}: empty distance band ({lo:.2f}, {hi:.2f}] m in room {room.dims}")
        dist = rng.uniform(lo, hi)
        ang = math.radians(az + yaw)
        p = np.array([center[0] + dist * math.cos(ang), center[1] + dist * math.sin(ang), height])
        if room.contains(p, PLACEMENT_MARGIN):
            return p
    raise PlacementError(f"no admissible {constraint.kind} position after {tries} attempts in room {room.dims}")


def _sample_pose(spec: SceneSpec, rng: np.random.Generator) -> ArrayPose:
    dims = np.asarray(spec.room.dims)
    for _ in range(MAX_ATTEMPTS):
        xy = rng.uniform(0.5, dims[:2] - 0.5)
        pose = ArrayPose((float(xy[0]), float(xy[1]), SOURCE_HEIGHT), float(rng.uniform(0.0, 360.0)))
        if all(spec.room.contains(m, PLACEMENT_MARGIN) for m in pose.mic_positions(spec.geometry)):
            return pose
    raise PlacementError(f"array does not fit in room {spec.room.dims}")


@dataclass
class ScenePlan:
    pose: ArrayPose
    positions: list[np.ndarray]
    regions_of: list[int | None]
    levels_db: list[float]


def plan_scene(spec: SceneSpec) -> ScenePlan:
    """Resolve the array pose, source positions and levels under ``spec.seed``."""
    ss = np.random.SeedSequence(spec.seed)
    place_rng, level_rng, region_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    regions = tuple(spec.regions)
    region_of: list[int | None] = []
    target_region = None
    for s in spec.sources:
        if s.role == "target":
            idx = s.region if s.region is not None else int(region_rng.integers(len(regions))) if regions else None
            target_region = idx if target_region is None else target_region
            region_of.append(idx)
        else:
            region_of.append(s.region)
    for k, s in enumerate(spec.sources):
        if s.role == "interf_a" and region_of[k] is None:
            region_of[k] = target_region if target_region is not None else int(region_rng.integers(len(regions)))

    failures: dict[str, int] = {}
    attempts = 1 if spec.array_pose is not None else MAX_ATTEMPTS
    tries = MAX_ATTEMPTS if spec.array_pose is not None else 50
    for _ in range(attempts):
        pose = spec.array_pose or _sample_pose(spec, place_rng)
        center = pose.centroid(spec.geometry)
        positions = []
        try:
            for s, reg in zip(spec.sources, region_of):
                if s.position is not None:
                    p = np.asarray(s.position, dtype=float)
                    if not spec.room.contains(p):
                        raise PlacementError(f"explicit: position {s.position} lies outside the room")
                    positions.append(p)
                    continue
                c = Constraint(s.role, regions[reg] if reg is not None else None, regions, spec.mirror_excluded)
                positions.append(sample_position(c, spec.room, place_rng, center, pose.yaw, tries=tries))
        except PlacementError as exc:
            key = str(exc).split(":")[0].split(" ")[-1] if ":" in str(exc) else str(exc)
            failures[key] = failures.get(key, 0) + 1
            continue
        levels = []
        for s in spec.sources:
            if s.level_db is not None:
                levels.append(float(s.level_db))
            elif s.role == "point_noise":
                levels.append(float(level_rng.uniform(*spec.snr_range)))
            elif s.role in ("interf_a", "interf_b", "interf_c"):
                levels.append(float(level_rng.uniform(*spec.sir_range)))
            else:
                levels.append(0.0)
        return ScenePlan(pose, positions, region_of, levels)
    raise PlacementError(
        f"unsatisfiable placement in room {spec.room.dims} after {attempts} attempts; failures by role: {failures}"
    )


# ---------------------------------------------------------------- synthesis


def _dry_signal(s: SourceSpec, index: int, spec: SceneSpec) -> np.ndarray:
    n = int(round(spec.duration * spec.sample_rate))
    if s.wav_path:
        x = read_wav(s.wav_path).samples[:, 0]
        if len(x) < n:
            x = np.pad(x, (0, n - len(x)))
        x = x[:n]
        rms = np.sqrt(np.mean(x**2))
        return x / rms if rms > 0 else x
    kind = s.signal if s.role != "point_noise" or s.signal != "speech" else "noise"
    seed = int(np.random.SeedSequence([spec.seed, 7919, index]).generate_state(1)[0])
    return make_signal(kind, spec.duration, seed, spec.sample_rate)


def source_labels(position, pose: ArrayPose, geom: ArrayGeometry, regions: Sequence[Region]) -> dict:
    center = pose.centroid(geom)
    az, dist = source_polar(position[:2], center[:2], pose.yaw)
    return {
        "azimuth": az,
        "distance": dist,
        "in_regions": [in_region(r, position[:2], pose, geom) for r in regions],
    }


def synthesize_scene(spec: SceneSpec, plan: ScenePlan | None = None) -> SceneTruth:
    plan = plan or plan_scene(spec)
    mics = plan.pose.mic_positions(spec.geometry)
    n = int(round(spec.duration * spec.sample_rate))
    images = []
    for k, (s, pos) in enumerate(zip(spec.sources, plan.positions)):
        rir = simulate_rir(spec.room, pos, mics, spec.sample_rate)
        dry = _dry_signal(s, k, spec)
        images.append(fftconvolve(dry[None, :], rir, axes=-1)[:, :n].T)

    ref = next((k for k, s in enumerate(spec.sources) if s.role == "target"), None)
    if ref is None:
        ref = next((k for k, s in enumerate(spec.sources) if s.role != "point_noise"), None)
    ref_energy = float(np.sum(images[ref][:, 0] ** 2)) if ref is not None else None

    source_images: list[np.ndarray] = []
    noise_image = np.zeros((n, spec.geometry.num_mics))
    meta_sources, noise_meta = [], None
    for k, s in enumerate(spec.sources):
        img = images[k]
        level = plan.levels_db[k]
        if ref_energy is not None and k != ref:
            e = float(np.sum(img[:, 0] ** 2))
            if e > 0:
                img = img * math.sqrt(ref_energy / e * 10.0 ** (-level / 10.0))
        entry = {
            "role": s.role,
            "position": [float(v) for v in plan.positions[k]],
            "level_db": level,
            "signal": s.wav_path or s.signal,
        }
        entry.update(source_labels(plan.positions[k], plan.pose, spec.geometry, spec.regions))
        if plan.regions_of[k] is not None:
            entry["region"] = plan.regions_of[k]
        if s.role == "point_noise":
            noise_image = img
            noise_meta = entry
        else:
            entry["index"] = len(source_images)
            source_images.append(img)
            meta_sources.append(entry)

    mixture = noise_image.copy()
    for img in source_images:
        mixture = mixture + img
    metadata = {
        "sample_rate": spec.sample_rate,
        "duration": spec.duration,
        "seed": spec.seed,
        "room": dict(spec.room.to_dict(), absorption=absorption_coefficient(spec.room)),
        "geometry": spec.geometry.to_dict(),
        "array_pose": plan.pose.to_dict(),
        "array_centroid": [float(v) for v in plan.pose.centroid(spec.geometry)],
        "regions": [r.to_dict() for r in spec.regions],
        "sources": meta_sources,
        "noise": noise_meta,
    }
    _check_taxonomy(metadata)
    return SceneTruth(MultichannelAudio(mixture, spec.sample_rate), source_images, noise_image, metadata)


def _check_taxonomy(meta: dict) -> None:
    regions = [Region.from_dict(r) for r in meta["regions"]]
    for s in meta["sources"]:
        role, labels = s["role"], s["in_regions"]
        if role == "target":
            ok = labels[s["region"]] if s.get("region") is not None else any(labels)
        elif role in ("interf_a", "interf_b", "interf_c"):
            ok = not any(labels)
            near = s["distance"] <= max(r.max_distance for r in regions)
            az_hit = any(r.contains_azimuth(s["azimuth"]) for r in regions)
            ok = ok and {"interf_a": (not near and az_hit), "interf_b": (near and not az_hit), "interf_c": (not near and not az_hit)}[role]
        else:
            ok = True
        if not ok:
            raise PlacementError(f"source with role {role} violates its region labels: {s}")


# ---------------------------------------------------------------- storage


def save_scene(truth: SceneTruth, directory: str | Path) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "mixture.wav", truth.mixture)
    for k, img in enumerate(truth.source_images):
        write_wav(d / f"src_{k}.wav", MultichannelAudio(img, truth.mixture.sample_rate))
    write_wav(d / "noise.wav", MultichannelAudio(truth.noise_image, truth.mixture.sample_rate))
    (d / "meta.json").write_text(json.dumps(truth.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return d


def load_scene(directory: str | Path) -> SceneTruth:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    mixture = read_wav(d / "mixture.wav")
    images = [read_wav(d / f"src_{s['index']}.wav").samples for s in meta["sources"]]
    noise_path = d / "noise.wav"
    noise = read_wav(noise_path).samples if noise_path.exists() else np.zeros_like(mixture.samples)
    return SceneTruth(mixture, images, noise, meta, scene_id=d.name)


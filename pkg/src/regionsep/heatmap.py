"""Decay heatmap over a grid of single-source positions.

A linear array sits at the centre of a 5 x 5 x 3 m room.  For every grid
point a one-source scene is simulated, the array is steered at each region's
central angle and the Decay of the separated output is recorded.  The cell
value is the smallest Decay over the steered regions, so cells that any
region passes show up dark.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import DEFAULT_REGIONS, ArrayGeometry, ArrayPose, Region, linear_array, mirror_azimuth, source_polar
from .metrics import decay
from .roomsim import RoomSpec
from .scene import SceneSpec, SourceSpec, synthesize_scene
from .separation import OracleMask, PassthroughMask, beamform, separate

HEATMAP_ROOM = (5.0, 5.0, 3.0)
WALL_CLEARANCE = 0.2
PGM_MAX_DB = 60.0
# grid points this close to the array centroid are left out (NaN)
MIN_SOURCE_DISTANCE = 0.1


@dataclass
class HeatmapConfig:
    grid_step: float = 0.2
    t60: float = 0.3
    duration: float = 2.0
    mask: str = "oracle"
    seed: int = 0
    regions: list[Region] = field(default_factory=lambda: list(DEFAULT_REGIONS))
    geometry: ArrayGeometry = field(default_factory=linear_array)
    room_dims: tuple[float, float, float] = HEATMAP_ROOM
    height: float = 1.5

    def axis(self) -> np.ndarray:
        lo, hi = WALL_CLEARANCE, self.room_dims[0] - WALL_CLEARANCE
        n = int(math.floor((hi - lo) / self.grid_step + 1e-9)) + 1
        return lo + self.grid_step * np.arange(n)

    def to_dict(self) -> dict:
        return {
            "grid_step": self.grid_step,
            "t60": self.t60,
            "duration": self.duration,
            "mask": self.mask,
            "seed": self.seed,
            "regions": [r.to_dict() for r in self.regions],
            "geometry": self.geometry.to_dict(),
            "room_dims": list(self.room_dims),
            "height": self.height,
        }


@dataclass
class HeatmapResult:
    xs: np.ndarray
    ys: np.ndarray
    decay_db: np.ndarray  # (len(ys), len(xs)), row j is y = ys[j]
    cells: list[dict]

    def grid_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in self.decay_db:
            w.writerow([repr(round(float(v), 4)) for v in row])
        return buf.getvalue()

    def cells_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["ix", "iy", "x", "y", "azimuth", "distance", "in_region", "decay_db"]
        w.writerow(cols)
        for c in self.cells:
            w.writerow([c[k] if not isinstance(c[k], float) else repr(round(c[k], 6)) for k in cols])
        return buf.getvalue()

    def pgm(self, max_db: float = PGM_MAX_DB) -> bytes:
        """8-bit binary PGM, top row = largest y; black = 0 dB, white >= ``max_db`` or skipped."""
        img = np.clip(np.nan_to_num(self.decay_db[::-1], nan=max_db) / max_db, 0.0, 1.0)
        pix = np.round(img * 255).astype(np.uint8)
        h, w = pix.shape
        return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        paths = {"grid": d / "heatmap.csv", "cells": d / "heatmap_cells.csv", "image": d / "heatmap.pgm"}
        paths["grid"].write_text(self.grid_csv(), encoding="utf-8")
        paths["cells"].write_text(self.cells_csv(), encoding="utf-8")
        paths["image"].write_bytes(self.pgm())
        return paths


def region_hit(regions: Sequence[Region], azimuth: float, distance: float, fold_mirror: bool) -> bool:
    for r in regions:
        if r.contains(azimuth, distance) or (fold_mirror and r.contains(mirror_azimuth(azimuth), distance)):
            return True
    return False


def _cell(cfg: HeatmapConfig, pose: ArrayPose, index: int, x: float, y: float) -> float:
    spec = SceneSpec(
        room=RoomSpec(cfg.room_dims, cfg.t60),
        sources=[SourceSpec("source", position=(x, y, cfg.height))],
        geometry=cfg.geometry,
        regions=list(cfg.regions),
        array_pose=pose,
        duration=cfg.duration,
        seed=cfg.seed * 100003 + index,
    )
    truth = synthesize_scene(spec)
    decays = []
    for region in cfg.regions:
        src = OracleMask(truth, region) if cfg.mask == "oracle" else PassthroughMask()
        ys = beamform(truth.mixture, truth.geometry, region.center)
        est = separate(truth.mixture, truth.geometry, region.center, src)
        decays.append(decay(ys, est))
    return min(decays)


def heatmap_protocol(cfg: HeatmapConfig | None = None, workers: int | None = None) -> HeatmapResult:
    cfg = cfg or HeatmapConfig()
    if cfg.mask not in ("oracle", "passthrough"):
        raise ValueError(f"heatmap supports oracle or passthrough masks, not {cfg.mask!r}")
    centre = (cfg.room_dims[0] / 2, cfg.room_dims[1] / 2, cfg.height)
    pose = ArrayPose(centre, 0.0)
    xs = cfg.axis()
    ys = WALL_CLEARANCE + cfg.grid_step * np.arange(len(cfg.axis()))
    points = [(iy, ix, float(x), float(y)) for iy, y in enumerate(ys) for ix, x in enumerate(xs)]
    workers = workers or int(os.environ.get("RSS_THREADS", "1"))

    def run(p):
        iy, ix, x, y = p
        if math.hypot(x - centre[0], y - centre[1]) < MIN_SOURCE_DISTANCE:
            return math.nan
        return _cell(cfg, pose, iy * len(xs) + ix, x, y)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(run, points))
    else:
        values = [run(p) for p in points]

    fold = cfg.geometry.is_collinear()
    grid = np.zeros((len(ys), len(xs)))
    cells = []
    for (iy, ix, x, y), v in zip(points, values):
        grid[iy, ix] = v
        if math.isnan(v):
            az, dist = math.nan, math.hypot(x - centre[0], y - centre[1])
        else:
            az, dist = source_polar((x, y), centre, pose.yaw)
        cells.append(
            {
                "ix": ix,
                "iy": iy,
                "x": x,
                "y": y,
                "azimuth": az,
                "distance": dist,
                "in_region": int(not math.isnan(az) and region_hit(cfg.regions, az, dist, fold)),
                "decay_db": v,
            }
        )
    return HeatmapResult(xs, ys, grid, cells)

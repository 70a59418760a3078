"""Command-line entry point: simulate, features, separate, evaluate, heatmap.

Every subcommand takes ``--config <json>`` whose keys match the long flag
names (dashes or underscores).  Explicit flags win over the file, the file
wins over preset and built-in defaults, and the resolved configuration is
written to ``<out>/config.json``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import FormatError, write_feature, write_wav
from .das import assemble_das_features, resolve_pairs, shift_align
from .dsp import MultichannelAudio
from .drr import drr_features
from .geometry import DEFAULT_REGIONS, GeometryError, Region, linear_array
from .heatmap import HeatmapConfig, heatmap_protocol
from .metrics import evaluate_scene_set
from .roomsim import RoomError, RoomSpec
from .scene import PlacementError, SceneSpec, SourceSpec, load_scene, save_scene, synthesize_scene
from .separation import FileMask, MaskError, OracleMask, PassthroughMask, beamform, separate, steering

log = logging.getLogger("regionsep")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

ROOM_MIN = (3.0, 3.0, 2.5)
ROOM_MAX = (10.0, 8.0, 4.0)
REGION_HALF_WIDTH = 5.0
REGION_MAX_DISTANCE = 1.8

SCENE_KINDS = {
    "full": ("target", "interf_a", "interf_b", "interf_c", "point_noise"),
    "no-target": ("interf_a", "interf_b", "interf_c", "point_noise"),
    "two-target": ("target", "target", "interf_a", "interf_b", "interf_c", "point_noise"),
}

PRESETS = {
    "paper-linear8": {"t60_range": [0.2, 0.8], "kind": "full"},
    "t60-sweep": {"t60_range": [0.05, 0.8], "kind": "full"},
    "fig2-heatmap": {"grid_step": 0.2, "t60": 0.3, "mask": "oracle"},
}

DEFAULTS = {
    "seed": 0,
    "count": 1,
    "preset": "paper-linear8",
    "kind": "full",
    "t60_range": [0.2, 0.8],
    "duration": 4.0,
    "das": "all-pairs",
    "drr": "ratio",
    "mask": "oracle",
    "regions": None,
    "grid_step": 0.2,
    "t60": 0.3,
}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


def _parse_regions(text) -> list[float] | None:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--regions expects comma-separated degrees, got {text!r}") from exc


def resolve_config(args: argparse.Namespace, keys: list[str]) -> dict:
    cfg = {k: DEFAULTS.get(k) for k in keys}
    preset = getattr(args, "preset", None)
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        doc = {k.replace("-", "_"): v for k, v in doc.items()}
        unknown = sorted(set(doc) - set(keys) - {"preset"})
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        preset = preset or doc.pop("preset", None)
    else:
        doc = {}
    preset = preset or cfg.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}")
        cfg.update({k: v for k, v in PRESETS[preset].items() if k in keys})
        if "preset" in keys:
            cfg["preset"] = preset
    cfg.update(doc)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if "regions" in cfg:
        cfg["regions"] = _parse_regions(cfg["regions"])
    if "t60_range" in cfg:
        lo, hi = (float(v) for v in cfg["t60_range"])
        if not 0 <= lo <= hi:
            raise UsageError("--t60-range needs 0 <= lo <= hi")
        cfg["t60_range"] = [lo, hi]
    return cfg


def _echo_config(out: Path, command: str, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = {"command": command, **cfg}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("RSS_THREADS", "1")))
    except ValueError as exc:
        raise UsageError("RSS_THREADS must be an integer") from exc


def _pmap(fn, items):
    n = _threads()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _angle_tag(angle: float) -> str:
    return f"{angle:g}".replace(".", "p").replace("-", "m")


def _scene_dirs(path: Path) -> list[Path]:
    if not path.is_dir():
        raise DataError(f"scene directory {path} does not exist")
    if (path / "meta.json").exists():
        return [path]
    dirs = sorted(p for p in path.iterdir() if p.is_dir() and (p / "meta.json").exists())
    if not dirs:
        raise DataError(f"no scenes found under {path}")
    return dirs


def _select_regions(scene_regions: list[Region], angles: list[float] | None) -> list[Region]:
    """Scene regions, or for explicit angles the matching scene region (else a default-width one)."""
    if angles is None:
        if not scene_regions:
            raise DataError("scene defines no regions; pass --regions")
        return scene_regions
    out = []
    for a in angles:
        match = next((r for r in scene_regions if abs(r.center - a) < 1e-9), None)
        out.append(match or Region(a - REGION_HALF_WIDTH, a + REGION_HALF_WIDTH, REGION_MAX_DISTANCE))
    return out


# ---------------------------------------------------------------- simulate


def scene_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def build_scene_spec(cfg: dict, index: int) -> SceneSpec:
    seed = scene_seed(cfg["seed"], index)
    rng = np.random.default_rng(seed)
    dims = tuple(float(v) for v in rng.uniform(ROOM_MIN, ROOM_MAX))
    t60 = float(rng.uniform(*cfg["t60_range"]))
    kind = cfg["kind"]
    if kind == "mixed":
        kind = ("no-target", "full", "two-target")[index % 3]
    if kind not in SCENE_KINDS:
        raise UsageError(f"unknown scene kind {kind!r}")
    angles = cfg.get("regions")
    regions = list(DEFAULT_REGIONS) if angles is None else _select_regions([], angles)
    sources = []
    n_targets = 0
    for role in SCENE_KINDS[kind]:
        if role == "target":
            sources.append(SourceSpec(role, region=n_targets if kind == "two-target" else None))
            n_targets += 1
        else:
            sources.append(SourceSpec(role))
    return SceneSpec(
        room=RoomSpec(dims, t60),
        sources=sources,
        geometry=linear_array(),
        regions=regions,
        duration=float(cfg["duration"]),
        seed=seed,
    )


def cmd_simulate(args) -> int:
    cfg = resolve_config(args, ["seed", "count", "preset", "kind", "t60_range", "duration", "regions"])
    if cfg["count"] < 1:
        raise UsageError("--count must be at least 1")
    out = Path(args.out)
    _echo_config(out, "simulate", cfg)

    def one(i: int) -> dict:
        spec = build_scene_spec(cfg, i)
        truth = synthesize_scene(spec)
        sid = f"scene_{i:05d}"
        save_scene(truth, out / sid)
        (out / sid / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return {
            "id": sid,
            "seed": spec.seed,
            "room": truth.metadata["room"],
            "sources": [{k: s[k] for k in ("role", "azimuth", "distance", "in_regions")} for s in truth.sources],
        }

    entries = _pmap(one, range(cfg["count"]))
    manifest = {"command": "simulate", "config": cfg, "scenes": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(entries)} scenes to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- features


def cmd_features(args) -> int:
    cfg = resolve_config(args, ["das", "drr", "regions"])
    if cfg["das"] not in ("all-pairs", "subset") or cfg["drr"] not in ("cat", "ratio"):
        raise UsageError("--das must be all-pairs|subset and --drr cat|ratio")
    scenes = _scene_dirs(Path(args.scenes))
    out = Path(args.out)
    _echo_config(out, "features", dict(cfg, scenes=str(args.scenes)))

    def one(d: Path) -> dict:
        truth = load_scene(d)
        geom = truth.geometry
        written = []
        target = out / d.name
        target.mkdir(parents=True, exist_ok=True)
        for region in _select_regions(truth.regions, cfg["regions"]):
            angle = region.center
            tag = _angle_tag(angle)
            das = assemble_das_features(truth.mixture, geom, angle, cfg["das"].replace("-", "_"))
            write_feature(target / f"das_{tag}", das.fbank.values, "das", pair_list=[list(p) for p in das.pair_list], angle=angle, mode=cfg["das"])
            aligned = shift_align(truth.mixture, steering(geom, angle))
            drr = drr_features(aligned, resolve_pairs("subset", geom.num_mics), cfg["drr"])
            write_feature(target / f"drr_{tag}", drr.emitted(), "drr", pair_list=[list(p) for p in drr.pair_list], angle=angle, mode=cfg["drr"])
            written += [f"das_{tag}", f"drr_{tag}"]
        return {"id": d.name, "features": written}

    entries = _pmap(one, scenes)
    manifest = {"command": "features", "config": cfg, "scenes": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote features for {len(entries)} scenes to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- separate / evaluate


def _mask_factory(spec: str):
    """Return ``(truth, region) -> MaskSource`` for a --mask value.

    ``file:<dir>`` looks up ``<dir>/<scene_id>/mask_<angle>``; ``file:<base>``
    uses one mask file for every scene and region.
    """
    if spec == "oracle":
        return lambda truth, region: OracleMask(truth, region)
    if spec == "passthrough":
        return lambda truth, region: PassthroughMask()
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if path.is_dir():
            return lambda truth, region: FileMask(path / str(truth.scene_id) / f"mask_{_angle_tag(region.center)}")
        return lambda truth, region: FileMask(path)
    raise UsageError(f"--mask must be oracle, passthrough or file:<path>, got {spec!r}")


def cmd_separate(args) -> int:
    cfg = resolve_config(args, ["mask", "regions"])
    make_mask = _mask_factory(cfg["mask"])
    scenes = _scene_dirs(Path(args.scenes))
    out = Path(args.out)
    _echo_config(out, "separate", dict(cfg, scenes=str(args.scenes)))
    entries = []
    for d in scenes:
        truth = load_scene(d)
        written = []
        for region in _select_regions(truth.regions, cfg["regions"]):
            est = separate(truth.mixture, truth.geometry, region.center, make_mask(truth, region))
            name = f"est_{_angle_tag(region.center)}.wav"
            (out / d.name).mkdir(parents=True, exist_ok=True)
            write_wav(out / d.name / name, MultichannelAudio(est[:, None], truth.mixture.sample_rate))
            written.append(name)
        entries.append({"id": d.name, "outputs": written})
    manifest = {"command": "separate", "config": cfg, "scenes": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"separated {len(entries)} scenes into {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args, ["mask"])
    make_mask = _mask_factory(cfg["mask"])
    root = Path(args.scenes)
    if not root.is_dir():
        raise DataError(f"scene directory {root} does not exist")

    def separator(truth, region):
        ys = beamform(truth.mixture, truth.geometry, region.center)
        est = separate(truth.mixture, truth.geometry, region.center, make_mask(truth, region))
        return ys, est

    cfg = dict(cfg, scenes=str(root))
    report = evaluate_scene_set(root, separator, cfg)
    if not report.records:
        raise DataError(f"no evaluable scenes under {root}")
    out = Path(args.out)
    _echo_config(out, "evaluate", cfg)
    report.write(out)
    print(report.table())
    return EXIT_OK


# ---------------------------------------------------------------- heatmap


def cmd_heatmap(args) -> int:
    if args.preset is None:
        args.preset = "fig2-heatmap"
    cfg = resolve_config(args, ["seed", "grid_step", "t60", "mask", "preset"])
    if cfg["mask"] not in ("oracle", "passthrough"):
        raise UsageError("heatmap supports --mask oracle or passthrough")
    if not cfg["grid_step"] > 0:
        raise UsageError("--grid-step must be positive")
    hc = HeatmapConfig(grid_step=float(cfg["grid_step"]), t60=float(cfg["t60"]), mask=cfg["mask"], seed=int(cfg["seed"]))
    out = Path(args.out)
    _echo_config(out, "heatmap", dict(cfg, protocol=hc.to_dict()))
    result = heatmap_protocol(hc, workers=_threads())
    paths = result.write(out)
    rows, cols = result.decay_db.shape
    print(f"wrote {rows}x{cols} heatmap to {paths['grid']}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regionsep", description="Region-based speech separation toolkit.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON file with default values for the flags")
        sp.add_argument("--out", required=out_required, help="output directory")

    s = sub.add_parser("simulate", help="synthesize labeled scenes")
    common(s)
    s.add_argument("--seed", type=int)
    s.add_argument("--count", type=int)
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--kind", choices=sorted(SCENE_KINDS) + ["mixed"])
    s.add_argument("--t60-range", dest="t60_range", nargs=2, type=float, metavar=("LO", "HI"))
    s.add_argument("--duration", type=float)
    s.add_argument("--regions", help="central angles in degrees, e.g. 75,105")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("features", help="write DAS and DRR feature files")
    common(f)
    f.add_argument("--scenes", required=True)
    f.add_argument("--das", choices=["all-pairs", "subset"])
    f.add_argument("--drr", choices=["cat", "ratio"])
    f.add_argument("--regions")
    f.set_defaults(func=cmd_features)

    e = sub.add_parser("separate", help="write per-region estimates")
    common(e)
    e.add_argument("--scenes", required=True)
    e.add_argument("--mask", help="oracle | passthrough | file:<path>")
    e.add_argument("--regions")
    e.set_defaults(func=cmd_separate)

    v = sub.add_parser("evaluate", help="SI-SDR / Decay report over a scene set")
    common(v)
    v.add_argument("--scenes", required=True)
    v.add_argument("--mask", help="oracle | passthrough | file:<path>")
    v.set_defaults(func=cmd_evaluate)

    h = sub.add_parser("heatmap", help="Decay heatmap over a position grid")
    common(h)
    h.add_argument("--seed", type=int)
    h.add_argument("--preset", choices=["fig2-heatmap"])
    h.add_argument("--grid-step", dest="grid_step", type=float)
    h.add_argument("--t60", type=float)
    h.add_argument("--mask", choices=["oracle", "passthrough"])
    h.set_defaults(func=cmd_heatmap)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"regionsep: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, PlacementError, RoomError, GeometryError, MaskError, FormatError, OSError, KeyError, ValueError) as exc:
        print(f"regionsep: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

"""SI-SDR, Decay and scene-set evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .scene import SceneTruth, load_scene
from .separation import is_target, reference_signal

log = logging.getLogger(__name__)

SDR_CAP_DB = 60.0
DECAY_EPS = 1e-12
CASES = ("no_target", "one_target", "two_target")


def si_sdr(reference: np.ndarray, estimate: np.ndarray, cap: float = SDR_CAP_DB) -> float:
    """Scale-invariant SDR in dB, clipped to ``[-cap, cap]``."""
    s = np.asarray(reference, dtype=float).ravel()
    x = np.asarray(estimate, dtype=float).ravel()
    if s.shape != x.shape:
        raise ValueError(f"length mismatch: {s.size} vs {x.size}")
    ss = float(np.dot(s, s))
    if ss <= 0.0:
        raise ValueError("reference has zero energy")
    proj = (np.dot(x, s) / ss) * s
    err = x - proj
    num, den = float(np.dot(proj, proj)), float(np.dot(err, err))
    if den == 0.0:
        return cap
    if num == 0.0:
        return -cap
    return float(np.clip(10.0 * math.log10(num / den), -cap, cap))


def decay(mixture_ref: np.ndarray, estimate: np.ndarray, eps: float = DECAY_EPS) -> float:
    """Energy of the mixture over energy of the estimate, in dB."""
    y = np.asarray(mixture_ref, dtype=float).ravel()
    x = np.asarray(estimate, dtype=float).ravel()
    if y.shape != x.shape:
        raise ValueError(f"length mismatch: {y.size} vs {x.size}")
    return 10.0 * math.log10(float(np.dot(y, y)) / (float(np.dot(x, x)) + eps))


@dataclass
class SceneRecord:
    scene_id: str
    case: str
    sdr_db: float | None = None
    decay_db: float | None = None
    mixture_sdr_db: float | None = None
    per_region: list[dict] = field(default_factory=list)
    pesq: float | None = None
    stoi: float | None = None

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "case": self.case,
            "sdr_db": self.sdr_db,
            "decay_db": self.decay_db,
            "mixture_sdr_db": self.mixture_sdr_db,
            "per_region": self.per_region,
            "pesq": self.pesq,
            "stoi": self.stoi,
        }


@dataclass
class EvalReport:
    records: list[SceneRecord]
    skipped: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def aggregates(self) -> dict:
        out = {}
        for case in CASES:
            rows = [r for r in self.records if r.case == case]
            key, vals = ("decay_db", [r.decay_db for r in rows]) if case == "no_target" else ("sdr_db", [r.sdr_db for r in rows])
            vals = [v for v in vals if v is not None]
            out[case] = {
                "count": len(rows),
                "metric": key,
                "mean": statistics.fmean(vals) if vals else None,
                "median": statistics.median(vals) if vals else None,
            }
        return out

    def to_dict(self) -> dict:
        return {
            "schema": "regionsep.eval_report/1",
            "config": self.config,
            "records": [r.to_dict() for r in self.records],
            "aggregates": self.aggregates(),
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene_id", "case", "sdr_db", "decay_db", "mixture_sdr_db"])
        for r in self.records:
            w.writerow([r.scene_id, r.case, _fmt(r.sdr_db), _fmt(r.decay_db), _fmt(r.mixture_sdr_db)])
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> tuple[Path, Path]:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        jp, cp = d / "report.json", d / "report.csv"
        jp.write_text(self.to_json(), encoding="utf-8")
        cp.write_text(self.to_csv(), encoding="utf-8")
        return jp, cp

    def table(self) -> str:
        lines = [f"{'case':<12}{'n':>5}  {'metric':<9}{'mean':>9}{'median':>9}"]
        for case, agg in self.aggregates().items():
            mean = "-" if agg["mean"] is None else f"{agg['mean']:.2f}"
            med = "-" if agg["median"] is None else f"{agg['median']:.2f}"
            lines.append(f"{case:<12}{agg['count']:>5}  {agg['metric']:<9}{mean:>9}{med:>9}")
        return "\n".join(lines)


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(round(v, 6))


# (truth, region) -> (mixture y_s, estimate)
Separator = Callable[[SceneTruth, object], tuple[np.ndarray, np.ndarray]]


def evaluate_truth(scene_id: str, truth: SceneTruth, separator: Separator, fold_mirror: bool | None = None) -> SceneRecord:
    """Route one scene to the applicable metric by counting targeted regions."""
    regions = truth.regions
    fold = truth.geometry.is_collinear() if fold_mirror is None else fold_mirror
    occupied = [r for r in regions if any(is_target(s, r, fold) for s in truth.sources)]
    case = CASES[min(len(occupied), 2)]
    per_region = []
    if not occupied:
        decays = []
        for k, region in enumerate(regions):
            ys, est = separator(truth, region)
            d = decay(ys, est)
            decays.append(d)
            per_region.append({"region": k, "decay_db": d})
        return SceneRecord(scene_id, case, decay_db=statistics.fmean(decays), per_region=per_region)
    sdrs, mix_sdrs = [], []
    for region in occupied:
        ys, est = separator(truth, region)
        ref = reference_signal(truth, region, fold_mirror=fold)
        sdr, mix = si_sdr(ref, est), si_sdr(ref, ys)
        sdrs.append(sdr)
        mix_sdrs.append(mix)
        per_region.append({"region": regions.index(region), "sdr_db": sdr, "mixture_sdr_db": mix})
    return SceneRecord(scene_id, case, sdr_db=statistics.fmean(sdrs), mixture_sdr_db=statistics.fmean(mix_sdrs), per_region=per_region)


def evaluate_scene_set(scene_dir: str | Path, separator: Separator, config: dict | None = None, out_dir: str | Path | None = None) -> EvalReport:
    """Evaluate every scene directory under ``scene_dir`` (sorted by name)."""
    root = Path(scene_dir)
    candidates = sorted(p for p in root.iterdir() if p.is_dir())
    records, skipped = [], []
    for d in candidates:
        try:
            truth = load_scene(d)
        except (OSError, KeyError, ValueError) as exc:
            log.warning("skipping %s: %s", d.name, exc)
            skipped.append({"scene_id": d.name, "reason": f"{type(exc).__name__}: {exc}"})
            continue
        records.append(evaluate_truth(d.name, truth, separator))
    report = EvalReport(records, skipped, dict(config or {}))
    if out_dir is not None:
        report.write(out_dir)
    return report

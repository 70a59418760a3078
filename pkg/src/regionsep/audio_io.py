"""WAV files and the float32 + JSON-sidecar feature format."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .dsp import FRAME_LEN, HOP, SAMPLE_RATE, MultichannelAudio

FEATURE_KINDS = {"fbank", "stft", "drr", "das", "mask"}


class FormatError(ValueError):
    pass


def read_wav(path: str | Path) -> MultichannelAudio:
    sr, data = wavfile.read(str(path))
    if sr != SAMPLE_RATE:
        raise FormatError(f"{path}: expected {SAMPLE_RATE} Hz, got {sr}")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        x = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    return MultichannelAudio(x, sr)


def write_wav(path: str | Path, audio: MultichannelAudio, pcm16: bool = False) -> None:
    if audio.sample_rate != SAMPLE_RATE:
        raise FormatError(f"refusing to write {audio.sample_rate} Hz audio")
    x = audio.samples
    if pcm16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    if data.shape[1] == 1:
        data = data[:, 0]
    wavfile.write(str(path), audio.sample_rate, data)


def write_feature(path: str | Path, values: np.ndarray, kind: str, **extra) -> Path:
    """Write ``<path>.f32`` (little-endian float32, C order) and ``<path>.json``.

    Returns the path of the binary file.
    """
    if kind not in FEATURE_KINDS:
        raise FormatError(f"unknown feature kind {kind!r}")
    base = Path(path)
    if base.suffix in (".f32", ".json"):
        base = base.with_suffix("")
    arr = np.ascontiguousarray(values, dtype="<f4")
    bin_path = base.with_suffix(".f32")
    bin_path.write_bytes(arr.tobytes(order="C"))
    sidecar = {"shape": list(arr.shape), "kind": kind, "frame_len": FRAME_LEN, "hop": HOP}
    sidecar.update(extra)
    base.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return bin_path


def read_feature(path: str | Path, kind: str | None = None) -> tuple[np.ndarray, dict]:
    base = Path(path)
    if base.suffix in (".f32", ".json"):
        base = base.with_suffix("")
    try:
        sidecar = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
        shape = tuple(int(s) for s in sidecar["shape"])
    except (OSError, KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{base}: missing or malformed sidecar") from exc
    if kind is not None and sidecar.get("kind") != kind:
        raise FormatError(f"{base}: expected kind {kind!r}, found {sidecar.get('kind')!r}")
    raw = np.frombuffer(base.with_suffix(".f32").read_bytes(), dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise FormatError(f"{base}: {raw.size} values do not match shape {shape}")
    return raw.reshape(shape).astype(np.float64), sidecar

"""Checkpoint directories.

Layout::

    point_cloud.ply   Gaussians in the 3DGS PLY layout
    config.toml       [checkpoint] format/version/sh_degree, [train] every TrainConfig field
    optimizer.bin     b"PGSOPT1\\n" then an uncompressed .npz of optimizer and loop state
    report.json       per-iteration loss arrays, Gaussian counts, events, final metrics

The directory is assembled under a temporary sibling and renamed into place,
so readers never observe a half-written checkpoint.
"""

from __future__ import annotations

import io
import json
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import CheckpointVersionError, FormatError
from .gaussians import GaussianModel
from .scene_io import load_gaussians_ply, save_gaussians_ply
from .trainer import TrainConfig, TrainReport

FORMAT_NAME = "mssplat-checkpoint"
FORMAT_VERSION = 1
OPTIMIZER_MAGIC = b"PGSOPT1\n"


@dataclass
class Checkpoint:
    gaussians: GaussianModel
    config: TrainConfig
    report: TrainReport
    state: dict[str, np.ndarray]  # optimizer moments and loop state; may be empty


def _toml_safe(d: dict) -> dict:
    # TOML has no null; absent keys fall back to the dataclass defaults on load
    out = {}
    for k, v in d.items():
        if v is None:
            continue
        out[k] = list(v) if isinstance(v, tuple) else v
    return out


def save_checkpoint(directory, gaussians: GaussianModel, config: TrainConfig, report: TrainReport,
                    state: dict[str, np.ndarray] | None = None) -> Path:
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{directory.name}.", dir=directory.parent))
    try:
        save_gaussians_ply(gaussians, tmp / "point_cloud.ply")
        doc = {
            "checkpoint": {"format": FORMAT_NAME, "version": FORMAT_VERSION,
                           "sh_degree": gaussians.sh_degree, "n_gaussians": len(gaussians)},
            "train": _toml_safe(config.to_dict()),
        }
        (tmp / "config.toml").write_text(tomli_w.dumps(doc), encoding="utf-8")
        buf = io.BytesIO()
        np.savez(buf, **(state or {}))
        (tmp / "optimizer.bin").write_bytes(OPTIMIZER_MAGIC + buf.getvalue())
        (tmp / "report.json").write_text(json.dumps(report.to_json(), indent=1), encoding="utf-8")
        if directory.exists():
            old = directory.with_name(f".{directory.name}.old")
            shutil.rmtree(old, ignore_errors=True)
            os.replace(directory, old)
            os.replace(tmp, directory)
            shutil.rmtree(old, ignore_errors=True)
        else:
            os.replace(tmp, directory)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return directory


def read_config(directory) -> tuple[dict, TrainConfig]:
    path = Path(directory) / "config.toml"
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    meta = doc.get("checkpoint", {})
    if meta.get("format") != FORMAT_NAME:
        raise FormatError(f"{path} is not a checkpoint config")
    if meta.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {meta.get('version')!r} is incompatible with this build (expects {FORMAT_VERSION})"
        )
    return meta, TrainConfig.from_dict(doc.get("train", {}))


def read_optimizer_state(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if not raw.startswith(OPTIMIZER_MAGIC):
        head = raw[: len(OPTIMIZER_MAGIC)]
        if head[:6] == OPTIMIZER_MAGIC[:6]:
            raise CheckpointVersionError(f"optimizer state has version tag {head!r}, expected {OPTIMIZER_MAGIC!r}")
        raise FormatError(f"{path} is not an optimizer state file")
    with np.load(io.BytesIO(raw[len(OPTIMIZER_MAGIC):]), allow_pickle=False) as z:
        return {k: z[k] for k in z.files}


def load_checkpoint(directory, dtype=np.float32) -> Checkpoint:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"no checkpoint at {directory}")
    meta, config = read_config(directory)
    gaussians = load_gaussians_ply(directory / "point_cloud.ply", meta.get("sh_degree"), dtype)
    state = read_optimizer_state(directory / "optimizer.bin")
    report_path = directory / "report.json"
    report = TrainReport.from_json(json.loads(report_path.read_text(encoding="utf-8"))) if report_path.exists() else TrainReport()
    return Checkpoint(gaussians, config, report, state)

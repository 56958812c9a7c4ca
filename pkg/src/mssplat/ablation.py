"""Four-way ablation: base loss alone, plus each regularizer, plus both."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

from .regularization import count_undersized
from .scene_io import SceneDataset
from .trainer import TrainConfig, evaluate, mean_metrics, train_scene

ROWS = {
    "baseline": ("baseline", dict(lambda_mss=0.0, lambda_size=0.0)),
    "mss": ("+L_mss", dict(lambda_size=0.0)),
    "size": ("+L_size", dict(lambda_mss=0.0)),
    "full": ("full", {}),
}
ROW_ORDER = ("baseline", "mss", "size", "full")


@dataclass
class AblationRow:
    key: str
    label: str
    psnr: float
    ssim: float
    E: float
    undersized: int
    n_gaussians: int
    config: TrainConfig
    train_psnr: float = float("nan")
    seconds: float = 0.0


def parse_rows(text: str | None) -> list[str]:
    if not text:
        return list(ROW_ORDER)
    keys = [k.strip().lower().lstrip("+").replace("l_", "") for k in text.split(",") if k.strip()]
    bad = [k for k in keys if k not in ROWS]
    if bad:
        raise ValueError(f"unknown ablation rows {bad}; choose from {', '.join(ROW_ORDER)}")
    return [k for k in ROW_ORDER if k in keys]


def row_config(base: TrainConfig, key: str) -> TrainConfig:
    """Full-model weights from `base`, with the row's terms switched off."""
    return replace(base, **ROWS[key][1])


def run_ablation(dataset: SceneDataset, base: TrainConfig, rows=ROW_ORDER, progress=None) -> list[AblationRow]:
    out = []
    for key in rows:
        cfg = row_config(base, key)
        start = time.perf_counter()
        gaussians, report, _ = train_scene(dataset, cfg)
        seconds = time.perf_counter() - start
        m = mean_metrics(evaluate(gaussians, dataset, None, cfg.pyramid_sigma))
        train_m = mean_metrics(evaluate(gaussians, dataset, dataset.train_cameras, cfg.pyramid_sigma))
        row = AblationRow(
            key, ROWS[key][0], m.get("psnr", float("nan")), m.get("ssim", float("nan")),
            m.get("E", float("nan")), count_undersized(gaussians.log_scale, report.tau_size),
            len(gaussians), cfg, train_m.get("psnr", float("nan")), seconds,
        )
        out.append(row)
        if progress is not None:
            progress(row)
    return out


def format_table(rows: list[AblationRow]) -> str:
    lines = [f"{'row':<10} {'PSNR':>8} {'SSIM':>7} {'E':>8} {'undersized':>10} {'N':>7} {'train PSNR':>10}"]
    for r in rows:
        lines.append(f"{r.label:<10} {r.psnr:8.3f} {r.ssim:7.4f} {r.E:8.5f} {r.undersized:10d} {r.n_gaussians:7d}"
                     f" {r.train_psnr:10.3f}")
    return "\n".join(lines)

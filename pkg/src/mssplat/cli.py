"""``mssplat`` command line: train, render, eval, synth, partition, ablate.

`--scene` takes either a dataset directory (cameras.txt + points.ply +
images) or one of the built-in synthetic scene names (synth_checker,
synth_field, synth_walls), which are regenerated deterministically.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import tomli_w

from . import __version__
from .ablation import ROW_ORDER, format_table, parse_rows, run_ablation
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import SplatError
from .pyramid import build_gt_pyramid, build_rendered_pyramid
from .rasterizer import render_at_level
from .scene_io import SceneDataset, load_dataset, save_dataset, save_image
from .synthetic import ALIASES, FAMILIES, SyntheticSpec, generate_synthetic_scene
from .trainer import TrainConfig, evaluate, mean_metrics, partition_scene, train_scene

log = logging.getLogger("mssplat")

LOG_EVERY = 250
E_NOTE = "E = mean L1(downsample2(blur(render@s)), render@s/2); reported in place of LPIPS (no pretrained network)"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def load_scene(name: str, seed: int = 0) -> SceneDataset:
    if name in ALIASES or name in FAMILIES:
        dataset, _ = generate_synthetic_scene(SyntheticSpec(family=name, seed=seed))
        return dataset
    root = Path(name)
    if not root.is_dir():
        raise UsageError(
            f"scene {name!r} is neither a directory nor a synthetic scene; "
            f"create one with `mssplat synth --family synth_checker --out DIR` or pass one of {sorted(ALIASES)}"
        )
    try:
        return load_dataset(root)
    except FileNotFoundError as exc:
        raise UsageError(f"{exc}; a dataset directory needs cameras.txt, points.ply and the images they list") from None


def echo_config(config: TrainConfig, command: str, extra: dict | None = None) -> None:
    doc = {"command": command, "version": __version__, **(extra or {}),
           "train": {k: (list(v) if isinstance(v, tuple) else v) for k, v in config.to_dict().items() if v is not None}}
    print("# resolved configuration")
    print(tomli_w.dumps(doc).rstrip())
    print("# end configuration", flush=True)


def _train_args(p: argparse.ArgumentParser, require_scene: bool = True) -> None:
    p.add_argument("--scene", required=require_scene, help="dataset directory or synth_checker|synth_field|synth_walls")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--iterations", type=int)
    p.add_argument("--lambda-dssim", type=float)
    p.add_argument("--lambda-mss", type=float)
    p.add_argument("--lambda-size", type=float)
    p.add_argument("--pyramid-levels", type=int)
    p.add_argument("--pyramid-sigma", type=float)
    p.add_argument("--tau-size", type=float)
    p.add_argument("--nyquist-factor", type=float)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"))
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true",
                   help="deterministic reductions (always on; kept for reproducibility scripts)")


def config_from_args(args) -> TrainConfig:
    keys = ("iterations", "lambda_dssim", "lambda_mss", "lambda_size", "pyramid_levels", "pyramid_sigma",
            "tau_size", "nyquist_factor", "seed")
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if getattr(args, "grid", None):
        overrides["grid"] = tuple(args.grid)
    overrides["deterministic"] = True
    return TrainConfig.from_profile(args.profile, **overrides)


def print_metrics(metrics: dict[str, dict[str, float]], title: str) -> None:
    print(f"{title}")
    print(f"{'camera':<12} {'PSNR':>8} {'SSIM':>8} {'E':>9}")
    for cid, m in metrics.items():
        print(f"{cid:<12} {m['psnr']:8.3f} {m['ssim']:8.5f} {m['E']:9.6f}")
    if metrics:
        mean = mean_metrics(metrics)
        print(f"{'mean':<12} {mean['psnr']:8.3f} {mean['ssim']:8.5f} {mean['E']:9.6f}")


def dump_pyramids(gaussians, dataset: SceneDataset, config: TrainConfig, directory: Path) -> None:
    cam = dataset.train_cameras[0]
    gt = build_gt_pyramid(dataset.image(cam), config.pyramid_levels, config.pyramid_sigma)
    for lvl, img in enumerate(gt.levels):
        save_image(img, directory / f"level_{lvl}.png")
    rendered = build_rendered_pyramid(gaussians, cam, config.pyramid_levels)
    for lvl, img in enumerate(rendered.levels):
        save_image(np.clip(img, 0, 1), directory / "rendered" / f"level_{lvl}.png")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    config = config_from_args(args)
    echo_config(config, "train", {"scene": args.scene, "out": str(args.out)})
    dataset = load_scene(args.scene)
    if not dataset.train_cameras:
        raise UsageError("the scene has no training cameras")

    def progress(trainer, b):
        if trainer.iteration % LOG_EVERY == 0 or trainer.iteration == trainer.config.iterations:
            print(f"iter {trainer.iteration:6d}  total {b.total:.5f}  base {b.base:.5f}  mss {b.mss:.5f}"
                  f"  size {b.size:.5f}  N {len(trainer.gaussians)}", flush=True)

    gaussians, report, state = train_scene(dataset, config, callback=progress)
    train_m = evaluate(gaussians, dataset, dataset.train_cameras, config.pyramid_sigma)
    test_m = evaluate(gaussians, dataset, None, config.pyramid_sigma)
    report.final_metrics = {"train": mean_metrics(train_m), "test": mean_metrics(test_m), "per_camera": test_m}
    out = save_checkpoint(args.out, gaussians, config, report, state)
    if args.dump_pyramid:
        dump_pyramids(gaussians, dataset, config, Path(args.dump_pyramid))
    for split, m in (("train", train_m), ("test", test_m)):
        mm = mean_metrics(m)
        if mm:
            print(f"{split}: PSNR {mm['psnr']:.3f} dB  SSIM {mm['ssim']:.4f}  E {mm['E']:.6f}")
    print(f"checkpoint written to {out}")
    return 0


def _checkpoint(path):
    if path is None or not Path(path).is_dir():
        raise UsageError(f"no checkpoint at {path!r}; produce one with `mssplat train --scene ... --out DIR`")
    return load_checkpoint(path)


def cmd_render(args) -> int:
    ckpt = _checkpoint(args.checkpoint)
    dataset = load_scene(args.scene)
    level = int(round(math.log2(args.scale)))
    cams = dataset.cameras if args.split == "all" else [c for c in dataset.cameras if c.split == args.split]
    if args.cameras:
        wanted = set(args.cameras.split(","))
        cams = [c for c in cams if c.id in wanted]
    if not cams:
        raise UsageError("no camera matches the selection")
    out = Path(args.out)
    for cam in cams:
        img = render_at_level(ckpt.gaussians, cam, level).image
        save_image(np.clip(img, 0, 1), out / f"{cam.id}.png")
    print(f"rendered {len(cams)} views at 1/{args.scale} scale to {out}")
    return 0


def cmd_eval(args) -> int:
    ckpt = _checkpoint(args.checkpoint)
    dataset = load_scene(args.scene)
    if not dataset.test_cameras:
        raise UsageError("the scene has no test cameras to evaluate")
    metrics = evaluate(ckpt.gaussians, dataset, None, ckpt.config.pyramid_sigma)
    print(f"# {E_NOTE}")
    print_metrics(metrics, "test split")
    if args.json:
        doc = {"per_camera": metrics, "mean": mean_metrics(metrics), "note": E_NOTE}
        Path(args.json).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(family=args.family, n_cameras=args.n_cameras, width=args.width, height=args.height,
                         focal=args.focal if args.focal else float(args.width), supersample=args.supersample,
                         seed=args.seed)
    spec.resolved_family()
    dataset, _ = generate_synthetic_scene(spec)
    root = save_dataset(dataset, args.out)
    print(f"wrote {len(dataset.cameras)} cameras ({len(dataset.train_cameras)} train) and "
          f"{len(dataset.points)} points to {root}")
    return 0


def cmd_partition(args) -> int:
    dataset = load_scene(args.scene)
    blocks = partition_scene(dataset, tuple(args.grid), args.margin)
    print(f"{'block':>5} {'cell':>7} {'points':>7} {'cameras':>7}  bbox")
    for b in blocks:
        box = ", ".join(f"[{lo:.3f}, {hi:.3f}]" for lo, hi in zip(b.bbox_min, b.bbox_max))
        print(f"{b.id:5d} {str(b.grid_index):>7} {len(b.point_indices):7d} {len(b.camera_ids):7d}  {box}")
    return 0


def cmd_ablate(args) -> int:
    config = config_from_args(args)
    try:
        rows = parse_rows(args.rows)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    echo_config(config, "ablate", {"scene": args.scene, "rows": rows})
    dataset = load_scene(args.scene)
    results = run_ablation(dataset, config, rows,
                           progress=lambda r: print(f"finished {r.label}: PSNR {r.psnr:.3f}", flush=True))
    print(f"# {E_NOTE}")
    print(format_table(results))
    if args.json:
        doc = [{"row": r.label, "psnr": r.psnr, "ssim": r.ssim, "E": r.E, "undersized": r.undersized,
                "n_gaussians": r.n_gaussians, "train_psnr": r.train_psnr} for r in results]
        Path(args.json).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mssplat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a scene and write a checkpoint")
    _train_args(p)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--dump-pyramid", metavar="DIR", help="write level_<l>.png for the first training view")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render cameras from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=int, choices=(1, 2, 4), default=1)
    p.add_argument("--split", choices=("train", "test", "all"), default="all")
    p.add_argument("--cameras", help="comma-separated camera ids")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR / SSIM / cross-scale error on the test split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--json", help="also write metrics to this JSON file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset directory")
    p.add_argument("--family", default="synth_checker", choices=sorted(set(ALIASES) | set(FAMILIES)))
    p.add_argument("--out", required=True)
    p.add_argument("--n-cameras", type=int, default=12)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--focal", type=float)
    p.add_argument("--supersample", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="show the block partition of a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"), default=(1, 1))
    p.add_argument("--margin", type=float, default=0.2)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("ablate", help="baseline / +L_mss / +L_size / full comparison")
    _train_args(p)
    p.add_argument("--rows", help=f"comma-separated subset of {','.join(ROW_ORDER)}")
    p.add_argument("--json")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except SplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

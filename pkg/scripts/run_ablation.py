"""Four-row ablation (baseline, +L_mss, +L_size, full) on a synthetic scene.

    python scripts/run_ablation.py --iterations 5000 --json ablation.json
"""

import argparse
import json
from dataclasses import asdict

from mssplat.ablation import format_table, run_ablation
from mssplat.cli import load_scene
from mssplat.trainer import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="synth_checker")
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json")
    args = ap.parse_args()

    dataset = load_scene(args.scene)
    cfg = TrainConfig.from_profile("desk", iterations=args.iterations, seed=args.seed)
    rows = run_ablation(dataset, cfg, progress=lambda r: print(f"{r.label}: {r.seconds:.0f}s", flush=True))
    print(format_table(rows))
    if args.json:
        doc = [{k: v for k, v in asdict(r).items() if k != "config"} for r in rows]
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2)


if __name__ == "__main__":
    main()

"""Train one model and print train/held-out PSNR and the cross-scale error E as it goes.

    python scripts/convergence.py --iterations 5000 --every 500
    python scripts/convergence.py --lambda-mss 0 --lambda-size 0   # base loss only
"""

import argparse
import time

from mssplat.cli import load_scene
from mssplat.regularization import count_undersized
from mssplat.trainer import TrainConfig, Trainer, evaluate, init_gaussians, mean_metrics, resolve_bound


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scene", default="synth_checker")
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--every", type=int, default=500)
    ap.add_argument("--lambda-mss", type=float, default=0.1)
    ap.add_argument("--lambda-size", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    dataset = load_scene(args.scene)
    cfg = TrainConfig.from_profile("desk", iterations=args.iterations, lambda_mss=args.lambda_mss,
                                   lambda_size=args.lambda_size, seed=args.seed)
    bound = resolve_bound(dataset, cfg)
    print(f"T_min {bound.T_min:.5f}  tau_size {bound.tau_size:.5f}")
    cams = dataset.train_cameras
    trainer = Trainer(init_gaussians(dataset.points, bound, cfg.sh_degree, cfg.np_dtype), cams,
                      {c.id: dataset.image(c) for c in cams}, cfg, bound)
    start = time.perf_counter()

    def report(tr, _):
        if tr.iteration % args.every and tr.iteration != cfg.iterations:
            return
        train = mean_metrics(evaluate(tr.gaussians, dataset, cams, cfg.pyramid_sigma))
        held = mean_metrics(evaluate(tr.gaussians, dataset, None, cfg.pyramid_sigma))
        print(f"{tr.iteration:6d} {time.perf_counter() - start:7.0f}s  N={len(tr.gaussians):6d}  "
              f"train {train['psnr']:.2f} dB  held-out {held['psnr']:.2f} dB  E {held['E']:.4f}  "
              f"undersized {count_undersized(tr.gaussians.log_scale, bound.tau_size)}", flush=True)

    trainer.run(callback=report)


if __name__ == "__main__":
    main()

"""Command-line entry point: ``condfield {run,sweep,ablate-concat,render,eval}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..autodiff import load_checkpoint
from ..data import psnr, save_image
from .spec import ExperimentSpec
from .sweep import expand_sweep, run_concat_ablation, run_sweep
from .tasks import ImageTask, Task, build_task
from .train import NonFiniteLossError, run_experiment


def load_run(run_dir: str | Path) -> Task:
    """Rebuild a finished run's task and load its checkpoint."""
    run_dir = Path(run_dir)
    spec = ExperimentSpec.load(run_dir / "spec.json")
    task = build_task(spec)
    load_checkpoint(run_dir / "checkpoint.bin", task.stores)
    return task


def _cmd_run(args) -> int:
    spec = ExperimentSpec.load(args.config)
    updates = {k: v for k, v in (("steps", args.steps), ("out_dir", args.out), ("seed", args.seed))
               if v is not None}
    if updates:
        spec = spec.with_updates(**updates)
    try:
        log = run_experiment(spec, resume=args.resume, verbose=not args.quiet)
    except NonFiniteLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(json.dumps({"out_dir": spec.out_dir, "final_psnr": log.final_psnr,
                      "param_count": log.rows[-1].param_count}))
    return 0


def _cmd_sweep(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    base = ExperimentSpec.from_dict(cfg["base"])
    out = args.out or cfg.get("out_dir", "runs/sweep")
    cells = expand_sweep(base, cfg["families"], cfg["latent_dims"], cfg.get("seeds", [0]), out,
                         cfg.get("decoders"))
    results = run_sweep(cells, out, workers=args.workers or cfg.get("workers", 1))
    for r in results:
        print(f"{r.label:32s} params={r.param_count:>9d} psnr={r.final_psnr:.3f} {r.status}")
    print(f"tables written to {out}")
    return 0 if all(r.status == "ok" for r in results) else 1


def _cmd_ablate(args) -> int:
    base = ExperimentSpec.load(args.config)
    out = args.out or str(Path(base.out_dir).parent / "ablation")
    rows = run_concat_ablation(base, out, seeds=args.seeds, workers=args.workers)
    for r in rows:
        print(f"{r['variant']:30s} {r['mean_psnr']:.3f}")
    return 0


def _cmd_render(args) -> int:
    task = load_run(args.run_dir)
    if isinstance(task, ImageTask):
        src = task.src.test
        if task.spec.task == "autoencode":
            pred = task.reconstruct(images=src[args.index:args.index + 1])[0]
        else:
            pred = task.reconstruct(ids=[args.index])[0]
        target = src[args.index]
    else:
        pred = task.render_view(args.instance, args.view)
        target = task.scenes[args.instance].images[args.view]
    save_image(args.out, np.clip(pred, 0, 1))
    print(json.dumps({"image": str(args.out), "psnr": psnr(np.clip(pred, 0, 1), target)}))
    return 0


def _cmd_eval(args) -> int:
    task = load_run(args.run_dir)
    score, _ = task.evaluate()
    print(json.dumps({"run_dir": str(args.run_dir), "test_psnr": None if math.isinf(score) else score,
                      "param_count": task.param_count}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condfield", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one experiment from a JSON spec")
    p.add_argument("config")
    p.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="override out_dir")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="family x latent-size sweep from a JSON sweep file")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("ablate-concat", help="five-variant concatenation ablation")
    p.add_argument("config")
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("render", help="render an image or view from a finished run")
    p.add_argument("run_dir")
    p.add_argument("--out", required=True, help="output .png or .ppm")
    p.add_argument("--index", type=int, default=0, help="test image (2D tasks)")
    p.add_argument("--instance", type=int, default=0, help="scene (3D tasks)")
    p.add_argument("--view", type=int, default=0, help="camera index (3D tasks)")
    p.set_defaults(fn=_cmd_render)

    p = sub.add_parser("eval", help="held-out PSNR of a finished run")
    p.add_argument("run_dir")
    p.set_defaults(fn=_cmd_eval)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())

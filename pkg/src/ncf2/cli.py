"""Command-line surface and pipeline orchestration.

Stages communicate only through files: datasets, checkpoints, and report
directories.  Every stage echoes its fully-resolved configuration and seed to
its output directory.  Exit codes: 0 success, 2 usage or config-schema error,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .config import RunConfig, load_config, num_workers, write_resolved
from .errors import ConfigError

USAGE_ERROR = 2
RUNTIME_ERROR = 1


def _stage_seed(cfg_seed: int, section_seed: int) -> int:
    return cfg_seed * 1_000_003 + section_seed


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_gen_data(args) -> int:
    from .datagen import generate_dataset

    cfg = _load(args)
    seed = _stage_seed(cfg.seed, 0)
    out = Path(args.out)
    generate_dataset(cfg.data, seed, out, workers=num_workers())
    write_resolved(cfg, out, {"stage": "gen-data", "seed": cfg.seed, "effective_seed": seed})
    print(f"dataset written to {out} ({cfg.data.episodes} episodes)")
    return 0


def cmd_train_vae(args) -> int:
    from .models.ncf import train_vae

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vae_cfg = cfg.vae
    vae_cfg.seed = _stage_seed(cfg.seed, vae_cfg.seed)
    res = train_vae(args.data, vae_cfg, out / "vae.ckpt")
    write_resolved(cfg, out, {"stage": "train-vae", "seed": cfg.seed,
                              "effective_seed": vae_cfg.seed})
    print(f"vae checkpoint: {res.checkpoint_path} (val mse {res.final_metric:.5f})")
    return 0


def cmd_train_shape(args) -> int:
    from .models.ncf import train_shape_autoencoder
    from .scenes import object_from_library

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    shape_cfg = cfg.shape_ae
    shape_cfg.seed = _stage_seed(cfg.seed, shape_cfg.seed)
    objects = [
        object_from_library(cat, idx)
        for cat in cfg.data.categories
        for idx in cfg.data.shape_indices
    ]
    res = train_shape_autoencoder(objects, shape_cfg, out / "shape.ckpt")
    write_resolved(cfg, out, {"stage": "train-shape", "seed": cfg.seed,
                              "effective_seed": shape_cfg.seed})
    print(f"shape checkpoint: {res.checkpoint_path} (chamfer {res.final_metric:.6f})")
    return 0


def cmd_train_ncf(args) -> int:
    from .models.ncf import train_ncf

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ncf_cfg = cfg.ncf
    ncf_cfg.variant = args.variant
    ncf_cfg.seed = _stage_seed(cfg.seed, ncf_cfg.seed)
    path = out / f"ncf_{args.variant}.ckpt"
    res = train_ncf(args.data, ncf_cfg, args.vae, args.shape, path)
    write_resolved(cfg, out, {"stage": "train-ncf", "seed": cfg.seed,
                              "effective_seed": ncf_cfg.seed, "variant": args.variant})
    print(f"ncf checkpoint: {res.checkpoint_path} (val mse {res.final_metric:.5f})")
    return 0


def cmd_eval_ncf(args) -> int:
    from .evalsuite import evaluate_model, render_report
    from .models.ncf import NcfEstimator

    cfg = _load(args)
    out = Path(args.out)
    est = NcfEstimator.load(args.vae, args.shape, args.ncf)
    cfg.eval.seed = _stage_seed(cfg.seed, cfg.eval.seed)
    report = evaluate_model(est, args.data, cfg.eval, model_name=Path(args.ncf).stem)
    render_report(report, out)
    write_resolved(cfg, out, {"stage": "eval-ncf", "seed": cfg.seed})
    print(f"eval: mean mse {report.mean_mse:.5f}, transition f1 {report.f1:.3f}, "
          f"patch iou {report.mean_patch_iou:.3f}")
    return 0


def cmd_sweep(args) -> int:
    from .evalsuite import evaluate_model, render_report, robustness_sweep
    from .models.ncf import NcfEstimator

    cfg = _load(args)
    out = Path(args.out)
    cfg.eval.seed = _stage_seed(cfg.seed, cfg.eval.seed)
    models = {}
    for spec in args.ncf:
        est = NcfEstimator.load(args.vae, args.shape, spec)
        models[Path(spec).stem] = est
    rows = robustness_sweep(models, args.data, cfg.eval)
    first = next(iter(models))
    report = evaluate_model(models[first], args.data, cfg.eval, model_name=first)
    report.sweep = rows
    render_report(report, out)
    write_resolved(cfg, out, {"stage": "sweep", "seed": cfg.seed})
    print(f"sweep: {len(rows)} rows -> {out / 'metrics.csv'}")
    return 0


def cmd_train_policy(args) -> int:
    from .policy.ppo import train_policy

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pol = cfg.policy
    pol.task = {"mug": "mug_in_cupholder", "bowl": "bowl_in_dishrack"}[args.task]
    pol.observation = args.obs
    pol.seed = _stage_seed(cfg.seed, pol.seed)
    result = train_policy(pol, out, vae_path=args.vae, shape_path=args.shape, ncf_path=args.ncf)
    write_resolved(cfg, out, {"stage": "train-policy", "seed": cfg.seed,
                              "task": pol.task, "observation": pol.observation})
    print(f"policy checkpoint: {result.checkpoint_path} "
          f"(final success {result.final_success:.2f})")
    return 0


def cmd_eval_policy(args) -> int:
    from .policy.evaluate import evaluate_policy_file

    cfg = _load(args)
    out = Path(args.out)
    cfg.policy.seed = _stage_seed(cfg.seed, cfg.policy.seed)
    metrics = evaluate_policy_file(
        args.checkpoint, cfg.policy, out,
        vae_path=args.vae, shape_path=args.shape, ncf_path=args.ncf,
    )
    write_resolved(cfg, out, {"stage": "eval-policy", "seed": cfg.seed})
    print(
        f"policy eval: success {metrics['success_rate']:.2f}, "
        f"steps-to-success {metrics['steps_to_success']:.1f}, "
        f"episode length {metrics['episode_length']:.1f}"
    )
    return 0


def cmd_report(args) -> int:
    import csv

    cfg = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    header = None
    for src in args.inputs:
        path = Path(src) / "metrics.csv" if Path(src).is_dir() else Path(src)
        if not path.exists():
            raise FileNotFoundError(f"no metrics.csv under {src}")
        with open(path) as f:
            r = csv.reader(f)
            h = next(r)
            header = header or h
            rows.extend(list(r))
    with open(out / "metrics.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)
    write_resolved(cfg, out, {"stage": "report", "seed": cfg.seed})
    print(f"combined {len(rows)} rows -> {out / 'metrics.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ncf2",
        description="Synthetic extrinsic-contact estimation and insertion-policy pipeline",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out", required=True, help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen-data", parents=[common]).set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train-vae", parents=[common])
    p.add_argument("--data", required=True)
    p.set_defaults(fn=cmd_train_vae)

    p = sub.add_parser("train-shape", parents=[common])
    p.set_defaults(fn=cmd_train_shape)

    p = sub.add_parser("train-ncf", parents=[common])
    p.add_argument("--variant", required=True, choices=["recurrent", "mlp", "transformer"])
    p.add_argument("--data", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--shape", required=True)
    p.set_defaults(fn=cmd_train_ncf)

    p = sub.add_parser("eval-ncf", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--shape", required=True)
    p.add_argument("--ncf", required=True)
    p.set_defaults(fn=cmd_eval_ncf)

    p = sub.add_parser("sweep", parents=[common])
    p.add_argument("--data", required=True)
    p.add_argument("--vae", required=True)
    p.add_argument("--shape", required=True)
    p.add_argument("--ncf", required=True, nargs="+")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("train-policy", parents=[common])
    p.add_argument("--task", required=True, choices=["mug", "bowl"])
    p.add_argument("--obs", required=True, choices=["prop", "tac", "ncf", "gtc"])
    p.add_argument("--vae")
    p.add_argument("--shape")
    p.add_argument("--ncf")
    p.set_defaults(fn=cmd_train_policy)

    p = sub.add_parser("eval-policy", parents=[common])
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vae")
    p.add_argument("--shape")
    p.add_argument("--ncf")
    p.set_defaults(fn=cmd_eval_policy)

    p = sub.add_parser("report", parents=[common])
    p.add_argument("--inputs", nargs="+", required=True)
    p.set_defaults(fn=cmd_report)
    return parser


def run_command(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else 0
    try:
        if not Path(args.config).exists():
            print(f"error: config file not found: {args.config}\n", file=sys.stderr)
            parser.print_usage(sys.stderr)
            return USAGE_ERROR
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}\n", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return RUNTIME_ERROR


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()

"""Command-line front end.

Subcommands: ``train``, ``eval``, ``coverage``, ``dump`` and ``baseline``.
Every failure exits nonzero after printing a single machine-parsable
JSON error line to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, config_to_dict, load_run_config
from .evaluation import (
    apply_ood_preset,
    baseline_policy,
    checkpoint_policy,
    coverage_csv,
    coverage_fraction,
    dump_trajectory,
    run_coverage,
    run_eval,
    run_eval_checkpoint,
)
from .policy import AttentionPolicy, checkpoint_meta, load_checkpoint, save_checkpoint
from .training import Trainer, training_log_csv
from .wiring import make_crowd_env_fns


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ValueError(f"seeds must be integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="socnav", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a constrained policy")
    p_train.add_argument("--config", required=True, help="run configuration JSON")
    p_train.add_argument("--seed", type=int, required=True)
    p_train.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    p_eval.add_argument("--ckpt", required=True)
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--episodes", type=int, default=200)
    p_eval.add_argument("--seeds", default="0", help="comma-separated seed list")
    p_eval.add_argument("--ood", default="none", choices=["none", "rushing", "sf"])
    p_eval.add_argument("--out", required=True, help="report CSV path")

    p_cov = sub.add_parser("coverage", help="error-coverage report")
    p_cov.add_argument("--config", required=True)
    p_cov.add_argument("--episodes", type=int, default=5)
    p_cov.add_argument("--seed", type=int, default=0)
    p_cov.add_argument("--robot", default="orca", choices=["orca", "sf"])
    p_cov.add_argument("--out", required=True, help="coverage CSV path")

    p_dump = sub.add_parser("dump", help="dump one episode as JSON lines")
    p_dump.add_argument("--ckpt", required=True)
    p_dump.add_argument("--config", required=True)
    p_dump.add_argument("--seed", type=int, required=True)
    p_dump.add_argument("--ood", default="none", choices=["none", "rushing", "sf"])
    p_dump.add_argument("--out", required=True, help="JSONL path")

    p_base = sub.add_parser("baseline", help="evaluate a rule-based robot")
    p_base.add_argument("--policy", required=True, choices=["orca", "sf"])
    p_base.add_argument("--config", required=True)
    p_base.add_argument("--episodes", type=int, default=200)
    p_base.add_argument("--seeds", default="0")
    p_base.add_argument("--ood", default="none", choices=["none", "rushing", "sf"])
    p_base.add_argument("--out", required=True)
    return parser


def cmd_train(args: argparse.Namespace) -> int:
    cfg: RunConfig = load_run_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    model = AttentionPolicy(cfg.net, cfg.world.prediction_steps, cfg.world.robot_vmax)
    params = model.init_params(np.random.SeedSequence(args.seed).spawn(1)[0])
    env_fns = make_crowd_env_fns(cfg.world, cfg.net, args.seed, cfg.train.n_parallel_envs)
    trainer = Trainer(env_fns, model, params, cfg.train, seed=args.seed)

    log_path = out_dir / "train_log.csv"
    log = trainer.train()
    log_path.write_text(training_log_csv(log), encoding="utf-8")

    meta = checkpoint_meta(
        cfg.net, cfg.world.prediction_steps, cfg.world.robot_vmax,
        config_to_dict(cfg.world), args.seed,
    )
    ckpt_path = out_dir / "checkpoint.bin"
    save_checkpoint(ckpt_path, trainer.params, meta)
    print(f"wrote {ckpt_path} and {log_path} after {trainer.env_steps} env steps")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    world = apply_ood_preset(cfg.world, args.ood)
    report = run_eval_checkpoint(args.ckpt, world, args.episodes, _parse_seeds(args.seeds))
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    print(f"SR={report.sr:.4f} CR={report.cr:.4f} TR={report.tr:.4f} ITR={report.itr:.4f}")
    return 0


def cmd_coverage(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    rows = run_coverage(cfg.world, args.episodes, args.seed, robot=args.robot)
    Path(args.out).write_text(coverage_csv(rows), encoding="utf-8")
    print(f"coverage={coverage_fraction(rows):.4f} over {len(rows)} comparisons")
    return 0


def cmd_dump(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    world = apply_ood_preset(cfg.world, args.ood)
    _, act = checkpoint_policy(args.ckpt, world)
    _, meta = load_checkpoint(args.ckpt)
    metrics = dump_trajectory(
        world, act, args.seed, args.out,
        header_extra={"checkpoint_config_hash": meta.get("config_hash")},
    )
    print(f"wrote {args.out}: outcome={metrics.outcome.value} steps={metrics.total_steps}")
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    world = apply_ood_preset(cfg.world, args.ood)
    report = run_eval(
        world,
        lambda w: baseline_policy(w, args.policy),
        args.episodes,
        _parse_seeds(args.seeds),
    )
    Path(args.out).write_text(report.to_csv(), encoding="utf-8")
    print(f"SR={report.sr:.4f} CR={report.cr:.4f} TR={report.tr:.4f} ITR={report.itr:.4f}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "coverage": cmd_coverage,
    "dump": cmd_dump,
    "baseline": cmd_baseline,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # surface a single parsable line, exit nonzero
        print(json.dumps({"error": f"{type(exc).__name__}: {exc}"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
Command-line experiment runner for pseudo-convolutional policy gradient training.
"""

import argparse
import json
import logging
import os
import statistics
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from .checkpoint import load_model
from .config import ExperimentConfig, dump_config, load_config
from .errors import ConfigError, DataError, NumericalError, PcpgError
from .gradcheck import run_all
from .probe import run_probe
from .sweep import check_ordering, run_sweep
from .tasks import gen_words, generate, load_dataset, save_dataset, split_dataset
from .trainer import BEST_CHECKPOINT, evaluate, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
SPLITS = ("train", "val", "test")


def print_result(result: Dict[str, Any]) -> None:
    """Print result in a formatted way."""
    if result.get("status") == "success":
        print("✅ Success")
        if "result" in result:
            print(json.dumps(result["result"], indent=2, default=str))
        elif "message" in result:
            print(result["message"])
    else:
        print("❌ Error")
        print(result.get("message", "Unknown error"))


def _success(payload: Any) -> Dict[str, Any]:
    return {"status": "success", "result": payload}


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with ``--seed`` applied to the root and trainer seeds."""
    if getattr(args, "config", None):
        config = load_config(args.config)
    else:
        config = ExperimentConfig(schema_version=1)
    seed = getattr(args, "seed", None)
    if seed is not None:
        config = config.model_copy(
            update={"seed": seed, "train": config.train.model_copy(update={"seed": seed})}
        )
    else:
        config = config.model_copy(
            update={"train": config.train.model_copy(update={"seed": config.seed})}
        )
    return config


# -- subcommands ------------------------------------------------------------


def cmd_gen_data(args: argparse.Namespace) -> Dict[str, Any]:
    config = _experiment(args)
    data = config.data
    if args.out:
        data = data.model_copy(update={"dir": Path(args.out)})
    if args.task:
        data = data.model_copy(update={"task": args.task})
    splits = ("all",) if data.task == "words" else SPLITS
    paths = [data.path(split) for split in splits]
    existing = [str(p) for p in paths if p.exists()]
    if existing and not args.force:
        raise ConfigError(f"refusing to overwrite {', '.join(existing)} (use --force)")

    options = {"feature_dim": data.feature_dim, "noise": data.noise, "max_repeat": data.max_repeat}
    if data.task == "words":
        dataset = gen_words(data.n_classes, data.samples_per_class, config.seed, **options)
        save_dataset(dataset, paths[0])
        return _success({"task": "words", "files": [str(paths[0])], "samples": len(dataset)})

    total = data.n_train + data.n_val + data.n_test
    pool = generate(data.task, total, config.seed, (data.len_min, data.len_max), **options)
    fractions = [data.n_train / total, data.n_val / total, data.n_test / total]
    parts = split_dataset(pool, fractions, config.seed)
    for part, path in zip(parts, paths):
        save_dataset(part, path)
    return _success(
        {
            "task": data.task,
            "files": [str(p) for p in paths],
            "samples": {split: len(part) for split, part in zip(SPLITS, parts)},
        }
    )


def cmd_train(args: argparse.Namespace) -> Dict[str, Any]:
    config = _experiment(args)
    out_dir = Path(args.out) if args.out else config.out_dir
    train_set = load_dataset(config.data.path("train"))
    val_set = load_dataset(config.data.path("val"))
    if train_set.feature_dim != config.model.feature_dim:
        raise ConfigError(
            f"model.feature_dim={config.model.feature_dim} but the dataset has "
            f"{train_set.feature_dim}-wide frames"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.yaml").write_text(dump_config(config), encoding="utf-8")
    rows = train(config.train, config.model, train_set, val_set, out_dir, resume=args.resume)
    evaluated = [row for row in rows if row.val_cer is not None]
    return _success(
        {
            "out_dir": str(out_dir),
            "iterations": rows[-1].iter if rows else 0,
            "final_val_cer": evaluated[-1].val_cer if evaluated else None,
            "best_val_cer": min(r.val_cer for r in evaluated) if evaluated else None,
        }
    )


def _cer_distribution(values: List[float]) -> Dict[str, float]:
    if not values:
        return {}
    ordered = sorted(values)
    return {
        "min": ordered[0],
        "median": statistics.median(ordered),
        "max": ordered[-1],
        "exact": sum(1 for v in ordered if v == 0.0) / len(ordered),
    }


def cmd_eval(args: argparse.Namespace) -> Dict[str, Any]:
    model, _, metadata = load_model(args.checkpoint)
    dataset = load_dataset(args.dataset)
    report = evaluate(
        model, dataset, args.max_len, beam=args.beam, limit=args.limit, length_penalty=args.length_penalty
    )
    payload = report.summary()
    payload["checkpoint_iteration"] = metadata.get("iteration")
    payload["greedy_cer_distribution"] = _cer_distribution(report.greedy_cer)
    if args.beam:
        payload["beam_cer_distribution"] = _cer_distribution(report.beam_cer)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        detail = dict(payload, greedy_cer=report.greedy_cer, beam_cer=report.beam_cer)
        out.write_text(json.dumps(detail, indent=2), encoding="utf-8")
    return _success(payload)


def cmd_sweep(args: argparse.Namespace) -> Dict[str, Any]:
    config = _experiment(args)
    out_dir = Path(args.out) if args.out else config.out_dir
    rows = run_sweep(config, out_dir, workers=args.workers)
    violations = check_ordering(rows)
    if violations:
        return {
            "status": "error",
            "message": f"ablation ordering not met (table in {out_dir / 'sweep.csv'}): "
            + "; ".join(violations),
            "exit_code": EXIT_NUMERICAL,
        }
    return _success({"sweep_csv": str(out_dir / "sweep.csv"), "rows": rows})


def cmd_grad_check(args: argparse.Namespace) -> Dict[str, Any]:
    seed = args.seed if args.seed is not None else 0
    results = run_all(seed)
    failed = [r.name for r in results if not r.passed]
    payload = {r.name: f"{r.max_error:.3e} < {r.tolerance:.0e}" for r in results}
    if failed:
        return {
            "status": "error",
            "message": f"gradient check failed for {', '.join(failed)}",
            "exit_code": EXIT_NUMERICAL,
        }
    return _success(payload)


def cmd_probe(args: argparse.Namespace) -> Dict[str, Any]:
    config = _experiment(args)
    checkpoint = args.checkpoint or config.probe.checkpoint
    if checkpoint is None:
        checkpoint = config.out_dir / BEST_CHECKPOINT
    model, _, _ = load_model(checkpoint)
    if args.dataset:
        dataset = load_dataset(args.dataset)
    else:
        data = config.data
        dataset = gen_words(
            data.n_classes,
            data.samples_per_class,
            config.seed,
            feature_dim=data.feature_dim,
            noise=data.noise,
            max_repeat=data.max_repeat,
        )
    report = run_probe(model, dataset, config.probe)
    return _success(report.summary())


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "grad-check": cmd_grad_check,
    "probe": cmd_probe,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(description="PCPG sequence-to-sequence experiments")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    gen = subparsers.add_parser("gen-data", help="Generate synthetic dataset files")
    gen.add_argument("--config", help="YAML experiment config")
    gen.add_argument("--seed", type=int, help="Root seed")
    gen.add_argument("--out", help="Output directory (overrides data.dir)")
    gen.add_argument("--task", choices=["copy", "reverse", "sentences", "words"], help="Task")
    gen.add_argument("--force", action="store_true", help="Overwrite existing files")

    tr = subparsers.add_parser("train", help="Train a model from a config")
    tr.add_argument("--config", required=True, help="YAML experiment config")
    tr.add_argument("--seed", type=int, help="Root seed")
    tr.add_argument("--out", help="Run directory (overrides out_dir)")
    tr.add_argument("--resume", action="store_true", help="Continue from last.ckpt")

    ev = subparsers.add_parser("eval", help="Report CER/WER of a checkpoint")
    ev.add_argument("--checkpoint", required=True, help="Checkpoint file")
    ev.add_argument("--dataset", required=True, help="Dataset file")
    ev.add_argument("--beam", type=int, default=0, help="Beam width (0 = greedy only)")
    ev.add_argument("--max-len", type=int, default=24, help="Decode length cap")
    ev.add_argument(
        "--length-penalty", type=float, default=1.0, help="Beam score divisor exponent on length"
    )
    ev.add_argument("--limit", type=int, help="Evaluate only the first N samples")
    ev.add_argument("--out", help="Write the per-sample report as JSON")

    sw = subparsers.add_parser("sweep", help="Run a kernel/lambda/seed grid")
    sw.add_argument("--config", required=True, help="YAML experiment config")
    sw.add_argument("--seed", type=int, help="Root seed")
    sw.add_argument("--out", help="Sweep directory (overrides out_dir)")
    sw.add_argument("--workers", type=int, help="Parallel worker processes")

    gc = subparsers.add_parser("grad-check", help="Finite-difference gradient checks")
    gc.add_argument("--seed", type=int, help="Root seed")

    pr = subparsers.add_parser("probe", help="Classifier probe on encoder features")
    pr.add_argument("--config", help="YAML experiment config")
    pr.add_argument("--seed", type=int, help="Root seed")
    pr.add_argument("--checkpoint", help="Pretrained checkpoint (overrides probe.checkpoint)")
    pr.add_argument("--dataset", help="Labeled words dataset file")
    return parser


def _configure_logging(verbose: bool) -> None:
    debug = verbose or os.getenv("PCPG_DEBUG") == "1"
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return EXIT_USAGE
    _configure_logging(args.verbose)

    try:
        result = COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\nOperation cancelled.")
        return EXIT_USAGE
    except ConfigError as e:
        result = {"status": "error", "message": str(e), "exit_code": EXIT_USAGE}
    except DataError as e:
        result = {"status": "error", "message": str(e), "exit_code": EXIT_DATA}
    except NumericalError as e:
        result = {"status": "error", "message": str(e), "exit_code": EXIT_NUMERICAL}
    except (PcpgError, ValueError) as e:
        result = {"status": "error", "message": str(e), "exit_code": EXIT_USAGE}

    print_result(result)
    if result["status"] == "success":
        return EXIT_OK
    return result.get("exit_code", EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())

"""Hyperparameter sweeps over kernel shapes, lambda and seeds.

Every (kernel, lambda, seed) cell is an independent training run. A cell
writes ``cells/<name>.json`` when it finishes, and a rerun skips cells whose
JSON already exists, so an interrupted sweep picks up where it stopped.
"""

import csv
import json
import logging
import statistics
from dataclasses import dataclass
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional

from .config import ExperimentConfig, KernelConfig
from .pcpg import WEIGHT_PRESETS
from .tasks import load_dataset
from .trainer import final_val_cer, train

logger = logging.getLogger(__name__)

PRESETS: Dict[str, List[KernelConfig]] = {
    # receptive-field / overlap ablation
    "overlap-ablation": [KernelConfig(k=1, s=1), KernelConfig(k=5, s=5), KernelConfig(k=5, s=1)],
    "kernel-size": [KernelConfig(k=k, s=1) for k in (1, 2, 3, 5, 7)],
    "kernel-weights": [KernelConfig(k=3, s=1, w=list(w)) for w in WEIGHT_PRESETS.values()],
}
SUMMARY_HEADER = ("kernel", "lambda", "median_val_cer", "seeds", "per_seed")


@dataclass(frozen=True)
class SweepCell:
    kernel: KernelConfig
    lam: float
    seed: int

    @property
    def name(self) -> str:
        return f"{self.kernel.label()}_lam{self.lam:g}_seed{self.seed}"

    def config(self, base: ExperimentConfig, out_dir: Path) -> ExperimentConfig:
        train = base.train.model_copy(update={"kernel": self.kernel, "lam": self.lam, "seed": self.seed})
        return base.model_copy(
            update={"train": train, "seed": self.seed, "out_dir": out_dir / "runs" / self.name}
        )


def sweep_cells(config: ExperimentConfig) -> List[SweepCell]:
    """Kernels from presets then explicit kernels, crossed with lambdas and seeds."""
    kernels: List[KernelConfig] = []
    for preset in config.sweep.presets:
        kernels.extend(PRESETS[preset])
    kernels.extend(config.sweep.kernels)
    if not kernels:
        kernels = [config.train.kernel]
    seen, unique = set(), []
    for kernel in kernels:
        if kernel.label() not in seen:
            seen.add(kernel.label())
            unique.append(kernel)
    return [
        SweepCell(kernel, lam, seed)
        for kernel in unique
        for lam in config.sweep.lambdas
        for seed in config.sweep.seeds
    ]


def _run_cell(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Pool worker: train one cell and record its final validation CER."""
    config = ExperimentConfig.model_validate(payload["config"])
    result_path = Path(payload["result_path"])
    try:
        train_set = load_dataset(config.data.path("train"))
        val_set = load_dataset(config.data.path("val"))
        rows = train(config.train, config.model, train_set, val_set, config.out_dir)
        result = {"name": payload["name"], "status": "success", "val_cer": final_val_cer(rows)}
        result_path.write_text(json.dumps(result, indent=2), encoding="utf-8")
    except Exception as exc:
        logger.error("Sweep cell %s failed: %s", payload["name"], exc)
        return {"name": payload["name"], "status": "error", "message": str(exc)}
    return result


def run_sweep(
    config: ExperimentConfig, out_dir: Path, workers: Optional[int] = None
) -> List[Dict[str, Any]]:
    """Run every pending cell, then write ``sweep.csv``; returns the summary rows."""
    out_dir = Path(out_dir)
    cells_dir = out_dir / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    cells = sweep_cells(config)
    pending = []
    for cell in cells:
        result_path = cells_dir / f"{cell.name}.json"
        if result_path.is_file():
            logger.info("Skipping finished cell %s", cell.name)
            continue
        pending.append(
            {
                "name": cell.name,
                "config": cell.config(config, out_dir).model_dump(mode="json", by_alias=True),
                "result_path": str(result_path),
            }
        )
    logger.info("Sweep: %d cells, %d pending", len(cells), len(pending))

    workers = workers or config.sweep.workers
    if workers > 1 and len(pending) > 1:
        with Pool(min(workers, len(pending))) as pool:
            outcomes = pool.map(_run_cell, pending)
    else:
        outcomes = [_run_cell(payload) for payload in pending]
    failed = [o for o in outcomes if o["status"] != "success"]
    if failed:
        logger.warning("%d sweep cells failed; rerun the sweep to retry them", len(failed))
    return summarize(cells, cells_dir, out_dir / "sweep.csv")


def summarize(cells: List[SweepCell], cells_dir: Path, csv_path: Path) -> List[Dict[str, Any]]:
    """Median validation CER over seeds for each (kernel, lambda)."""
    groups: Dict[tuple, List[float]] = {}
    for cell in cells:
        key = (cell.kernel.label(), cell.lam)
        groups.setdefault(key, [])
        path = cells_dir / f"{cell.name}.json"
        if path.is_file():
            groups[key].append(float(json.loads(path.read_text(encoding="utf-8"))["val_cer"]))
    rows = []
    for (label, lam), values in groups.items():
        rows.append(
            {
                "kernel": label,
                "lambda": lam,
                "median_val_cer": statistics.median(values) if values else "",
                "seeds": len(values),
                "per_seed": " ".join(f"{v:.4f}" for v in values),
            }
        )
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(SUMMARY_HEADER))
        writer.writeheader()
        writer.writerows(rows)
    return rows


def check_ordering(rows: List[Dict[str, Any]]) -> List[str]:
    """Compare the overlap-ablation medians for every lambda in ``rows``.

    The overlapping window (k=5, s=1) must reach a median validation CER no
    higher than both the non-overlapping window (k=5, s=5) and the single-step
    kernel (k=1, s=1). Lambdas missing any of the three medians are skipped.
    Returns one message per violated comparison.
    """
    overlapping, strided, single = (kernel.label() for kernel in PRESETS["overlap-ablation"][::-1])
    medians: Dict[float, Dict[str, float]] = {}
    for row in rows:
        if row["median_val_cer"] != "":
            medians.setdefault(float(row["lambda"]), {})[row["kernel"]] = float(row["median_val_cer"])
    violations = []
    for lam, by_kernel in sorted(medians.items()):
        if not {overlapping, strided, single} <= set(by_kernel):
            continue
        best = by_kernel[overlapping]
        logger.info(
            "lambda %g: %s=%.4f %s=%.4f %s=%.4f",
            lam,
            overlapping,
            best,
            strided,
            by_kernel[strided],
            single,
            by_kernel[single],
        )
        for other in (strided, single):
            if best > by_kernel[other]:
                violations.append(
                    f"lambda {lam:g}: {overlapping} median CER {best:.4f} > {other} {by_kernel[other]:.4f}"
                )
    return violations

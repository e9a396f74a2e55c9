import csv
import json

import pytest

from pcpg_seq2seq.config import (
    DataConfig,
    ExperimentConfig,
    KernelConfig,
    SweepConfig,
    TrainConfig,
)
from pcpg_seq2seq.sweep import (
    PRESETS,
    SweepCell,
    check_ordering,
    run_sweep,
    summarize,
    sweep_cells,
)
from pcpg_seq2seq.tasks import gen_copy, save_dataset


def _config(tmp_path, model_config=None, **sweep):
    return ExperimentConfig(
        schema_version=1,
        out_dir=tmp_path / "sweep",
        data=DataConfig(task="copy", dir=tmp_path / "data", feature_dim=40),
        **({"model": model_config} if model_config else {}),
        train=TrainConfig(
            lam=0.5,
            num_samples=2,
            kernel=KernelConfig(k=3, s=1),
            lr=0.01,
            optimizer="sgd",
            batch_size=2,
            max_iters=2,
            max_decode_len=5,
            eval_every=2,
            checkpoint_every=2,
            patience=0,
            train_eval_samples=2,
            val_eval_samples=2,
        ),
        sweep=SweepConfig(**sweep),
    )


def test_preset_grid_size(tmp_path):
    config = _config(tmp_path, presets=["overlap-ablation"], lambdas=[0.5], seeds=[0, 1, 2])
    cells = sweep_cells(config)
    assert len(cells) == 3 * 1 * 3
    assert {c.kernel.label() for c in cells} == {"k1-s1-wuniform", "k5-s5-wuniform", "k5-s1-wuniform"}


def test_presets_and_kernels_are_deduplicated(tmp_path):
    config = _config(
        tmp_path,
        presets=["overlap-ablation", "kernel-size"],
        kernels=[KernelConfig(k=5, s=1)],
        lambdas=[0.25, 0.75],
        seeds=[0],
    )
    labels = [c.kernel.label() for c in sweep_cells(config)]
    assert len(labels) == 2 * 6
    assert len(set(labels)) == 6


def test_no_kernels_falls_back_to_train_kernel(tmp_path):
    cells = sweep_cells(_config(tmp_path, seeds=[4]))
    assert [(c.kernel, c.lam, c.seed) for c in cells] == [(KernelConfig(k=3, s=1), 0.5, 4)]


def test_kernel_weight_preset_sizes():
    assert all(kernel.k == 3 for kernel in PRESETS["kernel-weights"])
    assert [kernel.k for kernel in PRESETS["kernel-size"]] == [1, 2, 3, 5, 7]


def test_cell_config_overrides(tmp_path):
    base = _config(tmp_path)
    cell = SweepCell(KernelConfig(k=5, s=5), 0.25, 3)
    config = cell.config(base, tmp_path / "out")
    assert config.train.kernel.k == 5 and config.train.kernel.s == 5
    assert config.train.lam == 0.25 and config.train.seed == 3 and config.seed == 3
    assert config.out_dir == tmp_path / "out" / "runs" / cell.name
    assert base.train.lam == 0.5


def test_summary_takes_median_over_seeds(tmp_path):
    cells = [SweepCell(KernelConfig(k=3, s=1), 0.5, seed) for seed in range(3)]
    cells_dir = tmp_path / "cells"
    cells_dir.mkdir()
    for cell, cer in zip(cells, [0.4, 0.1, 0.3]):
        (cells_dir / f"{cell.name}.json").write_text(json.dumps({"val_cer": cer}))
    rows = summarize(cells, cells_dir, tmp_path / "sweep.csv")
    assert rows[0]["median_val_cer"] == pytest.approx(0.3)
    assert rows[0]["seeds"] == 3
    with open(tmp_path / "sweep.csv", newline="") as handle:
        written = list(csv.DictReader(handle))
    assert float(written[0]["median_val_cer"]) == pytest.approx(0.3)


def test_finished_cells_are_skipped(tmp_path, monkeypatch):
    config = _config(tmp_path, seeds=[0, 1])
    out = tmp_path / "sweep"
    (out / "cells").mkdir(parents=True)
    for cell in sweep_cells(config):
        (out / "cells" / f"{cell.name}.json").write_text(json.dumps({"val_cer": 0.5}))

    def fail(*args, **kwargs):
        raise AssertionError("finished cell retrained")

    monkeypatch.setattr("pcpg_seq2seq.sweep.train", fail)
    rows = run_sweep(config, out, workers=1)
    assert rows[0]["median_val_cer"] == 0.5


def test_failed_cell_leaves_no_result(tmp_path):
    rows = run_sweep(_config(tmp_path, seeds=[0]), tmp_path / "sweep", workers=1)
    assert rows[0]["seeds"] == 0 and rows[0]["median_val_cer"] == ""
    assert not list((tmp_path / "sweep" / "cells").iterdir())


def test_single_cell_run(tmp_path, tiny_model_config):
    save_dataset(gen_copy(4, (2, 3), seed=0, feature_dim=40), tmp_path / "data" / "copy.train.txt")
    save_dataset(gen_copy(2, (2, 3), seed=1, feature_dim=40), tmp_path / "data" / "copy.val.txt")
    config = _config(tmp_path, tiny_model_config, seeds=[0])
    rows = run_sweep(config, tmp_path / "sweep", workers=1)
    assert rows[0]["seeds"] == 1
    assert 0.0 <= rows[0]["median_val_cer"]
    cell = sweep_cells(config)[0]
    assert (tmp_path / "sweep" / "runs" / cell.name / "metrics.csv").is_file()


def test_kernel_weight_preset_runs_to_completion(tmp_path, tiny_model_config):
    save_dataset(gen_copy(4, (2, 3), seed=0, feature_dim=40), tmp_path / "data" / "copy.train.txt")
    save_dataset(gen_copy(2, (2, 3), seed=1, feature_dim=40), tmp_path / "data" / "copy.val.txt")
    config = _config(tmp_path, tiny_model_config, presets=["kernel-weights"], seeds=[0])
    rows = run_sweep(config, tmp_path / "sweep", workers=1)
    assert len(rows) == 4
    assert all(row["seeds"] == 1 for row in rows)
    assert len(list((tmp_path / "sweep" / "cells").glob("*.json"))) == 4


def test_labels_are_single_path_components():
    for kernels in PRESETS.values():
        for kernel in kernels:
            assert "/" not in kernel.label() and "\\" not in kernel.label()


def _ablation_rows(overlapping, strided, single, lam=0.5):
    values = {"k5-s1-wuniform": overlapping, "k5-s5-wuniform": strided, "k1-s1-wuniform": single}
    return [
        {"kernel": label, "lambda": lam, "median_val_cer": value, "seeds": 5, "per_seed": ""}
        for label, value in values.items()
    ]


def test_ordering_holds():
    assert check_ordering(_ablation_rows(0.10, 0.20, 0.10)) == []


@pytest.mark.parametrize(
    "medians,broken",
    [((0.30, 0.20, 0.40), "k5-s5-wuniform"), ((0.30, 0.40, 0.25), "k1-s1-wuniform")],
)
def test_ordering_violation_names_the_kernel(medians, broken):
    violations = check_ordering(_ablation_rows(*medians))
    assert len(violations) == 1 and broken in violations[0]


def test_ordering_skips_incomplete_groups():
    rows = _ablation_rows(0.9, 0.1, 0.1)
    rows[1]["median_val_cer"] = ""
    assert check_ordering(rows) == []
    assert check_ordering(_ablation_rows(0.9, 0.1, 0.1, lam=0.25) + _ablation_rows(0.1, 0.2, 0.3))

import pytest

from uman import ablation
from uman.data import DatasetSpec, generate_dataset, split
from uman.losses import LossConfig
from uman.network import NetworkConfig
from uman.train import OptimConfig

TINY = NetworkConfig.desk(embed_dims=(4, 8, 8, 8, 8), man_depths=(1, 1, 1))


def labels(table):
    return [label for label, _ in ablation.variants(table, NetworkConfig.desk())]


def test_pagf_rows():
    assert labels("pagf") == [
        "Simple Skip Connection",
        "w/o Channel Attention",
        "w/o Spatial Attention",
        "w/o Gating Mechanism",
        "Element-wise Addition",
        "Full PAGF",
    ]
    modes = [cfg.pagf_mode for _, cfg in ablation.variants("pagf", NetworkConfig.desk())]
    assert modes == ["simple_skip", "no_channel", "no_spatial", "no_gate", "add_only", "full"]


def test_man_rows():
    rows = dict(ablation.variants("man", NetworkConfig.desk()))
    assert list(rows) == [
        "w/o MSAB (KAN only)",
        "Single-scale (3×3)",
        "Multi-scale (1×1,3×3,5×5)",
        "1-layer KAN",
        "3-layer KAN (Optimal)",
        "5-layer KAN",
    ]
    assert rows["Single-scale (3×3)"].msab_kernels == (3,)
    assert rows["Multi-scale (1×1,3×3,5×5)"].msab_kernels == (1, 3, 5)
    assert [rows[f"{d}-layer KAN"].man_depths for d in (1, 5)] == [(1, 1, 1), (5, 5, 5)]
    assert not rows["w/o MSAB (KAN only)"].use_msab


def test_overall_rows():
    rows = dict(ablation.variants("overall", NetworkConfig.desk()))
    assert list(rows) == ["U-KAN (Baseline)", "U-MAN (Full)", "w/o MAN Module", "w/o PAGF Module"]
    assert rows["U-MAN (Full)"] == NetworkConfig.desk()
    assert rows["w/o PAGF Module"].pagf_mode == "simple_skip"


def test_unknown_table():
    with pytest.raises(KeyError):
        ablation.variants("losses", NetworkConfig.desk())


def test_run_shares_data_and_caches_duplicates(monkeypatch):
    train_set, val_set = split(generate_dataset(DatasetSpec(n_samples=5, size=32)), 0.8, 0)
    seen = []
    real_train = ablation.train

    def spy(cfg, optim, loss, tr, va):
        seen.append((cfg, id(tr), id(va), optim.seed))
        return real_train(cfg, optim, loss, tr, va)

    monkeypatch.setattr(ablation, "train", spy)
    rows = ablation.ablate("pagf", TINY, OptimConfig(epochs=1, seed=2), LossConfig(), train_set, val_set)
    assert len(rows) == 6 and len(seen) == 6
    assert len({(s[1], s[2], s[3]) for s in seen}) == 1
    rows_man = ablation.ablate("man", TINY, OptimConfig(epochs=1, seed=2), LossConfig(), train_set, val_set)
    # "Multi-scale" and "1-layer KAN" both equal the tiny base config here
    assert rows_man[2].iou == rows_man[3].iou
    assert len(seen) == 6 + 5
    text = ablation.format_table(rows)
    assert len(text.splitlines()) == 8
    tsv = ablation.to_tsv(rows).splitlines()
    assert tsv[0].split("\t") == ["configuration", "iou", "f1", "val_loss", "best_epoch"] and len(tsv) == 7

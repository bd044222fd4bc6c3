"""Component ablations: train every arm of a table on the same data and seed."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .losses import LossConfig
from .network import NetworkConfig
from .train import OptimConfig, train

# (row label, NetworkConfig overrides)
TABLES: dict[str, list[tuple[str, dict]]] = {
    "overall": [
        ("U-KAN (Baseline)", {"use_msab": False, "pagf_mode": "simple_skip"}),
        ("U-MAN (Full)", {}),
        ("w/o MAN Module", {"use_msab": False}),
        ("w/o PAGF Module", {"pagf_mode": "simple_skip"}),
    ],
    "man": [
        ("w/o MSAB (KAN only)", {"use_msab": False}),
        ("Single-scale (3×3)", {"use_msab": True, "msab_kernels": (3,)}),
        ("Multi-scale (1×1,3×3,5×5)", {"use_msab": True, "msab_kernels": (1, 3, 5)}),
        ("1-layer KAN", {"man_depths": (1, 1, 1)}),
        ("3-layer KAN (Optimal)", {"man_depths": (3, 3, 3)}),
        ("5-layer KAN", {"man_depths": (5, 5, 5)}),
    ],
    "pagf": [
        ("Simple Skip Connection", {"pagf_mode": "simple_skip"}),
        ("w/o Channel Attention", {"pagf_mode": "no_channel"}),
        ("w/o Spatial Attention", {"pagf_mode": "no_spatial"}),
        ("w/o Gating Mechanism", {"pagf_mode": "no_gate"}),
        ("Element-wise Addition", {"pagf_mode": "add_only"}),
        ("Full PAGF", {"pagf_mode": "full"}),
    ],
}


@dataclass
class AblationRow:
    label: str
    iou: float
    f1: float
    val_loss: float
    best_epoch: int


def variants(table: str, base: NetworkConfig) -> list[tuple[str, NetworkConfig]]:
    if table not in TABLES:
        raise KeyError(f"unknown ablation table {table!r}; choose from {', '.join(TABLES)}")
    return [(label, replace(base, **overrides)) for label, overrides in TABLES[table]]


def ablate(
    table: str,
    base: NetworkConfig,
    optim_cfg: OptimConfig,
    loss_cfg: LossConfig,
    train_set,
    val_set,
) -> list[AblationRow]:
    """Train and evaluate each row; identical configs are trained once."""
    cache: dict[str, AblationRow] = {}
    rows = []
    for label, cfg in variants(table, base):
        key = repr(asdict(cfg))
        if key not in cache:
            report, _ = train(cfg, optim_cfg, loss_cfg, train_set, val_set)
            f = report.final
            cache[key] = AblationRow(label, f["iou"], f["f1"], f["loss"], report.best_epoch)
        hit = cache[key]
        rows.append(AblationRow(label, hit.iou, hit.f1, hit.val_loss, hit.best_epoch))
    return rows


def format_table(rows: list[AblationRow]) -> str:
    width = max(len("Configuration"), *(len(r.label) for r in rows))
    lines = [f"{'Configuration':<{width}}  {'IoU (%)':>8}  {'F1 (%)':>8}", "-" * (width + 20)]
    for r in rows:
        lines.append(f"{r.label:<{width}}  {100 * r.iou:8.2f}  {100 * r.f1:8.2f}")
    return "\n".join(lines)


def to_tsv(rows: list[AblationRow]) -> str:
    lines = ["configuration\tiou\tf1\tval_loss\tbest_epoch"]
    lines += [f"{r.label}\t{r.iou:.6f}\t{r.f1:.6f}\t{r.val_loss:.6f}\t{r.best_epoch}" for r in rows]
    return "\n".join(lines) + "\n"


def write_report(rows: list[AblationRow], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.tsv").write_text(to_tsv(rows), encoding="utf-8")
    (out / "table.txt").write_text(format_table(rows) + "\n", encoding="utf-8")

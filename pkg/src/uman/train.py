"""Training loop, Adam with per-group learning rates, evaluation and reports."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .data import SegmentationSample, augment
from .losses import LossConfig, binarize, f1, iou, total_loss
from .network import UMAN, NetworkConfig
from .nn import ParameterStore
from .tensor import Tensor, backward, first_nonfinite, no_grad

log = logging.getLogger(__name__)

EVAL_BATCH = 8


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


class MissingGradError(RuntimeError):
    pass


@dataclass
class OptimConfig:
    base_lr: float = 1e-3
    group_lr_multipliers: dict[str, float] = field(default_factory=lambda: {"kan": 0.1})
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    batch_size: int = 4
    seed: int = 0
    weight_decay: float = 0.0
    augment: bool = True

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        # a zero multiplier freezes a group, which the harness relies on
        if any(m < 0 for m in self.group_lr_multipliers.values()):
            raise ValueError("learning-rate multipliers must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def lr_for(self, group: str) -> float:
        return self.base_lr * self.group_lr_multipliers.get(group, 1.0)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParameterStore, state: AdamState, cfg: OptimConfig) -> None:
    """One bias-corrected Adam update, in place, using each tensor's group learning rate."""
    missing = [name for name, t in store.items() if t.grad is None]
    if missing:
        raise MissingGradError("no gradient for: " + ", ".join(missing))
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in store.items():
        g = p.grad
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        lr = cfg.lr_for(store.group_of(name))
        if lr:
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_iou: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: int = -1
    final: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tval_loss\tval_iou\tval_f1"]
        for e, row in enumerate(zip(self.train_loss, self.val_loss, self.val_iou, self.val_f1), start=1):
            lines.append(f"{e}\t" + "\t".join(f"{v:.6f}" for v in row))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        f = self.final
        return (
            f"best epoch {self.best_epoch}: IoU {100 * f['iou']:.2f}%  "
            f"F1 {100 * f['f1']:.2f}%  loss {f['loss']:.4f}"
        )


def stack_batch(samples: list[SegmentationSample]) -> tuple[Tensor, np.ndarray]:
    return Tensor(np.stack([s.image for s in samples])), np.stack([s.mask for s in samples])


def evaluate_model(model: UMAN, samples: list[SegmentationSample], loss_cfg: LossConfig | None = None) -> dict[str, float]:
    """Mean per-sample IoU, F1 and loss in eval mode on normalized, unaugmented inputs."""
    loss_cfg = loss_cfg or LossConfig()
    model.eval()
    ious, f1s, losses = [], [], []
    with no_grad():
        for start in range(0, len(samples), EVAL_BATCH):
            chunk = [augment(s, None, geometric=False) for s in samples[start : start + EVAL_BATCH]]
            x, y = stack_batch(chunk)
            logits = model(x)
            pred = binarize(logits, loss_cfg.threshold)
            for i in range(len(chunk)):
                ious.append(iou(pred[i], y[i]))
                f1s.append(f1(pred[i], y[i]))
                losses.append(total_loss(Tensor(logits.data[i : i + 1]), y[i : i + 1], loss_cfg).item())
    return {"iou": float(np.mean(ious)), "f1": float(np.mean(f1s)), "loss": float(np.mean(losses))}


def train(
    net_cfg: NetworkConfig,
    optim_cfg: OptimConfig,
    loss_cfg: LossConfig,
    train_set: list[SegmentationSample],
    val_set: list[SegmentationSample],
    out_dir=None,
) -> tuple[TrainReport, UMAN]:
    """Fit a fresh model; returns the report and the model holding the best-val-IoU weights.

    The best weights are kept rounded through float32, so the returned model and
    the saved checkpoint evaluate identically.
    """
    seed = optim_cfg.seed
    model = UMAN(net_cfg, seed=seed)
    store = model.parameter_store()
    state = AdamState()
    report = TrainReport(config={"network": asdict(net_cfg), "optim": asdict(optim_cfg), "loss": asdict(loss_cfg)})
    best_state, best_iou = None, -np.inf
    n = len(train_set)
    for epoch in range(optim_cfg.epochs):
        model.train()
        order = np.random.default_rng([seed, epoch]).permutation(n)
        batch_losses = []
        for start in range(0, n, optim_cfg.batch_size):
            idx = order[start : start + optim_cfg.batch_size]
            batch = [
                augment(train_set[i], np.random.SeedSequence([seed, epoch, int(i)]), geometric=optim_cfg.augment)
                for i in idx
            ]
            x, y = stack_batch(batch)
            store.zero_grad()
            loss = total_loss(model(x), y, loss_cfg)
            if not np.isfinite(loss.item()):
                op = first_nonfinite(loss)
                raise NumericError(f"non-finite loss at epoch {epoch + 1}; first non-finite op: {op}")
            backward(loss)
            adam_step(store, state, optim_cfg)
            batch_losses.append(loss.item())
        metrics = evaluate_model(model, val_set, loss_cfg)
        report.train_loss.append(float(np.mean(batch_losses)))
        report.val_loss.append(metrics["loss"])
        report.val_iou.append(metrics["iou"])
        report.val_f1.append(metrics["f1"])
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_iou %.4f",
            epoch + 1, report.train_loss[-1], metrics["loss"], metrics["iou"],
        )
        if metrics["iou"] > best_iou:
            best_iou = metrics["iou"]
            best_state = checkpoint.round_state(model.state_dict())
            report.best_epoch = epoch + 1
    model.load_state_dict(best_state)
    report.final = evaluate_model(model, val_set, loss_cfg)
    if out_dir is not None:
        save_run(out_dir, model, report, net_cfg, optim_cfg, loss_cfg)
    return report, model


def save_run(out_dir, model, report, net_cfg, optim_cfg, loss_cfg) -> None:
    from .config import dump_config

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    checkpoint.save(out / "model.uman", model.state_dict())
    (out / "config.txt").write_text(dump_config(net_cfg, optim_cfg, loss_cfg), encoding="utf-8")
    (out / "report.tsv").write_text(report.to_tsv(), encoding="utf-8")


def evaluate_checkpoint(path, net_cfg: NetworkConfig, samples, loss_cfg: LossConfig | None = None) -> dict[str, float]:
    state = checkpoint.load(path)
    model = UMAN(net_cfg)
    model.load_state_dict(state)
    return evaluate_model(model, samples, loss_cfg)

"""Fit the desk network to a handful of synthetic samples and report train IoU.

    python3 scripts/run_overfit.py --epochs 200 --out runs/overfit
"""

import argparse
import logging
import time

from uman.data import DatasetSpec, generate_dataset
from uman.losses import LossConfig
from uman.network import NetworkConfig
from uman.train import OptimConfig, evaluate_model, train


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=3e-3)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional run directory for checkpoint and report")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    samples = generate_dataset(DatasetSpec(n_samples=args.n, size=args.size, seed=args.seed))
    optim = OptimConfig(base_lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed, augment=False)
    start = time.perf_counter()
    report, model = train(NetworkConfig.desk(), optim, LossConfig(), samples, samples, out_dir=args.out)
    elapsed = time.perf_counter() - start
    metrics = evaluate_model(model, samples)
    print(f"final train loss {report.train_loss[-1]:.4f}")
    print(f"train IoU {metrics['iou']:.4f}  F1 {metrics['f1']:.4f}")
    print(f"{args.epochs} epochs in {elapsed:.0f}s")


if __name__ == "__main__":
    main()

"""Run one ablation table end to end on a freshly generated synthetic set.

    python3 scripts/run_ablation.py --table overall --n 64 --size 32 --epochs 100 --out runs/overall
"""

import argparse
import logging

from uman.ablation import TABLES, ablate, format_table, write_report
from uman.data import DatasetSpec, generate_dataset, split
from uman.losses import LossConfig
from uman.network import NetworkConfig
from uman.train import OptimConfig


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--table", choices=sorted(TABLES), default="overall")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    samples = generate_dataset(DatasetSpec(n_samples=args.n, size=args.size, seed=args.seed))
    train_set, val_set = split(samples, 0.8, args.seed)
    optim = OptimConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    rows = ablate(args.table, NetworkConfig.desk(), optim, LossConfig(), train_set, val_set)
    write_report(rows, args.out)
    print(format_table(rows))


if __name__ == "__main__":
    main()

"""Command-line entry point: ``uman {synth,train,eval,gradcheck,ablate}``.

Exit codes: 0 success, 1 usage/config/checkpoint/data errors, 2 numeric failure
(non-finite training loss or a failed gradient check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import ablation, data, gradcheck
from .config import dump_config, load_config, parse_config
from .network import NetworkConfig
from .train import NumericError, evaluate_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

PRESETS = {"desk": NetworkConfig.desk, "paper": NetworkConfig.paper}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for numeric failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _configs(path, preset: str):
    base = PRESETS[preset]()
    if path is None:
        return parse_config("", base)
    return load_config(path, base)


def _split(root, seed: int, which: str):
    samples = data.load_dataset(root)
    if which == "all":
        return samples
    train_set, val_set = data.split(samples, 0.8, seed)
    return train_set if which == "train" else val_set


def cmd_synth(args) -> int:
    spec = data.DatasetSpec(n_samples=args.n, size=args.size, family=args.family, seed=args.seed)
    samples = data.generate_dataset(spec, workers=args.workers)
    data.save_dataset(samples, args.out)
    print(f"wrote {len(samples)} samples ({args.size}x{args.size}) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    net, optim, loss = _configs(args.config, args.preset)
    if args.seed is not None:
        optim = replace(optim, seed=args.seed)
    if args.epochs is not None:
        optim = replace(optim, epochs=args.epochs)
    train_set, val_set = data.split(data.load_dataset(args.data), 0.8, optim.seed)
    report, _ = train(net, optim, loss, train_set, val_set, out_dir=args.out)
    print(report.summary())
    print(f"checkpoint: {Path(args.out) / 'model.uman'}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg_path = args.config or Path(args.checkpoint).with_name("config.txt")
    if not Path(cfg_path).exists():
        raise UsageError(f"no config found at {cfg_path}; pass --config")
    net, optim, loss = load_config(cfg_path, PRESETS[args.preset]())
    samples = _split(args.data, optim.seed, args.split)
    metrics = evaluate_checkpoint(args.checkpoint, net, samples, loss)
    print(f"{'metric':<6}  {'value':>10}")
    for key in ("iou", "f1", "loss"):
        print(f"{key:<6}  {metrics[key]:10.6f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.gradcheck(args.scope, seed=args.seed)
    print(gradcheck.format_results(results))
    ok = all(r.passed for r in results)
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_ablate(args) -> int:
    net, optim, loss = _configs(args.config, args.preset)
    if args.seed is not None:
        optim = replace(optim, seed=args.seed)
    if args.epochs is not None:
        optim = replace(optim, epochs=args.epochs)
    train_set, val_set = data.split(data.load_dataset(args.data), 0.8, optim.seed)
    rows = ablation.ablate(args.table, net, optim, loss, train_set, val_set)
    ablation.write_report(rows, args.out)
    (Path(args.out) / "config.txt").write_text(dump_config(net, optim, loss), encoding="utf-8")
    print(ablation.format_table(rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uman", description="U-MAN segmentation: data, training, evaluation, checks")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic segmentation dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--family", choices=("ellipse", "blob"), default="ellipse")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_synth)

    preset = dict(choices=tuple(PRESETS), default="desk", help="network preset that config keys override")

    t = sub.add_parser("train", help="train on an 80/20 split of a dataset directory")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--preset", **preset)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--config", help="defaults to config.txt beside the checkpoint")
    e.add_argument("--split", choices=("val", "train", "all"), default="val")
    e.add_argument("--preset", **preset)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    g.add_argument("--scope", default="all")
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    a = sub.add_parser("ablate", help="run an ablation table")
    a.add_argument("--table", choices=tuple(ablation.TABLES), required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--config")
    a.add_argument("--seed", type=int)
    a.add_argument("--epochs", type=int)
    a.add_argument("--preset", **preset)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    # config, checkpoint, image and state errors all derive from ValueError
    except (UsageError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

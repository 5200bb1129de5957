"""Command line for the trainer: prepare a dataset summary or run training."""

from __future__ import annotations

import argparse
import json
import sys

from wormline.lossmap import LossParams, SlackConfig

from .config import TrainConfig
from .data import prepare_dataset, split_folds
from .train import train


def cmd_inspect(args: argparse.Namespace) -> int:
    pairs = prepare_dataset(args.raw, args.sigma_skeleton, args.sigma_endpoint)
    folds = split_folds(pairs)
    summary = {
        "images": len(pairs),
        "fold_A": [p.well for p in folds["A"]],
        "fold_B": [p.well for p in folds["B"]],
        "worms": {p.well: p.n_objects for p in pairs},
    }
    json.dump(summary, sys.stdout, indent=1)
    print()
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = TrainConfig(
        slack=SlackConfig(args.sigma_skeleton, args.sigma_endpoint),
        loss=LossParams(gamma=args.gamma, beta=args.beta),
        fold=args.fold,
        augment_contrast=not args.no_contrast,
        augment_rotations=not args.no_rotations,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        base_channels=args.base_channels,
        seed=args.seed,
        device=args.device,
    )
    out = train(args.raw, args.out, cfg)
    print(f"exported held-out maps -> {out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="worm-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--raw", required=True, help="dataset root (images/ + masks/)")
    common.add_argument("--sigma-skeleton", type=float, default=2.0)
    common.add_argument("--sigma-endpoint", type=float, default=3.0)

    p = sub.add_parser("inspect", parents=[common], help="summarize the dataset and folds")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("train", parents=[common], help="train one fold, export the other")
    p.add_argument("--out", required=True)
    p.add_argument("--fold", choices=("A", "B"), default="A", help="fold to train on")
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=2)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.add_argument("--no-contrast", action="store_true")
    p.add_argument("--no-rotations", action="store_true")
    p.set_defaults(func=cmd_train)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

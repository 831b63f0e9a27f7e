"""Standalone training entry point over an exported spectrogram dataset."""

from __future__ import annotations

import argparse
import json
import sys

from .dataset import DatasetError, load_dataset
from .train import InsufficientSamplesError, train_and_eval


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncfp-classify",
        description="Train and cross-validate a CNN on a flush-delay "
                    "spectrogram dataset.",
    )
    parser.add_argument("--dataset", required=True, help="dataset directory")
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--weight-decay", type=float, default=1e-5)
    parser.add_argument("--optimizer", choices=["adamw", "adam"], default="adamw")
    parser.add_argument("--arch", choices=["small", "resnet152"], default="small")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--shuffle-labels", action="store_true",
                        help="chance-level control: permute labels before splitting")
    parser.add_argument("--report", default=None, help="write the CvReport JSON here")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        dataset = load_dataset(args.dataset)
        report = train_and_eval(
            dataset, folds=args.folds, epochs=args.epochs, lr=args.lr,
            weight_decay=args.weight_decay, seed=args.seed,
            optimizer=args.optimizer, arch=args.arch,
            batch_size=args.batch_size, shuffle_labels=args.shuffle_labels,
        )
    except (DatasetError, InsufficientSamplesError) as exc:
        print(f"syncfp-classify: {exc}", file=sys.stderr)
        return 2
    print(report.table())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""seltmr-export command line entry point."""

from __future__ import annotations

import argparse
import sys

from . import data as datasrc
from .containers import ExportError
from .convert import ExportRecipe, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seltmr-export",
        description="Train a fixture model (or convert a checkpoint) and export "
        "it to the portable container plus a dataset subset.",
    )
    parser.add_argument("--recipe", required=True, choices=["mlp", "cnn", "checkpoint"])
    parser.add_argument("--checkpoint", help="saved torch module (checkpoint recipe)")
    parser.add_argument("--subset", type=int, default=1000, help="evaluation subset size")
    parser.add_argument("--epochs", type=int, default=30, help="training epochs (0 = seeded init only)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--data",
        default=datasrc.DATA_AUTO,
        choices=[datasrc.DATA_AUTO, datasrc.DATA_MNIST, datasrc.DATA_DIGITS],
        help="image corpus; auto tries mnist and falls back to upscaled digits",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = export(
            ExportRecipe(
                source=args.recipe,
                dataset_subset_size=args.subset,
                train_epochs=args.epochs,
                train_seed=args.seed,
                output_dir=args.out,
                checkpoint_path=args.checkpoint,
                data_source=args.data,
            )
        )
    except (ExportError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"model: {result['model_dir']} (hash {result['model_hash']})")
    print(f"dataset: {result['dataset']} ({result['subset_size']} samples, "
          f"source {result['data_source']})")
    print(f"subset accuracy: {result['subset_accuracy']:.4f}")
    parity = result["parity"]
    status = "ok" if parity["pass"] else "FAIL"
    print(f"parity: max |logit diff| {parity['max_abs_logit_diff']:.3e} over "
          f"{parity['samples']} samples ({status})")
    return 0 if parity["pass"] else 1


if __name__ == "__main__":
    sys.exit(main())

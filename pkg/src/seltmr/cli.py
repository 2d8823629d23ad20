"""Command-line front end.

Subcommands: score, inject, sensitivity, tmr-eval, min-protect, info.
Campaign subcommands accept a JSON config file (--config) whose keys match
CampaignConfig; explicit flags override file values. Exit code 0 on
success, 1 with a message on stderr for any handled error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import campaign, faults, lrp, modelio, nncore
from .errors import SeltmrError

_BIT_MODES = {"29": faults.BIT_FIXED29, "random": faults.BIT_UNIFORM}


def _parse_list(text: str, cast):
    return tuple(cast(part) for part in text.split(",") if part.strip())


def _campaign_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", help="model container directory")
    p.add_argument("--dataset", help=".nnd dataset file")
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--out", default="seltmr-out", help="report output directory")
    p.add_argument("--trials", type=int, help="repetitions per (ber, strategy)")
    p.add_argument("--ber", help="comma-separated BER grid, e.g. 1e-5,1e-4")
    p.add_argument("--strategy", help="comma-separated subset of random,magnitude,xai")
    p.add_argument("--fraction", type=float, help="protection fraction in (0,1]")
    p.add_argument("--bit", choices=sorted(_BIT_MODES), help="29 = fixed bit, random = uniform bit")
    p.add_argument("--calibration", type=int, help="calibration sample count for scoring")


def _build_config(args) -> campaign.CampaignConfig:
    settings: dict = {}
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if not isinstance(raw, dict):
            raise ValueError(f"{args.config}: config must be a JSON object")
        allowed = {
            "model_path", "dataset_path", "calibration_size", "ber_grid",
            "strategies", "protection_fraction", "bit_mode", "trials",
            "seed", "target_accuracy_loss", "output_dir",
        }
        unknown = set(raw) - allowed
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {sorted(unknown)}")
        settings.update(raw)
    if args.model:
        settings["model_path"] = args.model
    if args.dataset:
        settings["dataset_path"] = args.dataset
    if args.seed is not None:
        settings["seed"] = args.seed
    if args.trials is not None:
        settings["trials"] = args.trials
    if args.ber:
        settings["ber_grid"] = _parse_list(args.ber, float)
    if args.strategy:
        settings["strategies"] = _parse_list(args.strategy, str)
    if args.fraction is not None:
        settings["protection_fraction"] = args.fraction
    if args.bit:
        settings["bit_mode"] = _BIT_MODES[args.bit]
    if args.calibration is not None:
        settings["calibration_size"] = args.calibration
    if "model_path" not in settings:
        raise ValueError("--model is required (or model_path in --config)")
    if "dataset_path" not in settings:
        raise ValueError("--dataset is required (or dataset_path in --config)")
    settings["output_dir"] = args.out
    return campaign.CampaignConfig(**settings)


def _emit_and_tell(report: campaign.CampaignReport, out_dir) -> int:
    paths = campaign.emit_report(report, out_dir)
    print(paths["summary"].read_text(), end="")
    print(f"report written to {paths['report'].parent}")
    return 0


def _cmd_score(args) -> int:
    network = modelio.load_model(args.model)
    dataset = modelio.load_dataset(args.dataset)
    rules = lrp.LrpRuleConfig(epsilon=args.epsilon, gamma=args.gamma)
    scores = lrp.score_weights(network, dataset.take(min(args.calibration, len(dataset))), rules)
    lrp.save_scores(scores, args.out, modelio.read_model_hash(args.model), rules)
    print(
        f"scored {scores.scores.size} weights over {scores.calibration_size} "
        f"samples -> {args.out}"
    )
    return 0


def _cmd_inject(args) -> int:
    network = modelio.load_model(args.model)
    plan = faults.load_plan(args.plan, nt=modelio.GlobalWeightIndex(network).total)
    faulted, log = faults.apply_faults(network, plan)
    out = Path(args.out)
    modelio.save_model(faulted, out)
    faults.save_log(log, out / "applied_flips.jsonl")
    print(f"applied {len(log)} flips -> {out}")
    return 0


def _cmd_sensitivity(args) -> int:
    config = _build_config(args)
    return _emit_and_tell(campaign.run_sensitivity(config), args.out)


def _cmd_tmr_eval(args) -> int:
    config = _build_config(args)
    return _emit_and_tell(campaign.run_tmr_eval(config), args.out)


def _cmd_min_protect(args) -> int:
    config = _build_config(args)
    ber = config.ber_grid[0] if len(config.ber_grid) == 1 else None
    return _emit_and_tell(campaign.run_min_protect(config, ber), args.out)


def _cmd_info(args) -> int:
    network = modelio.load_model(args.model)
    index = modelio.GlobalWeightIndex(network)
    print(f"model: {args.model}")
    print(f"  hash: {modelio.read_model_hash(args.model)}")
    print(f"  input shape: {network.input_shape}, classes: {network.num_classes}")
    print(f"  weights (NT): {index.total}")
    for i, (layer, shape) in enumerate(zip(network.layers, network.layer_output_shapes)):
        size = layer.weights.size if layer.weights is not None else 0
        print(f"  layer {i}: {layer.kind:8s} -> {shape} ({size} weights)")
    if args.dataset:
        dataset = modelio.load_dataset(args.dataset)
        print(f"dataset: {args.dataset}")
        print(f"  samples: {len(dataset)}, shape: {dataset.sample_shape()}")
        if len(dataset):
            print(
                f"  labels: [{dataset.labels.min()}, {dataset.labels.max()}], "
                f"values: [{dataset.inputs.min():.4f}, {dataset.inputs.max():.4f}]"
            )
        ev = nncore.evaluate(network, dataset.take(min(len(dataset), 200)))
        print(f"  accuracy on first {min(len(dataset), 200)}: {ev.accuracy:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seltmr",
        description="Relevance-guided selective weight hardening and fault-injection campaigns.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="compute per-weight relevance scores")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--calibration", type=int, default=50)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--out", required=True, help="output scores file (.bin)")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("inject", help="apply a fault-plan file to a model")
    p.add_argument("--model", required=True)
    p.add_argument("--plan", required=True, help="JSON-lines flip file")
    p.add_argument("--out", required=True, help="output model container directory")
    p.set_defaults(func=_cmd_inject)

    p = sub.add_parser("sensitivity", help="accuracy/loss vs BER on the unprotected model")
    _campaign_flags(p)
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("tmr-eval", help="selective-TMR reliability across a BER grid")
    _campaign_flags(p)
    p.set_defaults(func=_cmd_tmr_eval)

    p = sub.add_parser("min-protect", help="smallest protected fraction meeting a loss target")
    _campaign_flags(p)
    p.set_defaults(func=_cmd_min_protect)

    p = sub.add_parser("info", help="print model (and dataset) facts")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset")
    p.set_defaults(func=_cmd_info)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SeltmrError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Seeded fault-injection campaigns and report emission.

Three experiment families, all driven by one master seed so that a rerun
with the same config reproduces every byte of the report:

* sensitivity — fault the unprotected model under each targeting strategy
  across a BER grid and record accuracy/loss degradation;
* tmr-eval — protect a fraction of weights chosen by each method, place
  faults uniformly over all storage words (replicas included), and compare
  against the unprotected model under the same physical fault pattern;
* min-protect — walk a fixed fraction grid with frozen fault plans to find
  the smallest protected fraction that keeps mean accuracy loss at or below
  a target.

Per-trial seeds are derived by hashing (master seed, experiment, strategy,
ber index, trial index), so no trial depends on execution order.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import faults, lrp, modelio, nncore, tmr
from .lrp import ProtectionSet

EXPERIMENT_SENSITIVITY = "sensitivity"
EXPERIMENT_TMR = "tmr-eval"
EXPERIMENT_MIN_PROTECT = "min-protect"

DEFAULT_BER_GRID = (1e-7, 1e-6, 1e-5, 1e-4, 1e-3)
MIN_PROTECT_GRID = (0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
DEFAULT_MIN_PROTECT_BER = 1e-4
COLLAPSE_NOTE = "deterministic plan; trials collapsed"

CURVE_COLUMNS = (
    "experiment",
    "strategy",
    "ber",
    "mean_accuracy",
    "std_accuracy",
    "mean_loss",
    "std_loss",
    "trials",
    "nbf",
)
OVERHEAD_COLUMNS = (
    "experiment",
    "strategy",
    "fraction",
    "base_bytes",
    "replica_bytes",
    "index_bytes",
    "percent_overhead",
)


def derive_seed(master_seed: int, *parts) -> int:
    """Stable 64-bit seed from the master seed and a label tuple."""
    text = "|".join(str(p) for p in (master_seed, *parts))
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


@dataclass
class CampaignConfig:
    model_path: str
    dataset_path: str
    calibration_size: int = 50
    ber_grid: tuple = DEFAULT_BER_GRID
    strategies: tuple = faults.STRATEGIES
    protection_fraction: float = 0.01
    bit_mode: str = faults.BIT_FIXED29
    trials: int = 20
    seed: int = 0
    target_accuracy_loss: float = 0.05
    output_dir: str | None = None

    def __post_init__(self):
        self.ber_grid = tuple(float(b) for b in self.ber_grid)
        self.strategies = tuple(self.strategies)
        if list(self.ber_grid) != sorted(self.ber_grid):
            raise ValueError("ber_grid must be sorted ascending")
        for b in self.ber_grid:
            if not 0 <= b <= 1:
                raise ValueError(f"ber {b} outside [0, 1]")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        frac = lrp.exact_fraction(self.protection_fraction)
        if not 0 < frac <= 1:
            raise ValueError(
                f"protection_fraction must be in (0, 1], got {self.protection_fraction}"
            )
        if self.bit_mode not in (faults.BIT_FIXED29, faults.BIT_UNIFORM):
            raise ValueError(f"unknown bit_mode {self.bit_mode!r}")
        for s in self.strategies:
            if s not in faults.STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        if not self.strategies:
            raise ValueError("at least one strategy is required")

    def describe(self) -> dict:
        """Config echo for reports. output_dir is deliberately excluded so
        the same experiment written to two directories emits identical
        report bytes."""
        return {
            "model_path": str(self.model_path),
            "dataset_path": str(self.dataset_path),
            "calibration_size": self.calibration_size,
            "ber_grid": list(self.ber_grid),
            "strategies": list(self.strategies),
            "protection_fraction": self.protection_fraction,
            "bit_mode": self.bit_mode,
            "trials": self.trials,
            "seed": self.seed,
            "target_accuracy_loss": self.target_accuracy_loss,
        }


@dataclass
class TrialResult:
    ber: float
    strategy: str
    trial_index: int
    accuracy: float
    mean_loss: float
    nbf: int
    nan_count: int
    seed_used: int

    def __post_init__(self):
        if not 0 <= self.accuracy <= 1:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")

    def as_dict(self) -> dict:
        return {
            "ber": self.ber,
            "strategy": self.strategy,
            "trial_index": self.trial_index,
            "accuracy": self.accuracy,
            "mean_loss": self.mean_loss,
            "nbf": self.nbf,
            "nan_count": self.nan_count,
            "seed_used": self.seed_used,
        }


@dataclass
class CampaignReport:
    experiment: str
    config: dict
    baseline_accuracy: float
    baseline_loss: float
    cells: list
    trial_results: list
    overhead: dict | None = None
    reliability_improvement: list | None = None
    min_protect: list | None = None

    def as_dict(self) -> dict:
        return _plain({
            "experiment": self.experiment,
            "config": self.config,
            "baseline_accuracy": self.baseline_accuracy,
            "baseline_loss": self.baseline_loss,
            "cells": self.cells,
            "trial_results": self.trial_results,
            "overhead": self.overhead,
            "reliability_improvement": self.reliability_improvement,
            "min_protect": self.min_protect,
        })


@dataclass
class MinProtectResult:
    """Outcome of the fraction search for one selection method."""

    method: str
    ber: float
    fraction: float
    achieved: bool
    overhead: tmr.OverheadReport
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "ber": self.ber,
            "fraction": self.fraction,
            "achieved": self.achieved,
            "overhead": self.overhead.as_dict(),
            "rows": self.rows,
            "warnings": self.warnings,
        }


def _plain(obj):
    """Recursively convert numpy scalars/arrays so json sees pure Python."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    return obj


def _load(config: CampaignConfig):
    network = modelio.load_model(config.model_path)
    dataset = modelio.load_dataset(config.dataset_path)
    return network, dataset


def _scores_if_needed(config: CampaignConfig, network, dataset, methods):
    if faults.STRATEGY_XAI not in methods:
        return None
    if config.calibration_size < 1:
        raise ValueError("xai strategy requires calibration_size >= 1")
    calibration = dataset.take(min(config.calibration_size, len(dataset)))
    return lrp.score_weights(network, calibration)


def _aggregate(results: list, requested_trials: int, experiment: str,
               strategy_label: str, ber: float, nbf: int, note: str | None) -> dict:
    accs = np.array([r.accuracy for r in results], dtype=np.float64)
    losses = np.array([r.mean_loss for r in results], dtype=np.float64)
    many = len(results) > 1
    return {
        "experiment": experiment,
        "strategy": strategy_label,
        "ber": ber,
        "nbf": nbf,
        "trials": requested_trials,
        "trials_effective": len(results),
        "mean_accuracy": float(accs.mean()),
        "std_accuracy": float(accs.std(ddof=1)) if many else 0.0,
        "mean_loss": float(losses.mean()),
        "std_loss": float(losses.std(ddof=1)) if many else 0.0,
        "note": note,
    }


def run_sensitivity(config: CampaignConfig) -> CampaignReport:
    """Fault the unprotected model per strategy across the BER grid.

    Magnitude/xai targeting is deterministic, so with the fixed bit mode
    their trials are provably identical and collapse to one computed trial
    (std 0, trials_effective 1, noted in the cell).
    """
    network, dataset = _load(config)
    baseline = nncore.evaluate(network, dataset)
    index = modelio.GlobalWeightIndex(network)
    weights_flat = index.flatten_weights()
    scores = _scores_if_needed(config, network, dataset, config.strategies)

    cells = []
    trial_rows: list[TrialResult] = []
    for strategy in config.strategies:
        for bi, ber in enumerate(config.ber_grid):
            nbf = faults.fault_count(ber, index.total)
            deterministic = nbf == 0 or (
                strategy != faults.STRATEGY_RANDOM
                and config.bit_mode == faults.BIT_FIXED29
            )
            n_run = 1 if deterministic else config.trials
            results = []
            for t in range(n_run):
                seed_used = derive_seed(
                    config.seed, EXPERIMENT_SENSITIVITY, strategy, bi, t
                )
                strat = faults.InjectionStrategy(
                    kind=strategy,
                    scores=scores if strategy == faults.STRATEGY_XAI else None,
                    bit_mode=config.bit_mode,
                )
                plan = faults.plan_injection(
                    index.total, ber, strat, weights_flat, seed_used
                )
                faulted, _ = faults.apply_faults(network, plan)
                ev = nncore.evaluate(faulted, dataset)
                results.append(
                    TrialResult(
                        ber=ber,
                        strategy=strategy,
                        trial_index=t,
                        accuracy=ev.accuracy,
                        mean_loss=ev.mean_loss,
                        nbf=plan.nbf,
                        nan_count=ev.nan_count,
                        seed_used=seed_used,
                    )
                )
            note = COLLAPSE_NOTE if (deterministic and config.trials > 1) else None
            cells.append(
                _aggregate(results, config.trials, EXPERIMENT_SENSITIVITY,
                           strategy, ber, nbf, note)
            )
            trial_rows.extend(results)

    return CampaignReport(
        experiment=EXPERIMENT_SENSITIVITY,
        config=config.describe(),
        baseline_accuracy=baseline.accuracy,
        baseline_loss=baseline.mean_loss,
        cells=cells,
        trial_results=[t.as_dict() for t in trial_rows],
    )


def _protection_for(method: str, config: CampaignConfig, index, weights_flat,
                    scores) -> ProtectionSet:
    k = lrp.top_fraction_count(index.total, config.protection_fraction)
    if method == faults.STRATEGY_RANDOM:
        rng = np.random.Generator(
            np.random.PCG64(derive_seed(config.seed, "protection", method))
        )
        chosen = rng.choice(index.total, size=k, replace=False)
    elif method == faults.STRATEGY_MAGNITUDE:
        chosen = lrp.rank_descending(np.abs(weights_flat.astype(np.float64)))[:k]
    else:
        return lrp.select_top_fraction(scores, config.protection_fraction)
    return ProtectionSet(
        indices=np.sort(chosen),
        fraction=float(lrp.exact_fraction(config.protection_fraction)),
    )


def run_tmr_eval(config: CampaignConfig) -> CampaignReport:
    """Protect a weight fraction per method and measure fault resilience.

    Faults are placed uniformly over all storage words (originals plus
    replicas). The unprotected comparator sees the same plan restricted to
    the words that exist without protection.
    """
    network, dataset = _load(config)
    baseline = nncore.evaluate(network, dataset)
    index = modelio.GlobalWeightIndex(network)
    weights_flat = index.flatten_weights()
    scores = _scores_if_needed(config, network, dataset, config.strategies)

    cells = []
    trial_rows: list[TrialResult] = []
    reliability = []
    overhead: tmr.OverheadReport | None = None
    for method in config.strategies:
        pset = _protection_for(method, config, index, weights_flat, scores)
        protected = tmr.protect(network, pset)
        overhead = tmr.memory_overhead(protected)
        for bi, ber in enumerate(config.ber_grid):
            words = index.total + 2 * len(pset)
            nbf = faults.fault_count(ber, words)
            n_run = 1 if nbf == 0 else config.trials
            prot_results = []
            unprot_results = []
            for t in range(n_run):
                seed_used = derive_seed(config.seed, EXPERIMENT_TMR, method, bi, t)
                plan = faults.plan_storage_injection(
                    index.total, pset.indices, ber, seed_used, config.bit_mode
                )
                faulted_p, _ = faults.apply_faults(protected, plan)
                ev_p = nncore.evaluate(tmr.resolve(faulted_p), dataset)
                restricted = faults.restrict_to_original(plan)
                faulted_u, _ = faults.apply_faults(network, restricted)
                ev_u = nncore.evaluate(faulted_u, dataset)
                prot_results.append(
                    TrialResult(
                        ber=ber, strategy=method, trial_index=t,
                        accuracy=ev_p.accuracy, mean_loss=ev_p.mean_loss,
                        nbf=plan.nbf, nan_count=ev_p.nan_count,
                        seed_used=seed_used,
                    )
                )
                unprot_results.append(
                    TrialResult(
                        ber=ber, strategy=f"{method}_unprotected", trial_index=t,
                        accuracy=ev_u.accuracy, mean_loss=ev_u.mean_loss,
                        nbf=restricted.nbf, nan_count=ev_u.nan_count,
                        seed_used=seed_used,
                    )
                )
            note = COLLAPSE_NOTE if (n_run == 1 and config.trials > 1) else None
            cells.append(
                _aggregate(prot_results, config.trials, EXPERIMENT_TMR,
                           method, ber, nbf, note)
            )
            cells.append(
                _aggregate(unprot_results, config.trials, EXPERIMENT_TMR,
                           f"{method}_unprotected", ber, nbf, note)
            )
            prot_mean = cells[-2]["mean_accuracy"]
            unprot_mean = cells[-1]["mean_accuracy"]
            reliability.append(
                {
                    "strategy": method,
                    "ber": ber,
                    "accuracy_points": (prot_mean - unprot_mean) * 100.0,
                }
            )
            trial_rows.extend(prot_results)
            trial_rows.extend(unprot_results)

    return CampaignReport(
        experiment=EXPERIMENT_TMR,
        config=config.describe(),
        baseline_accuracy=baseline.accuracy,
        baseline_loss=baseline.mean_loss,
        cells=cells,
        trial_results=[t.as_dict() for t in trial_rows],
        overhead=overhead.as_dict() if overhead else None,
        reliability_improvement=reliability,
    )


def find_min_protection(config: CampaignConfig, method: str,
                        ber: float | None = None) -> MinProtectResult:
    """Smallest fraction on the grid whose mean accuracy loss meets the target.

    The per-trial fault plans are frozen across the whole fraction grid
    (drawn over the base words only), so growing the protected set is the
    only thing that changes between rows. Protection sets are nested along
    the grid. Target-meeting should then be monotone in the fraction;
    observed violations are reported as warnings, not hidden.
    """
    if not 0 < config.target_accuracy_loss < 1:
        raise ValueError(
            f"target_accuracy_loss must be in (0, 1), got {config.target_accuracy_loss}"
        )
    if ber is None:
        ber = config.ber_grid[0] if len(config.ber_grid) == 1 else DEFAULT_MIN_PROTECT_BER
    network, dataset = _load(config)
    baseline = nncore.evaluate(network, dataset)
    index = modelio.GlobalWeightIndex(network)
    weights_flat = index.flatten_weights()
    scores = _scores_if_needed(config, network, dataset, (method,))

    if method == faults.STRATEGY_RANDOM:
        rng = np.random.Generator(
            np.random.PCG64(derive_seed(config.seed, "protection", method))
        )
        order = rng.permutation(index.total)
    elif method == faults.STRATEGY_MAGNITUDE:
        order = lrp.rank_descending(np.abs(weights_flat.astype(np.float64)))
    elif method == faults.STRATEGY_XAI:
        order = lrp.rank_descending(scores.scores)
    else:
        raise ValueError(f"unknown selection method {method!r}")

    nbf = faults.fault_count(ber, index.total)
    n_run = 1 if nbf == 0 else config.trials
    plans = []
    for t in range(n_run):
        seed_used = derive_seed(config.seed, EXPERIMENT_MIN_PROTECT, method, 0, t)
        plans.append(
            faults.plan_injection(
                index.total, ber,
                faults.InjectionStrategy(
                    kind=faults.STRATEGY_RANDOM, bit_mode=config.bit_mode
                ),
                weights_flat, seed_used,
            )
        )

    rows = []
    for fraction in MIN_PROTECT_GRID:
        k = 0 if fraction == 0 else lrp.top_fraction_count(index.total, fraction)
        pset = ProtectionSet(indices=np.sort(order[:k]), fraction=float(fraction))
        protected = tmr.protect(network, pset)
        accs = []
        losses = []
        for plan in plans:
            ev = nncore.evaluate(tmr.resolve(faults.apply_faults(protected, plan)[0]), dataset)
            accs.append(ev.accuracy)
            losses.append(ev.mean_loss)
        accs = np.array(accs, dtype=np.float64)
        losses = np.array(losses, dtype=np.float64)
        loss = baseline.accuracy - float(accs.mean())
        rows.append(
            {
                "fraction": fraction,
                "protected_count": k,
                "nbf": nbf,
                "trials_effective": n_run,
                "mean_accuracy": float(accs.mean()),
                "std_accuracy": float(accs.std(ddof=1)) if len(accs) > 1 else 0.0,
                "mean_loss": float(losses.mean()),
                "std_loss": float(losses.std(ddof=1)) if len(losses) > 1 else 0.0,
                "accuracy_loss": loss,
                "meets_target": loss <= config.target_accuracy_loss,
                "overhead": tmr.memory_overhead(protected).as_dict(),
            }
        )

    warnings = []
    for lo, hi in zip(rows, rows[1:]):
        if lo["meets_target"] and not hi["meets_target"]:
            warnings.append(
                f"noise: fraction {lo['fraction']} meets the target but "
                f"fraction {hi['fraction']} does not"
            )
    chosen = next((r for r in rows if r["meets_target"]), None)
    achieved = chosen is not None
    if not achieved:
        chosen = rows[-1]
    overhead = tmr.OverheadReport(
        base_bytes=chosen["overhead"]["base_bytes"],
        replica_bytes=chosen["overhead"]["replica_bytes"],
        index_bytes=chosen["overhead"]["index_bytes"],
    )
    return MinProtectResult(
        method=method,
        ber=float(ber),
        fraction=chosen["fraction"],
        achieved=achieved,
        overhead=overhead,
        rows=rows,
        warnings=warnings,
    )


def run_min_protect(config: CampaignConfig, ber: float | None = None) -> CampaignReport:
    """Fraction search for every configured method, packaged as a report."""
    results = [find_min_protection(config, m, ber) for m in config.strategies]
    network, dataset = _load(config)
    baseline = nncore.evaluate(network, dataset)
    cells = []
    for res in results:
        for row in res.rows:
            collapsed = row["trials_effective"] == 1 and config.trials > 1
            cells.append(
                {
                    "experiment": EXPERIMENT_MIN_PROTECT,
                    "strategy": f"{res.method}_f={row['fraction']!r}",
                    "ber": res.ber,
                    "nbf": row["nbf"],
                    "trials": config.trials,
                    "trials_effective": row["trials_effective"],
                    "mean_accuracy": row["mean_accuracy"],
                    "std_accuracy": row["std_accuracy"],
                    "mean_loss": row["mean_loss"],
                    "std_loss": row["std_loss"],
                    "note": COLLAPSE_NOTE if collapsed else None,
                }
            )
    return CampaignReport(
        experiment=EXPERIMENT_MIN_PROTECT,
        config=config.describe(),
        baseline_accuracy=baseline.accuracy,
        baseline_loss=baseline.mean_loss,
        cells=cells,
        trial_results=[],
        min_protect=[r.as_dict() for r in results],
    )


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: CampaignReport, out_dir) -> dict:
    """Write report.json, curves.csv, overhead.csv and summary.txt.

    JSON keys are sorted and floats use their shortest round-trip form, so
    identical reports serialize to identical bytes.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "report": out_dir / "report.json",
            "curves": out_dir / "curves.csv",
            "overhead": out_dir / "overhead.csv",
            "summary": out_dir / "summary.txt",
        }
        paths["report"].write_text(
            json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
        )
        with paths["curves"].open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CURVE_COLUMNS)
            for cell in report.cells:
                writer.writerow([_csv_cell(cell[c]) for c in CURVE_COLUMNS])
        with paths["overhead"].open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(OVERHEAD_COLUMNS)
            for row in _overhead_rows(report):
                writer.writerow([_csv_cell(v) for v in row])
        paths["summary"].write_text(_summary_text(report))
    except OSError as e:
        raise OSError(f"failed writing report under {out_dir}: {e}") from e
    return paths


def _overhead_rows(report: CampaignReport):
    if report.experiment == EXPERIMENT_TMR and report.overhead:
        fraction = report.config.get("protection_fraction")
        for method in report.config.get("strategies", []):
            o = report.overhead
            yield (report.experiment, method, fraction, o["base_bytes"],
                   o["replica_bytes"], o["index_bytes"], o["percent_overhead"])
    elif report.experiment == EXPERIMENT_MIN_PROTECT and report.min_protect:
        for res in report.min_protect:
            for row in res["rows"]:
                o = row["overhead"]
                yield (report.experiment, res["method"], row["fraction"],
                       o["base_bytes"], o["replica_bytes"], o["index_bytes"],
                       o["percent_overhead"])


def _summary_text(report: CampaignReport) -> str:
    lines = [
        f"experiment: {report.experiment}",
        f"baseline accuracy: {report.baseline_accuracy:.4f}",
        f"baseline loss: {report.baseline_loss:.6f}",
    ]
    if report.experiment == EXPERIMENT_SENSITIVITY:
        for cell in report.cells:
            lines.append(
                f"  {cell['strategy']:>10s} ber={cell['ber']:g}: "
                f"accuracy {cell['mean_accuracy']:.4f} "
                f"loss {cell['mean_loss']:.6f} (nbf={cell['nbf']})"
            )
    elif report.experiment == EXPERIMENT_TMR:
        by_ber: dict = {}
        for cell in report.cells:
            if cell["strategy"].endswith("_unprotected"):
                continue
            by_ber.setdefault(cell["ber"], []).append(cell)
        for ber, group in by_ber.items():
            best = max(group, key=lambda c: c["mean_accuracy"])
            lines.append(
                f"  ber={ber:g}: best method {best['strategy']} "
                f"(accuracy {best['mean_accuracy']:.4f})"
            )
        if report.reliability_improvement:
            for entry in report.reliability_improvement:
                lines.append(
                    f"  reliability gain {entry['strategy']} ber={entry['ber']:g}: "
                    f"{entry['accuracy_points']:+.2f} accuracy points"
                )
        if report.overhead:
            lines.append(
                f"  overhead: {report.overhead['percent_overhead']:.4f}% "
                f"({report.overhead['replica_bytes']} replica bytes + "
                f"{report.overhead['index_bytes']} index bytes)"
            )
    elif report.experiment == EXPERIMENT_MIN_PROTECT and report.min_protect:
        for res in report.min_protect:
            status = "achieved" if res["achieved"] else "NOT achieved"
            lines.append(
                f"  {res['method']}: fraction {res['fraction']} ({status}) "
                f"overhead {res['overhead']['percent_overhead']:.4f}%"
            )
            for w in res["warnings"]:
                lines.append(f"    warning: {w}")
    return "\n".join(lines) + "\n"

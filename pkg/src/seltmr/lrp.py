"""Backward relevance propagation and relevance-based weight scoring.

Relevance starts at the predicted-class logit and flows backward through the
network: dense layers redistribute it with the epsilon rule, convolutions
with the gamma rule (positive weights amplified by ``1 + gamma``), max-pool
windows hand everything to their winning input, and ReLU/Flatten/Softmax
pass it through unchanged. With the stabilizer at zero the total relevance
at every layer interface equals the seeded output value.

Per-weight criticality is the mean absolute relevance message carried by
that weight edge over a calibration set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import _kernels, nncore
from .errors import RelevanceError
from .modelio import GlobalWeightIndex
from .nncore import ForwardTrace, LabeledDataset, Network

RULE_EPSILON = "epsilon"
RULE_GAMMA = "gamma"
RULE_PASS = "pass"
RULE_WINNER = "winner"

_DEFAULT_RULES = {
    nncore.KIND_DENSE: RULE_EPSILON,
    nncore.KIND_CONV2D: RULE_GAMMA,
    nncore.KIND_RELU: RULE_PASS,
    nncore.KIND_FLATTEN: RULE_PASS,
    nncore.KIND_SOFTMAX: RULE_PASS,
    nncore.KIND_MAXPOOL: RULE_WINNER,
}


def exact_fraction(x) -> Fraction:
    """Read a ratio argument at its decimal face value.

    Floats go through their shortest round-trip repr, so 0.01 means 1/100
    (not the nearest binary64), which keeps ceil/round boundary cases exact.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


@dataclass(frozen=True)
class LrpRuleConfig:
    """Rule assignment and stabilizer constants for the backward pass."""

    epsilon: float = 1e-6
    gamma: float = 0.25
    rule_per_layer_kind: dict | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        # overrides sit on top of the defaults, so assigning one kind does not
        # strip the rules from every other kind
        merged = dict(_DEFAULT_RULES)
        merged.update(self.rule_per_layer_kind or {})
        object.__setattr__(self, "rule_per_layer_kind", merged)
        for kind, rule in self.rule_per_layer_kind.items():
            if rule not in (RULE_EPSILON, RULE_GAMMA, RULE_PASS, RULE_WINNER):
                raise ValueError(f"unknown rule {rule!r} for layer kind {kind!r}")

    def rule_for(self, kind: str) -> str:
        try:
            return self.rule_per_layer_kind[kind]
        except KeyError:
            raise RelevanceError(f"no relevance rule configured for layer kind {kind!r}")

    def describe(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "rule_per_layer_kind": dict(sorted(self.rule_per_layer_kind.items())),
        }


@dataclass
class RelevanceMap:
    """Relevance at every layer interface.

    ``per_layer_relevance[0]`` mirrors the network input; entry ``i + 1``
    mirrors the output of layer ``i``. All arrays are float64.
    """

    per_layer_relevance: list[np.ndarray]
    output_relevance: float

    def layer_sums(self) -> list[float]:
        return [float(r.sum()) for r in self.per_layer_relevance]


@dataclass
class WeightScores:
    """One nonnegative criticality score per global weight index."""

    scores: np.ndarray
    calibration_size: int

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 1:
            raise ValueError("scores must be a flat array")


@dataclass
class ProtectionSet:
    """Global weight indices chosen for hardening (ascending order)."""

    indices: np.ndarray
    fraction: float

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.indices.size)


def _check_trace(network: Network, trace: ForwardTrace) -> None:
    if len(trace.activations) != len(network.layers):
        raise RelevanceError(
            f"trace has {len(trace.activations)} layer activations, "
            f"network has {len(network.layers)} layers"
        )
    if tuple(trace.input.shape) != network.input_shape:
        raise RelevanceError(
            f"trace input shape {tuple(trace.input.shape)} != network input "
            f"shape {network.input_shape}"
        )
    for i, (act, want) in enumerate(zip(trace.activations, network.layer_output_shapes)):
        if tuple(act.shape) != want:
            raise RelevanceError(
                f"trace activation {i} has shape {tuple(act.shape)}, layer "
                f"produces {want}"
            )


def _zero_bias(layer) -> np.ndarray:
    if layer.bias is not None:
        return layer.bias
    n = layer.weights.shape[0]
    return np.zeros(n, dtype=np.float32)


def _backward(
    network: Network,
    trace: ForwardTrace,
    rules: LrpRuleConfig,
    target_class: int | None,
    score_arrays: list | None,
) -> RelevanceMap:
    _check_trace(network, trace)
    target = trace.predicted_class if target_class is None else int(target_class)
    if not 0 <= target < network.num_classes:
        raise RelevanceError(f"target class {target} outside [0, {network.num_classes})")
    seed = float(trace.logits[target])

    n = len(network.layers)
    rels: list = [None] * (n + 1)
    rel = np.zeros(network.layer_output_shapes[-1], dtype=np.float64)
    rel[target] = seed
    rels[n] = rel

    weighted_seen = 0
    for i in range(n - 1, -1, -1):
        layer = network.layers[i]
        x = trace.input if i == 0 else trace.activations[i - 1]
        rel_out = rels[i + 1]
        rule = rules.rule_for(layer.kind)
        if layer.kind in nncore.WEIGHTED_KINDS:
            use_gamma = rule == RULE_GAMMA
            if score_arrays is None:
                acc = _EMPTY_SCORES[layer.kind]
                want = False
            else:
                weighted_seen += 1
                acc = score_arrays[len(score_arrays) - weighted_seen]
                want = True
            if layer.kind == nncore.KIND_DENSE:
                rel_in, bad = _kernels.dense_relevance(
                    x, layer.weights, _zero_bias(layer), rel_out,
                    rules.epsilon, rules.gamma, use_gamma, acc, want,
                )
            else:
                rel_in, bad = _kernels.conv2d_relevance(
                    x, layer.weights, _zero_bias(layer), rel_out,
                    layer.stride, layer.padding,
                    rules.epsilon, rules.gamma, use_gamma, acc, want,
                )
            if bad >= 0:
                raise RelevanceError(
                    f"layer {i} ({layer.kind}): neuron {bad} has zero denominator; "
                    f"set epsilon > 0 to stabilize"
                )
        elif rule == RULE_WINNER:
            rel_in = _kernels.maxpool_relevance(x, layer.pool, rel_out)
        elif layer.kind == nncore.KIND_FLATTEN:
            rel_in = rel_out.reshape(x.shape)
        else:  # pass-through (relu, softmax)
            rel_in = rel_out.copy()
        rels[i] = rel_in

    return RelevanceMap(per_layer_relevance=rels, output_relevance=seed)


# Placeholder accumulators handed to the kernels when scoring is off; one per
# weighted kind so the compiled signatures keep a consistent dimensionality.
_EMPTY_SCORES = {
    nncore.KIND_DENSE: np.zeros((1, 1), dtype=np.float64),
    nncore.KIND_CONV2D: np.zeros((1, 1, 1, 1), dtype=np.float64),
}


def propagate_relevance(
    network: Network,
    trace: ForwardTrace,
    rules: LrpRuleConfig | None = None,
    target_class: int | None = None,
) -> RelevanceMap:
    """Backward pass from the predicted-class logit (or ``target_class``)."""
    return _backward(network, trace, rules or LrpRuleConfig(), target_class, None)


def score_weights(
    network: Network,
    calibration: LabeledDataset,
    rules: LrpRuleConfig | None = None,
    target_class: int | None = None,
) -> WeightScores:
    """Mean absolute per-edge relevance message over the calibration set.

    Deterministic for a fixed calibration order; the mean itself is
    order-independent because every sample's contribution is accumulated
    into a per-edge float64 bucket before the single final division.
    """
    rules = rules or LrpRuleConfig()
    if len(calibration) == 0:
        raise ValueError("calibration set is empty")
    index = GlobalWeightIndex(network)
    score_arrays = [
        np.zeros(network.layers[li].weights.shape, dtype=np.float64)
        for li in index.layer_indices
    ]
    for s in range(len(calibration)):
        trace = nncore.forward(network, calibration.inputs[s])
        _backward(network, trace, rules, target_class, score_arrays)
    flat = np.concatenate([a.ravel() for a in score_arrays]) / len(calibration)
    if not np.all(np.isfinite(flat)):
        raise RelevanceError("non-finite relevance scores; check for overflow")
    if flat.size != index.total:
        raise RelevanceError(
            f"scored {flat.size} weights, network has {index.total}"
        )
    return WeightScores(scores=flat, calibration_size=len(calibration))


def rank_descending(key: np.ndarray) -> np.ndarray:
    """Indices sorted by key descending, ties broken by ascending index."""
    key = np.asarray(key, dtype=np.float64)
    return np.lexsort((np.arange(key.size), -key))


def top_fraction_count(total: int, fraction) -> int:
    frac = exact_fraction(fraction)
    if not 0 < frac <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    return math.ceil(frac * total)


def select_top_fraction(scores: WeightScores, fraction) -> ProtectionSet:
    """The ceil(fraction x NT) highest-scoring global weight indices."""
    k = top_fraction_count(scores.scores.size, fraction)
    order = rank_descending(scores.scores)
    chosen = np.sort(order[:k])
    return ProtectionSet(indices=chosen, fraction=float(exact_fraction(fraction)))


def save_scores(ws: WeightScores, path, model_hash: str, rules: LrpRuleConfig) -> None:
    """Flat float64 binary plus a JSON sidecar describing its provenance."""
    path = Path(path)
    path.write_bytes(ws.scores.astype("<f8").tobytes())
    sidecar = {
        "model_hash": model_hash,
        "calibration_size": ws.calibration_size,
        "rules": rules.describe()["rule_per_layer_kind"],
        "epsilon": rules.epsilon,
        "gamma": rules.gamma,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_scores(path) -> tuple[WeightScores, dict]:
    path = Path(path)
    sidecar = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    return (
        WeightScores(scores=raw.copy(), calibration_size=int(sidecar["calibration_size"])),
        sidecar,
    )

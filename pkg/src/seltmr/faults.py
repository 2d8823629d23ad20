"""Single-bit-flip fault model on binary32 weights and BER-driven planning.

A fault is an XOR of one bit of a weight's IEEE-754 representation — never
an operation on its numeric value. Plans pin down every flip (which weight,
which replica copy, which bit) before anything is touched, so a trial is
reproducible from its seed alone and the same plan can be replayed onto
protected and unprotected models.

BER follows the per-weight reading: ``nbf = round(ber * NT)`` weights each
receive one flipped bit. The per-bit reading (``round(ber * 32 * NT)``,
capped at one flip per weight) sits behind ``InjectionStrategy.per_bit``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import PlanError
from .lrp import WeightScores, exact_fraction, rank_descending
from .modelio import GlobalWeightIndex
from .nncore import Network
from .tmr import ProtectedModel

REPLICA_ORIGINAL = "original"
REPLICA_R1 = "r1"
REPLICA_R2 = "r2"
REPLICAS = (REPLICA_ORIGINAL, REPLICA_R1, REPLICA_R2)

STRATEGY_RANDOM = "random"
STRATEGY_MAGNITUDE = "magnitude"
STRATEGY_XAI = "xai"
STRATEGIES = (STRATEGY_RANDOM, STRATEGY_MAGNITUDE, STRATEGY_XAI)

BIT_FIXED29 = "fixed29"
BIT_UNIFORM = "uniform"
DEFAULT_BIT = 29


def flip_bit(value, bit_index: int) -> np.float32:
    """XOR one bit of the binary32 representation of ``value``."""
    if not 0 <= bit_index <= 31:
        raise ValueError(f"bit_index must be in [0, 31], got {bit_index}")
    word = np.float32(value).view(np.uint32)
    return np.uint32(word ^ np.uint32(1 << bit_index)).view(np.float32)


@dataclass(frozen=True)
class BitFlip:
    weight_index: int
    replica: str
    bit_index: int

    def __post_init__(self):
        if self.replica not in REPLICAS:
            raise PlanError(f"unknown replica {self.replica!r}")
        if not 0 <= self.bit_index <= 31:
            raise PlanError(f"bit_index must be in [0, 31], got {self.bit_index}")
        if self.weight_index < 0:
            raise PlanError(f"negative weight index {self.weight_index}")


@dataclass(frozen=True)
class FlipRecord:
    """One applied flip, with before/after bit patterns for audit."""

    weight_index: int
    replica: str
    bit_index: int
    before_hex: str
    after_hex: str


@dataclass
class FaultPlan:
    flips: list
    ber: float
    nt: int
    nbf: int
    strategy: str
    seed: int
    clamped: bool = False
    per_bit: bool = False
    # Storage-word count when the plan was drawn over base + replica words;
    # None for plain weight-targeted plans.
    words: int | None = None

    def __post_init__(self):
        if self.nbf != len(self.flips):
            raise PlanError(f"nbf {self.nbf} != number of flips {len(self.flips)}")
        keys = {(f.weight_index, f.replica, f.bit_index) for f in self.flips}
        if len(keys) != len(self.flips):
            raise PlanError("duplicate (weight, replica, bit) entries in plan")


@dataclass
class InjectionStrategy:
    """How fault targets are chosen and which bit of each target flips."""

    kind: str
    scores: WeightScores | None = None
    bit_mode: str = BIT_FIXED29
    per_bit: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise PlanError(f"unknown strategy {self.kind!r}")
        if self.bit_mode not in (BIT_FIXED29, BIT_UNIFORM):
            raise PlanError(f"unknown bit mode {self.bit_mode!r}")


def fault_count(ber, population: int) -> int:
    """round(ber x population), computed exactly (round half to even)."""
    frac = exact_fraction(ber)
    if not 0 <= frac <= 1:
        raise ValueError(f"ber must be in [0, 1], got {ber}")
    return round(frac * population)


def _draw_bits(rng: np.random.Generator, n: int, bit_mode: str) -> np.ndarray:
    if bit_mode == BIT_FIXED29:
        return np.full(n, DEFAULT_BIT, dtype=np.int64)
    return rng.integers(0, 32, size=n)


def plan_injection(
    nt: int,
    ber,
    strategy: InjectionStrategy,
    weights: np.ndarray,
    seed: int,
) -> FaultPlan:
    """Choose nbf = round(ber x NT) target weights and one bit for each.

    random: distinct indices drawn uniformly from the seeded generator;
    magnitude: largest |value| first; xai: highest score first. Magnitude
    and score ties break toward the lower index.
    """
    if nt <= 0:
        raise ValueError(f"nt must be positive, got {nt}")
    population = 32 * nt if strategy.per_bit else nt
    nbf = fault_count(ber, population)
    clamped = nbf > nt
    if clamped:
        nbf = nt
    rng = np.random.Generator(np.random.PCG64(seed))
    if strategy.kind == STRATEGY_RANDOM:
        targets = rng.choice(nt, size=nbf, replace=False)
    elif strategy.kind == STRATEGY_MAGNITUDE:
        weights = np.asarray(weights)
        if weights.size != nt:
            raise PlanError(f"magnitude strategy: got {weights.size} weights for nt={nt}")
        targets = rank_descending(np.abs(weights.astype(np.float64)))[:nbf]
    else:  # xai
        if strategy.scores is None:
            raise PlanError("xai strategy requires weight scores")
        if strategy.scores.scores.size != nt:
            raise PlanError(
                f"xai strategy: {strategy.scores.scores.size} scores for nt={nt}"
            )
        targets = rank_descending(strategy.scores.scores)[:nbf]
    bits = _draw_bits(rng, nbf, strategy.bit_mode)
    flips = [
        BitFlip(weight_index=int(w), replica=REPLICA_ORIGINAL, bit_index=int(b))
        for w, b in zip(targets, bits)
    ]
    return FaultPlan(
        flips=flips,
        ber=float(ber),
        nt=nt,
        nbf=nbf,
        strategy=strategy.kind,
        seed=seed,
        clamped=clamped,
        per_bit=strategy.per_bit,
    )


def plan_storage_injection(
    nt: int,
    protected_indices: np.ndarray,
    ber,
    seed: int,
    bit_mode: str = BIT_FIXED29,
) -> FaultPlan:
    """Uniform fault placement over all storage words, replicas included.

    The word population is NT originals plus two replicas per protected
    weight; nbf = round(ber x words). Replica words map onto (weight, r1/r2)
    flips, so protecting a weight never shields its physical storage.
    """
    protected_indices = np.asarray(protected_indices, dtype=np.int64)
    words = nt + 2 * protected_indices.size
    nbf = fault_count(ber, words)
    rng = np.random.Generator(np.random.PCG64(seed))
    chosen = rng.choice(words, size=nbf, replace=False)
    bits = _draw_bits(rng, nbf, bit_mode)
    flips = []
    for wid, b in zip(chosen, bits):
        wid = int(wid)
        if wid < nt:
            flips.append(BitFlip(wid, REPLICA_ORIGINAL, int(b)))
        else:
            slot, r = divmod(wid - nt, 2)
            flips.append(
                BitFlip(int(protected_indices[slot]), REPLICA_R1 if r == 0 else REPLICA_R2, int(b))
            )
    return FaultPlan(
        flips=flips,
        ber=float(ber),
        nt=nt,
        nbf=nbf,
        strategy=STRATEGY_RANDOM,
        seed=seed,
        words=words,
    )


def restrict_to_original(plan: FaultPlan) -> FaultPlan:
    """The same physical fault pattern seen by an unprotected deployment.

    Keeps exactly the flips that land in base words; replica words do not
    exist without protection, so their faults vanish rather than relocate.
    """
    kept = [f for f in plan.flips if f.replica == REPLICA_ORIGINAL]
    return replace(plan, flips=kept, nbf=len(kept), words=None)


def apply_faults(model, plan: FaultPlan):
    """Apply a plan to a fresh copy; the input model is never touched.

    Returns ``(mutated copy, log)`` where the log holds one FlipRecord per
    flip with before/after bit patterns.
    """
    protected = isinstance(model, ProtectedModel)
    out = model.clone()
    net: Network = out.base if protected else out
    index = GlobalWeightIndex(net)
    log: list[FlipRecord] = []
    for f in plan.flips:
        if f.weight_index >= index.total:
            raise PlanError(
                f"plan targets weight {f.weight_index}, model has {index.total}"
            )
        if f.replica == REPLICA_ORIGINAL:
            li, pos = index.locate(f.weight_index)
            flat = net.layers[li].weights.reshape(-1)
            before = np.float32(flat[pos])
            after = flip_bit(before, f.bit_index)
            flat[pos] = after
        else:
            if not protected:
                raise PlanError(
                    f"plan names replica {f.replica} of weight {f.weight_index} "
                    f"but the model is unprotected"
                )
            slot = out.replica_slot(f.weight_index)
            col = 0 if f.replica == REPLICA_R1 else 1
            before = np.float32(out.side[slot, col])
            after = flip_bit(before, f.bit_index)
            out.side[slot, col] = after
        log.append(
            FlipRecord(
                weight_index=f.weight_index,
                replica=f.replica,
                bit_index=f.bit_index,
                before_hex=f"{before.view(np.uint32):08x}",
                after_hex=f"{after.view(np.uint32):08x}",
            )
        )
    return out, log


def save_plan(plan: FaultPlan, path) -> None:
    """One JSON object per flip; before/after are null until applied."""
    _write_jsonl(path, plan.flips, before=None, after=None)


def save_log(records: list, path) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {
                "weight_index": r.weight_index,
                "replica": r.replica,
                "bit_index": r.bit_index,
                "before_hex": r.before_hex,
                "after_hex": r.after_hex,
            },
            sort_keys=True,
        )
        for r in records
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _write_jsonl(path, flips, before, after) -> None:
    path = Path(path)
    lines = [
        json.dumps(
            {
                "weight_index": f.weight_index,
                "replica": f.replica,
                "bit_index": f.bit_index,
                "before_hex": before,
                "after_hex": after,
            },
            sort_keys=True,
        )
        for f in flips
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def load_plan(path, nt: int | None = None) -> FaultPlan:
    """Rebuild an applicable plan from a JSON-lines flip file.

    Planning metadata (ber, strategy, seed) is not stored in the file; the
    result carries placeholder values and is only good for apply_faults.
    """
    path = Path(path)
    flips = []
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            flips.append(
                BitFlip(
                    weight_index=int(obj["weight_index"]),
                    replica=str(obj["replica"]),
                    bit_index=int(obj["bit_index"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise PlanError(f"{path}:{ln}: bad plan line: {e}") from e
    if nt is None:
        nt = 1 + max((f.weight_index for f in flips), default=0)
    return FaultPlan(
        flips=flips,
        ber=0.0,
        nt=nt,
        nbf=len(flips),
        strategy=STRATEGY_RANDOM,
        seed=0,
    )

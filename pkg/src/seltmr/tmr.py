"""Selective triple modular redundancy over network weights.

Protected weights get three bit-identical copies: the in-place original plus
two side-table replicas. Reads are resolved once per evaluation pass by
majority vote, so any single corrupted copy is outvoted. Voting is per-bit
over the three binary32 words, which coincides with value-level majority
whenever at least two copies agree and still produces a defined word when
all three disagree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PlanError
from .lrp import ProtectionSet
from .modelio import GlobalWeightIndex
from .nncore import Network

VOTING_POLICY = "value_majority_with_bitwise_fallback"


@dataclass(frozen=True)
class ReplicaTriple:
    """w1 is the in-place original; w2 and w3 live in the side table."""

    w1: np.float32
    w2: np.float32
    w3: np.float32


@dataclass
class OverheadReport:
    """Memory cost of a protection choice, in bytes of weight storage."""

    base_bytes: int
    replica_bytes: int
    index_bytes: int

    @property
    def replica_percent(self) -> float:
        return self.replica_bytes * 100 / self.base_bytes

    @property
    def index_percent(self) -> float:
        return self.index_bytes * 100 / self.base_bytes

    @property
    def percent_overhead(self) -> float:
        return (self.replica_bytes + self.index_bytes) * 100 / self.base_bytes

    def as_dict(self) -> dict:
        return {
            "base_bytes": self.base_bytes,
            "replica_bytes": self.replica_bytes,
            "index_bytes": self.index_bytes,
            "replica_percent": self.replica_percent,
            "index_percent": self.index_percent,
            "percent_overhead": self.percent_overhead,
        }


@dataclass
class ProtectedModel:
    """A network plus replica storage for its protected weights.

    ``side[j]`` holds replicas 2 and 3 of weight ``protection.indices[j]``;
    replica 1 is the weight itself inside ``base``.
    """

    base: Network
    protection: ProtectionSet
    side: np.ndarray
    voting: str = VOTING_POLICY
    _index: GlobalWeightIndex = field(init=False, repr=False)

    def __post_init__(self):
        self._index = GlobalWeightIndex(self.base)

    def clone(self) -> "ProtectedModel":
        return ProtectedModel(
            base=self.base.clone(),
            protection=ProtectionSet(
                indices=self.protection.indices.copy(),
                fraction=self.protection.fraction,
            ),
            side=self.side.copy(),
            voting=self.voting,
        )

    def replica_slot(self, weight_index: int) -> int:
        """Row in the side table for a protected weight; PlanError otherwise."""
        j = int(np.searchsorted(self.protection.indices, weight_index))
        if j >= len(self.protection.indices) or self.protection.indices[j] != weight_index:
            raise PlanError(f"weight {weight_index} is not protected")
        return j

    def triple(self, weight_index: int) -> ReplicaTriple:
        j = self.replica_slot(weight_index)
        w1 = self._index.gather(np.array([weight_index]))[0]
        return ReplicaTriple(w1=w1, w2=self.side[j, 0], w3=self.side[j, 1])

    def replicas(self) -> dict:
        """weight_index -> ReplicaTriple view of the side table."""
        return {int(wi): self.triple(int(wi)) for wi in self.protection.indices}


def protect(network: Network, w_top: ProtectionSet) -> ProtectedModel:
    """Replicate every selected weight into a bit-identical triple."""
    indices = np.asarray(w_top.indices, dtype=np.int64)
    index = GlobalWeightIndex(network)
    if indices.size:
        if np.unique(indices).size != indices.size:
            raise PlanError("protection set contains duplicate indices")
        if indices.min() < 0 or indices.max() >= index.total:
            raise PlanError(
                f"protection index outside [0, {index.total})"
            )
    base = network.clone()
    values = GlobalWeightIndex(base).gather(indices)
    side = np.stack([values, values], axis=1) if indices.size else np.empty(
        (0, 2), dtype=np.float32
    )
    return ProtectedModel(
        base=base,
        protection=ProtectionSet(indices=np.sort(indices), fraction=w_top.fraction),
        side=side,
    )


def majority_vote(w1, w2, w3):
    """Per-bit majority of three binary32 words.

    Scalars in, float32 scalar out; arrays in, float32 array out. When two
    or more inputs share a bit pattern the result is exactly that pattern.
    """
    a = np.asarray(w1, dtype=np.float32).view(np.uint32)
    b = np.asarray(w2, dtype=np.float32).view(np.uint32)
    c = np.asarray(w3, dtype=np.float32).view(np.uint32)
    voted = ((a & b) | (a & c) | (b & c)).view(np.float32)
    return voted if voted.ndim else np.float32(voted[()])


def resolve(model: ProtectedModel) -> Network:
    """Plain network whose protected slots hold the voted effective weights."""
    out = model.base.clone()
    if len(model.protection):
        index = GlobalWeightIndex(out)
        w1 = index.gather(model.protection.indices)
        voted = majority_vote(w1, model.side[:, 0], model.side[:, 1])
        index.scatter(model.protection.indices, voted)
    return out


def memory_overhead(model: ProtectedModel) -> OverheadReport:
    """4 bytes per base weight, 8 per protected replica pair, 4 per index."""
    k = len(model.protection)
    return OverheadReport(
        base_bytes=4 * model._index.total,
        replica_bytes=8 * k,
        index_bytes=4 * k,
    )

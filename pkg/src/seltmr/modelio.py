"""Portable model/dataset containers and the global weight index.

Model container: a directory holding ``manifest.json`` plus ``weights.bin``.
The blob concatenates each layer's weight tensor then its bias tensor as raw
little-endian IEEE-754 binary32 values in row-major order; the manifest
records byte offsets, shapes, hyperparameters and a 64-bit content hash of
the blob (first 8 bytes of its SHA-256, hex-encoded).

Dataset file (``.nnd``): magic ``NND1``, then u32 sample_count, u32 rank,
rank x u32 dims, sample_count x prod(dims) little-endian binary32 values,
then sample_count x u32 labels.

The global weight index enumerates weight locations flat across the network:
layers in order, each weight tensor row-major, biases excluded. Every module
that names "weight i" uses this enumeration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nncore
from .errors import FormatError, HashMismatchError, ShapeError, TruncatedBlobError
from .nncore import Layer, Network

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
BLOB_NAME = "weights.bin"
DATASET_MAGIC = b"NND1"


def blob_hash(blob: bytes) -> str:
    """64-bit content hash: first 8 bytes of SHA-256, hex."""
    return hashlib.sha256(blob).hexdigest()[:16]


def network_hash(network: Network) -> str:
    """Content hash over structure and all parameters (weights and biases)."""
    h = hashlib.sha256()
    h.update(repr((network.input_shape, network.num_classes)).encode())
    for layer in network.layers:
        h.update(repr((layer.kind, layer.stride, layer.padding, layer.pool)).encode())
        if layer.weights is not None:
            h.update(layer.weights.astype("<f4").tobytes())
        if layer.bias is not None:
            h.update(layer.bias.astype("<f4").tobytes())
    return h.hexdigest()[:16]


class GlobalWeightIndex:
    """Bijection between flat weight indices [0, NT) and layer positions."""

    def __init__(self, network: Network):
        self.network = network
        self.layer_indices: list[int] = []
        self.sizes: list[int] = []
        for li, layer in enumerate(network.layers):
            if layer.kind in nncore.WEIGHTED_KINDS:
                self.layer_indices.append(li)
                self.sizes.append(int(layer.weights.size))
        self.offsets = np.concatenate(([0], np.cumsum(self.sizes))).astype(np.int64)
        self.total = int(self.offsets[-1])

    def locate(self, flat: int) -> tuple[int, int]:
        """flat index -> (layer index, row-major position within that tensor)."""
        if not 0 <= flat < self.total:
            raise IndexError(f"weight index {flat} outside [0, {self.total})")
        seg = int(np.searchsorted(self.offsets, flat, side="right")) - 1
        return self.layer_indices[seg], int(flat - self.offsets[seg])

    def flat_index(self, layer_index: int, position: int) -> int:
        seg = self.layer_indices.index(layer_index)
        if not 0 <= position < self.sizes[seg]:
            raise IndexError(f"position {position} outside layer {layer_index}")
        return int(self.offsets[seg]) + position

    def flatten_weights(self) -> np.ndarray:
        """Copy of all weights as one float32 vector in enumeration order."""
        if not self.layer_indices:
            return np.empty(0, dtype=np.float32)
        return np.concatenate(
            [self.network.layers[li].weights.ravel() for li in self.layer_indices]
        )

    def segments(self, indices: np.ndarray):
        """Group sorted flat indices by layer: yields (layer_index, positions)."""
        indices = np.asarray(indices, dtype=np.int64)
        for seg, li in enumerate(self.layer_indices):
            lo, hi = self.offsets[seg], self.offsets[seg + 1]
            mask = (indices >= lo) & (indices < hi)
            if mask.any():
                yield li, (indices[mask] - lo)

    def gather(self, indices: np.ndarray) -> np.ndarray:
        """Weight values at the given flat indices (float32, same order)."""
        indices = np.asarray(indices, dtype=np.int64)
        out = np.empty(indices.size, dtype=np.float32)
        for seg, li in enumerate(self.layer_indices):
            lo, hi = self.offsets[seg], self.offsets[seg + 1]
            mask = (indices >= lo) & (indices < hi)
            if mask.any():
                out[mask] = self.network.layers[li].weights.reshape(-1)[indices[mask] - lo]
        if indices.size and ((indices < 0).any() or (indices >= self.total).any()):
            raise IndexError("weight index outside [0, NT)")
        return out

    def scatter(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Write float32 values into the network at the given flat indices."""
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float32)
        if indices.size and ((indices < 0).any() or (indices >= self.total).any()):
            raise IndexError("weight index outside [0, NT)")
        for seg, li in enumerate(self.layer_indices):
            lo, hi = self.offsets[seg], self.offsets[seg + 1]
            mask = (indices >= lo) & (indices < hi)
            if mask.any():
                self.network.layers[li].weights.reshape(-1)[indices[mask] - lo] = values[mask]


def _layer_manifest(layer: Layer, cursor: int, chunks: list[bytes]) -> tuple[dict, int]:
    entry: dict = {"kind": layer.kind}
    if layer.kind == nncore.KIND_CONV2D:
        entry["stride"] = layer.stride
        entry["padding"] = layer.padding
    if layer.kind == nncore.KIND_MAXPOOL:
        entry["pool"] = layer.pool
    for name, arr in (("weights", layer.weights), ("bias", layer.bias)):
        if arr is None:
            entry[name] = None
            continue
        raw = arr.astype("<f4").tobytes()
        chunks.append(raw)
        entry[name] = {
            "shape": list(arr.shape),
            "offset": cursor,
            "length": len(raw),
        }
        cursor += len(raw)
    return entry, cursor


def save_model(network: Network, path) -> str:
    """Write a model container directory; returns the model hash."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    chunks: list[bytes] = []
    cursor = 0
    layer_entries = []
    for layer in network.layers:
        entry, cursor = _layer_manifest(layer, cursor, chunks)
        layer_entries.append(entry)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(network.input_shape),
        "num_classes": network.num_classes,
        "model_hash": blob_hash(blob),
        "layers": layer_entries,
    }
    (path / BLOB_NAME).write_bytes(blob)
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest["model_hash"]


def _read_tensor(blob: bytes, spec: dict, what: str) -> np.ndarray:
    shape = tuple(int(d) for d in spec["shape"])
    offset, length = int(spec["offset"]), int(spec["length"])
    expected = 4 * int(np.prod(shape)) if shape else 4
    if length != expected:
        raise ShapeError(
            f"{what}: declared shape {list(shape)} needs {expected} bytes, manifest says {length}"
        )
    if offset < 0 or offset + length > len(blob):
        raise TruncatedBlobError(
            f"{what}: range [{offset}, {offset + length}) exceeds blob of {len(blob)} bytes"
        )
    arr = np.frombuffer(blob, dtype="<f4", count=length // 4, offset=offset)
    return np.ascontiguousarray(arr.reshape(shape)).astype(np.float32)


def read_model_hash(path) -> str:
    """The manifest's model_hash, without loading the weights."""
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"no {MANIFEST_NAME} under {path}")
    return str(json.loads(manifest_path.read_text())["model_hash"])


def load_model(path) -> Network:
    """Load a model container, verifying the content hash and all shapes."""
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"no {MANIFEST_NAME} under {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest {manifest_path} is not valid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {manifest.get('format_version')}")
    blob = (path / BLOB_NAME).read_bytes()
    actual = blob_hash(blob)
    if actual != manifest["model_hash"]:
        raise HashMismatchError(
            f"weight blob hash {actual} != manifest model_hash {manifest['model_hash']}"
        )
    spans = []
    layers: list[Layer] = []
    for i, entry in enumerate(manifest["layers"]):
        kind = entry["kind"]
        weights = bias = None
        for name in ("weights", "bias"):
            spec = entry.get(name)
            if spec is not None:
                spans.append((int(spec["offset"]), int(spec["offset"]) + int(spec["length"])))
                tensor = _read_tensor(blob, spec, f"layer {i} {name}")
                if name == "weights":
                    weights = tensor
                else:
                    bias = tensor
        if kind == nncore.KIND_DENSE:
            layers.append(nncore.dense(weights, bias))
        elif kind == nncore.KIND_CONV2D:
            layers.append(
                nncore.conv2d(
                    weights,
                    bias,
                    stride=int(entry.get("stride", 1)),
                    padding=int(entry.get("padding", 0)),
                )
            )
        elif kind == nncore.KIND_RELU:
            layers.append(nncore.relu())
        elif kind == nncore.KIND_MAXPOOL:
            layers.append(nncore.maxpool(int(entry.get("pool", 2))))
        elif kind == nncore.KIND_FLATTEN:
            layers.append(nncore.flatten())
        elif kind == nncore.KIND_SOFTMAX:
            layers.append(nncore.softmax())
        else:
            raise FormatError(f"layer {i} has unknown kind {kind!r}")
    spans.sort()
    for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
        if b0 < a1:
            raise FormatError(f"overlapping blob ranges [{a0},{a1}) and [{b0},{b1})")
    return Network(
        layers=layers,
        input_shape=tuple(manifest["input_shape"]),
        num_classes=int(manifest["num_classes"]),
    )


def save_dataset(dataset: nncore.LabeledDataset, path) -> None:
    path = Path(path)
    dims = dataset.sample_shape()
    parts = [
        DATASET_MAGIC,
        np.uint32(len(dataset)).tobytes(),
        np.uint32(len(dims)).tobytes(),
        np.asarray(dims, dtype="<u4").tobytes(),
        dataset.inputs.astype("<f4").tobytes(),
        dataset.labels.astype("<u4").tobytes(),
    ]
    path.write_bytes(b"".join(parts))


def load_dataset(path) -> nncore.LabeledDataset:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {DATASET_MAGIC!r}")
    if len(raw) < 12:
        raise TruncatedBlobError(f"{path}: header truncated at {len(raw)} bytes")
    count = int(np.frombuffer(raw, dtype="<u4", count=1, offset=4)[0])
    rank = int(np.frombuffer(raw, dtype="<u4", count=1, offset=8)[0])
    if len(raw) < 12 + 4 * rank:
        raise TruncatedBlobError(f"{path}: dim list truncated")
    dims = np.frombuffer(raw, dtype="<u4", count=rank, offset=12).astype(np.int64)
    per_sample = int(np.prod(dims)) if rank else 1
    data_off = 12 + 4 * rank
    labels_off = data_off + 4 * count * per_sample
    expected = labels_off + 4 * count
    if len(raw) != expected:
        raise TruncatedBlobError(
            f"{path}: {len(raw)} bytes, header implies exactly {expected}"
        )
    inputs = np.frombuffer(raw, dtype="<f4", count=count * per_sample, offset=data_off)
    labels = np.frombuffer(raw, dtype="<u4", count=count, offset=labels_off)
    return nncore.LabeledDataset(
        inputs=inputs.reshape((count, *dims)).copy(),
        labels=labels.astype(np.int64),
    )


MLP_ARCH = "mlp"
CNN_ARCH = "cnn"


def generate_fixture(seed: int, architecture: str) -> Network:
    """Seeded random desk-scale network (weights uniform in [-0.5, 0.5]).

    Biases are zero so that relevance conservation holds exactly with the
    stabilizers turned off.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def u(*shape):
        return (rng.uniform(-0.5, 0.5, size=shape)).astype(np.float32)

    if architecture == MLP_ARCH:
        layers = [
            nncore.dense(u(64, 784)),
            nncore.relu(),
            nncore.dense(u(32, 64)),
            nncore.relu(),
            nncore.dense(u(10, 32)),
        ]
        return Network(layers=layers, input_shape=(784,), num_classes=10)
    if architecture == CNN_ARCH:
        layers = [
            nncore.conv2d(u(8, 1, 3, 3)),
            nncore.relu(),
            nncore.maxpool(2),
            nncore.flatten(),
            nncore.dense(u(10, 8 * 13 * 13)),
        ]
        return Network(layers=layers, input_shape=(1, 28, 28), num_classes=10)
    raise ValueError(f"unknown fixture architecture {architecture!r}")

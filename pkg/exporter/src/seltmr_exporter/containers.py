"""Writers (and a round-trip reader) for the portable model/dataset formats.

Model container: a directory with ``manifest.json`` and ``weights.bin``.
The blob holds each layer's weight tensor then its bias tensor as raw
little-endian IEEE-754 binary32, row-major; the manifest records per-tensor
byte offsets/lengths, layer hyperparameters, input shape, class count and
``model_hash`` — the first 8 bytes of the blob's SHA-256, hex.

Dataset file: magic ``NND1``, u32 sample count, u32 rank, rank x u32 dims,
count x prod(dims) little-endian float32 values, count x u32 labels.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
DATASET_MAGIC = b"NND1"

KINDS = ("dense", "conv2d", "relu", "maxpool", "flatten", "softmax")


class ExportError(Exception):
    pass


@dataclass
class LayerExport:
    """One layer of the exported network, already in canonical layout."""

    kind: str
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    pool: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ExportError(f"unsupported layer kind {self.kind!r}")
        if self.weights is not None:
            self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
        if self.bias is not None:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)


@dataclass
class NetworkExport:
    layers: list
    input_shape: tuple
    num_classes: int
    manifest: dict | None = field(default=None, repr=False)


def write_container(net: NetworkExport, out_dir) -> str:
    """Emit manifest.json + weights.bin; returns the model hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    chunks = []
    cursor = 0
    entries = []
    for layer in net.layers:
        entry = {"kind": layer.kind}
        if layer.kind == "conv2d":
            entry["stride"] = layer.stride
            entry["padding"] = layer.padding
        if layer.kind == "maxpool":
            entry["pool"] = layer.pool
        for name in ("weights", "bias"):
            arr = getattr(layer, name)
            if arr is None:
                entry[name] = None
                continue
            raw = arr.astype("<f4").tobytes()
            entry[name] = {"shape": list(arr.shape), "offset": cursor, "length": len(raw)}
            chunks.append(raw)
            cursor += len(raw)
        entries.append(entry)
    blob = b"".join(chunks)
    model_hash = hashlib.sha256(blob).hexdigest()[:16]
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "num_classes": net.num_classes,
        "model_hash": model_hash,
        "layers": entries,
    }
    (out_dir / "weights.bin").write_bytes(blob)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return model_hash


def read_container(path) -> NetworkExport:
    """Read a container back; verifies the hash and tensor bounds."""
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    blob = (path / "weights.bin").read_bytes()
    actual = hashlib.sha256(blob).hexdigest()[:16]
    if actual != manifest["model_hash"]:
        raise ExportError(f"hash mismatch: blob {actual}, manifest {manifest['model_hash']}")
    layers = []
    for entry in manifest["layers"]:
        tensors = {}
        for name in ("weights", "bias"):
            spec = entry.get(name)
            if spec is None:
                tensors[name] = None
                continue
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            if spec["offset"] + spec["length"] > len(blob) or spec["length"] != 4 * count:
                raise ExportError(f"tensor {name} of {entry['kind']} out of bounds")
            tensors[name] = (
                np.frombuffer(blob, dtype="<f4", count=count, offset=spec["offset"])
                .reshape(shape)
                .copy()
            )
        layers.append(
            LayerExport(
                kind=entry["kind"],
                weights=tensors["weights"],
                bias=tensors["bias"],
                stride=int(entry.get("stride", 1)),
                padding=int(entry.get("padding", 0)),
                pool=int(entry.get("pool", 2)),
            )
        )
    return NetworkExport(
        layers=layers,
        input_shape=tuple(manifest["input_shape"]),
        num_classes=int(manifest["num_classes"]),
        manifest=manifest,
    )


def write_dataset(inputs: np.ndarray, labels: np.ndarray, path) -> None:
    inputs = np.ascontiguousarray(inputs, dtype=np.float32)
    labels = np.ascontiguousarray(labels)
    if inputs.shape[0] != labels.shape[0]:
        raise ExportError(
            f"{inputs.shape[0]} samples but {labels.shape[0]} labels"
        )
    dims = inputs.shape[1:]
    parts = [
        DATASET_MAGIC,
        np.uint32(inputs.shape[0]).tobytes(),
        np.uint32(len(dims)).tobytes(),
        np.asarray(dims, dtype="<u4").tobytes(),
        inputs.astype("<f4").tobytes(),
        labels.astype("<u4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(parts))


def read_dataset(path):
    raw = Path(path).read_bytes()
    if raw[:4] != DATASET_MAGIC:
        raise ExportError(f"{path}: bad magic {raw[:4]!r}")
    count = int(np.frombuffer(raw, "<u4", 1, 4)[0])
    rank = int(np.frombuffer(raw, "<u4", 1, 8)[0])
    dims = tuple(int(d) for d in np.frombuffer(raw, "<u4", rank, 12))
    per = int(np.prod(dims)) if rank else 1
    off = 12 + 4 * rank
    inputs = np.frombuffer(raw, "<f4", count * per, off).reshape((count, *dims)).copy()
    labels = np.frombuffer(raw, "<u4", count, off + 4 * count * per).astype(np.int64)
    return inputs, labels

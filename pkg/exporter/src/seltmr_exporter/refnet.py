"""Reference forward pass over exported layer arrays.

This is the exporter's own model of how a container computes: float64
accumulation inside each layer, rounded back to float32 at every layer
boundary (weights are stored as binary32, so any faithful consumer rounds
per layer). Parity between this and the framework's forward bounds the
conversion error independently of any consumer implementation.
"""

from __future__ import annotations

import numpy as np

from .containers import ExportError, NetworkExport


def _dense(x, layer):
    w = layer.weights.astype(np.float64)
    b = (layer.bias if layer.bias is not None else np.zeros(w.shape[0], np.float32)).astype(np.float64)
    return (w @ x.astype(np.float64).ravel() + b).astype(np.float32)


def _conv2d(x, layer):
    w = layer.weights.astype(np.float64)
    out_c, in_c, kh, kw = w.shape
    b = (layer.bias if layer.bias is not None else np.zeros(out_c, np.float32)).astype(np.float64)
    stride, pad = layer.stride, layer.padding
    xc = x.astype(np.float64)
    if pad:
        xc = np.pad(xc, ((0, 0), (pad, pad), (pad, pad)))
    _, in_h, in_w = xc.shape
    out_h = (in_h - kh) // stride + 1
    out_w = (in_w - kw) // stride + 1
    out = np.empty((out_c, out_h, out_w), dtype=np.float64)
    for oy in range(out_h):
        for ox in range(out_w):
            patch = xc[:, oy * stride:oy * stride + kh, ox * stride:ox * stride + kw]
            out[:, oy, ox] = np.tensordot(w, patch, axes=([1, 2, 3], [0, 1, 2])) + b
    return out.astype(np.float32)


def _maxpool(x, layer):
    k = layer.pool
    c, h, w = x.shape
    trimmed = x[:, : (h // k) * k, : (w // k) * k]
    blocks = trimmed.reshape(c, h // k, k, w // k, k)
    return blocks.max(axis=(2, 4))


def forward(net: NetworkExport, x: np.ndarray) -> np.ndarray:
    """Logits for one sample; softmax tail layers are skipped (logit parity)."""
    x = np.asarray(x, dtype=np.float32)
    for i, layer in enumerate(net.layers):
        if layer.kind == "dense":
            x = _dense(x, layer)
        elif layer.kind == "conv2d":
            x = _conv2d(x, layer)
        elif layer.kind == "relu":
            x = np.maximum(x, np.float32(0))
        elif layer.kind == "maxpool":
            x = _maxpool(x, layer)
        elif layer.kind == "flatten":
            x = x.ravel()
        elif layer.kind == "softmax":
            pass
        else:
            raise ExportError(f"layer {i}: cannot evaluate kind {layer.kind!r}")
    return x


def predict(net: NetworkExport, inputs: np.ndarray) -> np.ndarray:
    return np.array([int(np.argmax(forward(net, x))) for x in inputs])


def accuracy(net: NetworkExport, inputs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(net, inputs) == np.asarray(labels)))

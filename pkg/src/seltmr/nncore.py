"""Minimal deterministic feed-forward inference engine.

Supports dense, 2-D convolution, ReLU, max-pool, flatten and softmax layers
over float32 tensors. Forward passes record every intermediate activation so
that relevance propagation can run afterwards. All arithmetic uses a fixed
accumulation order (see _kernels), which makes repeated runs bit-identical;
that property is what fault-injection campaigns lean on.

Corrupted weights may produce NaN or infinite activations. Those propagate
through the network unchanged; evaluation counts NaN logits as
misclassifications instead of crashing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ShapeError

KIND_DENSE = "dense"
KIND_CONV2D = "conv2d"
KIND_RELU = "relu"
KIND_MAXPOOL = "maxpool"
KIND_FLATTEN = "flatten"
KIND_SOFTMAX = "softmax"

WEIGHTED_KINDS = (KIND_DENSE, KIND_CONV2D)

PROB_FLOOR = 1e-12


def _as_f32(a) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(a), dtype=np.float32)


@dataclass
class Layer:
    """One network layer. Only dense and conv2d carry parameters."""

    kind: str
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None
    stride: int = 1
    padding: int = 0
    pool: int = 2

    def clone(self) -> "Layer":
        return Layer(
            kind=self.kind,
            weights=None if self.weights is None else self.weights.copy(),
            bias=None if self.bias is None else self.bias.copy(),
            stride=self.stride,
            padding=self.padding,
            pool=self.pool,
        )


def dense(weights, bias=None) -> Layer:
    """Dense layer; weights shape [out, in], bias defaults to zeros."""
    w = _as_f32(weights)
    if w.ndim != 2:
        raise ShapeError(f"dense weights must be 2-D [out, in], got shape {w.shape}")
    b = np.zeros(w.shape[0], dtype=np.float32) if bias is None else _as_f32(bias)
    if b.shape != (w.shape[0],):
        raise ShapeError(f"dense bias shape {b.shape} does not match out={w.shape[0]}")
    return Layer(KIND_DENSE, weights=w, bias=b)


def conv2d(weights, bias=None, stride: int = 1, padding: int = 0) -> Layer:
    """Convolution layer; weights shape [out_c, in_c, kh, kw]."""
    w = _as_f32(weights)
    if w.ndim != 4:
        raise ShapeError(
            f"conv2d weights must be 4-D [out_c, in_c, kh, kw], got shape {w.shape}"
        )
    if stride < 1 or padding < 0:
        raise ValueError(f"invalid conv2d hyperparams stride={stride} padding={padding}")
    b = np.zeros(w.shape[0], dtype=np.float32) if bias is None else _as_f32(bias)
    if b.shape != (w.shape[0],):
        raise ShapeError(f"conv2d bias shape {b.shape} does not match out_c={w.shape[0]}")
    return Layer(KIND_CONV2D, weights=w, bias=b, stride=stride, padding=padding)


def relu() -> Layer:
    return Layer(KIND_RELU)


def maxpool(pool: int = 2) -> Layer:
    if pool < 1:
        raise ValueError(f"pool size must be >= 1, got {pool}")
    return Layer(KIND_MAXPOOL, pool=pool)


def flatten() -> Layer:
    return Layer(KIND_FLATTEN)


def softmax() -> Layer:
    return Layer(KIND_SOFTMAX)


def _layer_output_shape(layer: Layer, in_shape: tuple[int, ...], idx: int) -> tuple[int, ...]:
    k = layer.kind
    if k == KIND_DENSE:
        if len(in_shape) != 1 or in_shape[0] != layer.weights.shape[1]:
            raise ShapeError(
                f"layer {idx} (dense) expects input [{layer.weights.shape[1]}], got {list(in_shape)}"
            )
        return (layer.weights.shape[0],)
    if k == KIND_CONV2D:
        if len(in_shape) != 3 or in_shape[0] != layer.weights.shape[1]:
            raise ShapeError(
                f"layer {idx} (conv2d) expects input [C={layer.weights.shape[1]}, H, W], got {list(in_shape)}"
            )
        _, h, w = in_shape
        kh, kw = layer.weights.shape[2], layer.weights.shape[3]
        oh = (h + 2 * layer.padding - kh) // layer.stride + 1
        ow = (w + 2 * layer.padding - kw) // layer.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(f"layer {idx} (conv2d) output would be empty for input {list(in_shape)}")
        return (layer.weights.shape[0], oh, ow)
    if k == KIND_MAXPOOL:
        if len(in_shape) != 3:
            raise ShapeError(f"layer {idx} (maxpool) expects a [C, H, W] input, got {list(in_shape)}")
        c, h, w = in_shape
        if h < layer.pool or w < layer.pool:
            raise ShapeError(f"layer {idx} (maxpool) window {layer.pool} exceeds input {list(in_shape)}")
        return (c, h // layer.pool, w // layer.pool)
    if k == KIND_FLATTEN:
        return (int(np.prod(in_shape)),)
    if k in (KIND_RELU, KIND_SOFTMAX):
        return in_shape
    raise ShapeError(f"layer {idx} has unknown kind {k!r}")


@dataclass
class Network:
    """Ordered layer stack with a fixed input shape and class count.

    Immutable by convention after construction: fault application always works
    on an explicit clone(), so a loaded network can be shared read-only.
    """

    layers: list[Layer]
    input_shape: tuple[int, ...]
    num_classes: int
    layer_output_shapes: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        self.input_shape = tuple(int(d) for d in self.input_shape)
        shapes = []
        cur = self.input_shape
        for idx, layer in enumerate(self.layers):
            cur = _layer_output_shape(layer, cur, idx)
            shapes.append(cur)
        if not shapes:
            raise ShapeError("network has no layers")
        if cur != (self.num_classes,):
            raise ShapeError(
                f"final layer produces shape {list(cur)}, expected [{self.num_classes}]"
            )
        self.layer_output_shapes = tuple(shapes)

    def clone(self) -> "Network":
        return Network(
            layers=[l.clone() for l in self.layers],
            input_shape=self.input_shape,
            num_classes=self.num_classes,
        )


@dataclass
class ForwardTrace:
    """Recorded forward pass: inputs, per-layer tensors, logits, decision."""

    input: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    logits: np.ndarray
    predicted_class: int


@dataclass
class LabeledDataset:
    """Inputs stacked along axis 0 plus integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = _as_f32(self.inputs)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ShapeError(
                f"{self.inputs.shape[0]} inputs but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def sample_shape(self) -> tuple[int, ...]:
        return tuple(self.inputs.shape[1:])

    def take(self, n: int) -> "LabeledDataset":
        return LabeledDataset(self.inputs[:n].copy(), self.labels[:n].copy())


@dataclass
class EvalResult:
    """Accuracy, mean cross-entropy loss and NaN bookkeeping for one pass."""

    accuracy: float
    mean_loss: float
    nan_count: int
    num_samples: int


def argmax_lowest(v: np.ndarray) -> int:
    """Index of the largest entry; ties and NaNs resolve to the lowest index.

    NaN entries never win. An all-NaN vector yields 0.
    """
    best_val = -np.inf
    best = 0
    for i in range(v.shape[0]):
        x = v[i]
        if x > best_val:
            best_val = x
            best = i
    return best


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Stable softmax in float64.

    Any NaN logit yields an all-NaN vector. +inf logits take the limit
    distribution (uniform over the +inf entries). An all -inf vector is
    treated as uniform.
    """
    v = np.asarray(logits, dtype=np.float64)
    if np.isnan(v).any():
        return np.full(v.shape, np.nan)
    pos = v == np.inf
    if pos.any():
        return pos.astype(np.float64) / pos.sum()
    m = v.max()
    if m == -np.inf:
        return np.full(v.shape, 1.0 / v.shape[0])
    e = np.exp(v - m)
    return e / e.sum()


def forward(network: Network, x) -> ForwardTrace:
    """Run one input through the network, recording every layer tensor.

    Deterministic: identical inputs on the same network produce bit-identical
    traces. For dense/conv layers the pre-activation equals the layer output;
    for the parameter-free layers it is the layer's input.
    """
    x = _as_f32(x)
    if tuple(x.shape) != network.input_shape:
        raise ShapeError(
            f"input shape {list(x.shape)} does not match network input "
            f"{list(network.input_shape)}"
        )
    pre: list[np.ndarray] = []
    acts: list[np.ndarray] = []
    cur = x
    logits = None
    for layer in network.layers:
        k = layer.kind
        if k == KIND_DENSE:
            cur = _kernels.dense_forward(cur, layer.weights, layer.bias)
            pre.append(cur)
        elif k == KIND_CONV2D:
            cur = _kernels.conv2d_forward(
                cur, layer.weights, layer.bias, layer.stride, layer.padding
            )
            pre.append(cur)
        elif k == KIND_RELU:
            pre.append(cur)
            cur = np.maximum(cur, np.float32(0.0))
        elif k == KIND_MAXPOOL:
            pre.append(cur)
            cur = _kernels.maxpool_forward(cur, layer.pool)
        elif k == KIND_FLATTEN:
            pre.append(cur)
            cur = np.ascontiguousarray(cur).reshape(-1)
        else:  # softmax
            pre.append(cur)
            logits = cur
            cur = softmax_probs(cur).astype(np.float32)
        acts.append(cur)
    if logits is None:
        logits = acts[-1]
    return ForwardTrace(
        input=x,
        pre_activations=pre,
        activations=acts,
        logits=logits,
        predicted_class=argmax_lowest(logits),
    )


def evaluate(network: Network, dataset: LabeledDataset) -> EvalResult:
    """Accuracy and mean cross-entropy over a labeled dataset.

    Loss is -ln(softmax probability of the true class), with probabilities
    clamped to PROB_FLOOR before the log. Samples whose logits contain NaN
    are counted as misclassified with the loss capped at -ln(PROB_FLOOR).
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    bad = dataset.labels[(dataset.labels < 0) | (dataset.labels >= network.num_classes)]
    if bad.size:
        raise ValueError(
            f"dataset labels outside [0, {network.num_classes}): {bad[:5].tolist()}"
        )
    correct = 0
    loss_sum = 0.0
    nan_count = 0
    cap = -np.log(PROB_FLOOR)
    for i in range(len(dataset)):
        trace = forward(network, dataset.inputs[i])
        if np.isnan(trace.logits).any():
            nan_count += 1
            loss_sum += cap
            continue
        probs = softmax_probs(trace.logits)
        p = max(float(probs[int(dataset.labels[i])]), PROB_FLOOR)
        loss_sum += -np.log(p)
        if trace.predicted_class == int(dataset.labels[i]):
            correct += 1
    n = len(dataset)
    return EvalResult(
        accuracy=correct / n,
        mean_loss=loss_sum / n,
        nan_count=nan_count,
        num_samples=n,
    )

"""Torch-module conversion and the export pipeline.

Conversion walks a sequential module and maps each child onto one of the
six container layer kinds, re-laying weights out row-major as [out, in]
for linear layers and [out_c, in_c, kh, kw] for convolutions (torch
already stores both that way; the copy pins dtype, order and endianness).
Anything else is rejected by name so a bad checkpoint fails loudly.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import data as datasrc
from . import refnet, train
from .containers import ExportError, LayerExport, NetworkExport, read_container, write_container, write_dataset

PARITY_TOLERANCE = 1e-5
PARITY_SAMPLES = 100

RECIPE_MLP = "mlp"
RECIPE_CNN = "cnn"
RECIPE_CHECKPOINT = "checkpoint"


@dataclass
class ExportRecipe:
    source: str  # mlp | cnn | checkpoint
    dataset_subset_size: int = 1000
    train_epochs: int = 30
    train_seed: int = 0
    output_dir: str = "export-out"
    checkpoint_path: str | None = None
    data_source: str = datasrc.DATA_AUTO

    def __post_init__(self):
        if self.source not in (RECIPE_MLP, RECIPE_CNN, RECIPE_CHECKPOINT):
            raise ValueError(f"unknown recipe source {self.source!r}")
        if self.dataset_subset_size < 1:
            raise ValueError("dataset_subset_size must be >= 1")
        if self.source != RECIPE_CHECKPOINT and self.train_epochs < 0:
            # 0 epochs is the documented seeded-init (untrained) export
            raise ValueError("train_epochs must be >= 0")
        if self.source == RECIPE_CHECKPOINT and not self.checkpoint_path:
            raise ValueError("checkpoint recipe needs checkpoint_path")


def _square(value, what: str) -> int:
    if isinstance(value, (tuple, list)):
        if value[0] != value[1]:
            raise ExportError(f"{what} must be square, got {value}")
        return int(value[0])
    return int(value)


def convert_module(module: nn.Module, input_shape, num_classes: int = 10) -> NetworkExport:
    """Map a sequential torch module onto container layers."""
    layers = []
    children = list(module.children()) or [module]
    for i, child in enumerate(children):
        if isinstance(child, nn.Linear):
            layers.append(
                LayerExport(
                    kind="dense",
                    weights=child.weight.detach().numpy(),
                    bias=None if child.bias is None else child.bias.detach().numpy(),
                )
            )
        elif isinstance(child, nn.Conv2d):
            if child.dilation != (1, 1) or child.groups != 1:
                raise ExportError(f"layer {i}: dilated/grouped Conv2d is unsupported")
            layers.append(
                LayerExport(
                    kind="conv2d",
                    weights=child.weight.detach().numpy(),
                    bias=None if child.bias is None else child.bias.detach().numpy(),
                    stride=_square(child.stride, f"layer {i} stride"),
                    padding=_square(child.padding, f"layer {i} padding"),
                )
            )
        elif isinstance(child, nn.ReLU):
            layers.append(LayerExport(kind="relu"))
        elif isinstance(child, nn.MaxPool2d):
            k = _square(child.kernel_size, f"layer {i} pool kernel")
            s = _square(child.stride if child.stride is not None else k, f"layer {i} pool stride")
            if s != k or _square(child.padding, "pool padding") != 0:
                raise ExportError(
                    f"layer {i}: only non-overlapping unpadded MaxPool2d is supported"
                )
            layers.append(LayerExport(kind="maxpool", pool=k))
        elif isinstance(child, nn.Flatten):
            layers.append(LayerExport(kind="flatten"))
        elif isinstance(child, nn.Softmax):
            layers.append(LayerExport(kind="softmax"))
        else:
            raise ExportError(
                f"layer {i}: {type(child).__name__} does not map onto the "
                f"supported kinds (dense, conv2d, relu, maxpool, flatten, softmax)"
            )
    return NetworkExport(layers=layers, input_shape=tuple(input_shape), num_classes=num_classes)


def _torch_logits(module: nn.Module, inputs: np.ndarray) -> np.ndarray:
    """Framework-side forward in float64 on the float32 sample values."""
    ref = copy.deepcopy(module).double()
    with torch.no_grad():
        x = torch.from_numpy(inputs.astype(np.float32)).double()
        if x.dim() == 2:  # flat samples; torch layers expect (N, 1, 28, 28)
            x = x.reshape(len(x), 1, 28, 28)
        elif x.dim() == 3:
            x = x.unsqueeze(1)
        return ref(x).numpy()


def parity_report(module: nn.Module, container_dir, inputs: np.ndarray) -> dict:
    """Max |logit diff| between the framework and the re-read container."""
    net = read_container(container_dir)
    want = _torch_logits(module, inputs)
    got = np.stack([refnet.forward(net, x) for x in inputs]).astype(np.float64)
    max_diff = float(np.max(np.abs(want - got)))
    return {
        "samples": int(len(inputs)),
        "max_abs_logit_diff": max_diff,
        "tolerance": PARITY_TOLERANCE,
        "pass": max_diff <= PARITY_TOLERANCE,
    }


def export(recipe: ExportRecipe) -> dict:
    """Run a recipe end to end; returns a result summary dict.

    Writes ``model/`` (container), ``data.nnd``, and ``parity.json`` under
    the recipe's output directory.
    """
    out = Path(recipe.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    images, labels, source_used = datasrc.load_images(recipe.data_source)
    (train_x, train_y), (eval_x, eval_y) = datasrc.split(
        images, labels, recipe.dataset_subset_size, recipe.train_seed
    )

    if recipe.source == RECIPE_CHECKPOINT:
        module = torch.load(recipe.checkpoint_path, weights_only=False)
        if not isinstance(module, nn.Module):
            raise ExportError(
                f"{recipe.checkpoint_path}: expected a saved nn.Module, "
                f"got {type(module).__name__}"
            )
        module = module.eval()
        flat_input = not any(isinstance(c, nn.Conv2d) for c in module.children())
    else:
        module = train.init_model(recipe.source, recipe.train_seed)
        if recipe.train_epochs > 0:
            module = train.train(
                module, train_x, train_y,
                epochs=recipe.train_epochs, seed=recipe.train_seed,
            )
        flat_input = recipe.source == RECIPE_MLP

    if flat_input:
        net = convert_module(module, input_shape=(28 * 28,))
        eval_inputs = eval_x.reshape(len(eval_x), -1)
    else:
        net = convert_module(module, input_shape=(1, 28, 28))
        eval_inputs = eval_x[:, None, :, :]

    model_dir = out / "model"
    model_hash = write_container(net, model_dir)
    write_dataset(eval_inputs, eval_y, out / "data.nnd")

    parity = parity_report(module, model_dir, eval_inputs[:PARITY_SAMPLES])
    (out / "parity.json").write_text(json.dumps(parity, indent=2, sort_keys=True))

    acc = refnet.accuracy(read_container(model_dir), eval_inputs, eval_y)
    return {
        "model_hash": model_hash,
        "model_dir": str(model_dir),
        "dataset": str(out / "data.nnd"),
        "data_source": source_used,
        "subset_size": int(len(eval_y)),
        "subset_accuracy": acc,
        "parity": parity,
    }

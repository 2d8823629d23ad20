"""Trains desk-scale fixture models and exports them — plus dataset
subsets — into the portable container and .nnd formats, with a parity
report comparing the framework's logits against a reference forward over
the exported bytes."""

from .containers import (
    ExportError,
    LayerExport,
    NetworkExport,
    read_container,
    read_dataset,
    write_container,
    write_dataset,
)
from .convert import ExportRecipe, convert_module, export, parity_report
from .data import load_images, split
from .refnet import accuracy, forward, predict
from .train import build_cnn, build_mlp, init_model, train

__all__ = [
    "ExportError", "ExportRecipe", "LayerExport", "NetworkExport",
    "accuracy", "build_cnn", "build_mlp", "convert_module", "export",
    "forward", "init_model", "load_images", "parity_report", "predict",
    "read_container", "read_dataset", "split", "train", "write_container",
    "write_dataset",
]

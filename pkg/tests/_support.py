"""Bits shared across the test modules that aren't pytest fixtures."""

from pathlib import Path

import numpy as np

import seltmr as st

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
TRAINED_MLP = FIXTURES / "trained_mlp"
EVAL_1K = FIXTURES / "eval_mlp_1k.nnd"


def make_dataset(seed: int, n: int, shape, classes: int = 10) -> st.LabeledDataset:
    rng = np.random.Generator(np.random.PCG64(seed))
    return st.LabeledDataset(
        inputs=rng.uniform(0, 1, (n, *shape)).astype(np.float32),
        labels=rng.integers(0, classes, n).astype(np.int64),
    )

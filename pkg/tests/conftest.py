import numpy as np
import pytest

import seltmr as st
from _support import EVAL_1K, TRAINED_MLP


@pytest.fixture(scope="session")
def trained_net():
    return st.load_model(TRAINED_MLP)


@pytest.fixture(scope="session")
def eval_1k():
    return st.load_dataset(EVAL_1K)


@pytest.fixture(scope="session")
def mlp_fixture():
    return st.generate_fixture(7, "mlp")


@pytest.fixture()
def tiny_net():
    """784-free dense toy: 3 inputs -> 4 hidden -> 2 classes, zero bias."""
    w1 = np.arange(12, dtype=np.float32).reshape(4, 3) / 10 - 0.5
    w2 = np.array([[0.3, -0.2, 0.5, 0.1], [-0.4, 0.6, 0.2, -0.1]], dtype=np.float32)
    return st.Network(
        layers=[st.dense(w1), st.relu(), st.dense(w2)],
        input_shape=(3,),
        num_classes=2,
    )


@pytest.fixture()
def tiny_dataset():
    rng = np.random.Generator(np.random.PCG64(5))
    return st.LabeledDataset(
        inputs=rng.uniform(-1, 1, (12, 3)).astype(np.float32),
        labels=rng.integers(0, 2, 12).astype(np.int64),
    )

import numpy as np
import pytest
import torch
from torch import nn

from seltmr_exporter import data as datasrc
from seltmr_exporter.containers import ExportError
from seltmr_exporter.convert import ExportRecipe, convert_module, parity_report
from seltmr_exporter.containers import write_container


def test_convert_module_maps_layer_kinds():
    module = nn.Sequential(
        nn.Conv2d(1, 4, 3), nn.ReLU(), nn.MaxPool2d(2), nn.Flatten(),
        nn.Linear(4 * 13 * 13, 10), nn.Softmax(dim=-1))
    net = convert_module(module, input_shape=(1, 28, 28))
    kinds = [l.kind for l in net.layers]
    assert kinds == ["conv2d", "relu", "maxpool", "flatten", "dense", "softmax"]
    conv = net.layers[0]
    assert conv.weights.shape == (4, 1, 3, 3)
    assert conv.stride == 1 and conv.padding == 0
    assert net.layers[4].weights.shape == (10, 4 * 13 * 13)


def test_convert_rejects_unsupported_layer():
    module = nn.Sequential(nn.Linear(4, 4), nn.Sigmoid())
    with pytest.raises(ExportError) as ei:
        convert_module(module, input_shape=(4,))
    msg = str(ei.value)
    assert "Sigmoid" in msg and "1" in msg  # which layer, by index and type


def test_convert_rejects_exotic_conv_options():
    with pytest.raises(ExportError):
        convert_module(nn.Sequential(nn.Conv2d(1, 2, 3, dilation=2)),
                       input_shape=(1, 28, 28))
    with pytest.raises(ExportError):
        convert_module(nn.Sequential(nn.Conv2d(2, 2, 3, groups=2)),
                       input_shape=(2, 28, 28))
    # overlapping pooling windows have no exact counterpart
    with pytest.raises(ExportError):
        convert_module(nn.Sequential(nn.MaxPool2d(3, stride=2)),
                       input_shape=(1, 28, 28))


def test_linear_weights_copied_exactly():
    module = nn.Sequential(nn.Linear(3, 2))
    with torch.no_grad():
        module[0].weight.copy_(torch.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))
        module[0].bias.copy_(torch.tensor([0.5, -0.5]))
    net = convert_module(module, input_shape=(3,), num_classes=2)
    assert net.layers[0].weights.tolist() == [[1, 2, 3], [4, 5, 6]]
    assert net.layers[0].bias.tolist() == [0.5, -0.5]


def test_parity_report_fields(tmp_path):
    module = nn.Sequential(nn.Flatten(), nn.Linear(784, 10))
    net = convert_module(module, input_shape=(784,))
    write_container(net, tmp_path / "m")
    xs = np.random.Generator(np.random.PCG64(0)).uniform(0, 1, (10, 784)).astype(np.float32)
    rep = parity_report(module, tmp_path / "m", xs)
    assert rep["samples"] == 10
    assert rep["pass"] is True
    assert rep["max_abs_logit_diff"] <= rep["tolerance"] == 1e-5
    # parity must not mutate the original module's dtype
    assert next(module.parameters()).dtype == torch.float32


def test_recipe_validation():
    with pytest.raises(ValueError):
        ExportRecipe(source="resnet")
    with pytest.raises(ValueError):
        ExportRecipe(source="mlp", dataset_subset_size=0)
    with pytest.raises(ValueError):
        ExportRecipe(source="mlp", train_epochs=-1)
    with pytest.raises(ValueError):
        ExportRecipe(source="checkpoint")
    # untrained (0-epoch) exports are a legitimate smoke-test recipe
    assert ExportRecipe(source="mlp", train_epochs=0).train_epochs == 0


def test_digits_corpus_shape(digits_corpus):
    images, labels = digits_corpus
    assert images.shape[1:] == (28, 28)
    assert images.dtype == np.float32
    assert float(images.min()) >= 0.0 and float(images.max()) <= 1.0
    assert sorted(np.unique(labels).tolist()) == list(range(10))
    assert len(images) >= 1101  # room for a 1000-sample subset plus training


def test_split_is_seeded_and_disjoint(digits_corpus):
    images, labels = digits_corpus
    (tx1, ty1), (ex1, ey1) = datasrc.split(images, labels, 200, seed=9)
    (tx2, ty2), (ex2, ey2) = datasrc.split(images, labels, 200, seed=9)
    assert np.array_equal(ex1, ex2) and np.array_equal(ey1, ey2)
    assert np.array_equal(tx1, tx2)
    assert len(ex1) == 200
    assert len(tx1) == len(images) - 200
    (_, _), (ex3, _) = datasrc.split(images, labels, 200, seed=10)
    assert not np.array_equal(ex1, ex3)
    with pytest.raises(ValueError):
        datasrc.split(images, labels, len(images) + 1, seed=0)

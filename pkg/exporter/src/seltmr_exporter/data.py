"""Dataset acquisition with a deterministic offline fallback.

``mnist`` pulls the classic 28x28 set through torchvision when both the
package and the download mirrors are available. ``digits`` needs no
network: scikit-learn's 8x8 handwritten digits are upscaled bilinearly to
28x28 and rescaled to [0, 1], giving the same shape, class count and value
range. ``auto`` tries mnist first and silently falls back.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

DATA_AUTO = "auto"
DATA_MNIST = "mnist"
DATA_DIGITS = "digits"

IMAGE_SIDE = 28


def _load_mnist() -> tuple[np.ndarray, np.ndarray]:
    import torchvision  # optional extra; import failure falls back in auto mode

    train = torchvision.datasets.MNIST("/tmp/mnist-cache", train=True, download=True)
    images = train.data.numpy().astype(np.float32) / 255.0
    labels = train.targets.numpy().astype(np.int64)
    return images, labels


def _load_digits_upscaled() -> tuple[np.ndarray, np.ndarray]:
    from sklearn.datasets import load_digits

    bunch = load_digits()
    small = bunch.images.astype(np.float32) / 16.0  # (N, 8, 8) in [0, 1]
    factor = IMAGE_SIDE / small.shape[1]
    images = np.stack([ndimage.zoom(img, factor, order=1) for img in small])
    return np.clip(images, 0.0, 1.0).astype(np.float32), bunch.target.astype(np.int64)


def load_images(source: str = DATA_AUTO) -> tuple[np.ndarray, np.ndarray, str]:
    """(images [N, 28, 28] in [0,1], labels, name of the source used)."""
    if source == DATA_MNIST:
        images, labels = _load_mnist()
        return images, labels, DATA_MNIST
    if source == DATA_DIGITS:
        images, labels = _load_digits_upscaled()
        return images, labels, DATA_DIGITS
    if source != DATA_AUTO:
        raise ValueError(f"unknown data source {source!r}")
    try:
        images, labels = _load_mnist()
        return images, labels, DATA_MNIST
    except Exception:
        images, labels = _load_digits_upscaled()
        return images, labels, DATA_DIGITS


def split(images: np.ndarray, labels: np.ndarray, subset_size: int, seed: int):
    """Seeded shuffle, then a held-out evaluation subset plus a train rest.

    When the corpus is too small to keep them disjoint, training reuses the
    whole corpus (the evaluation subset is then not held out).
    """
    if subset_size < 1:
        raise ValueError(f"subset_size must be >= 1, got {subset_size}")
    if subset_size > len(images):
        raise ValueError(
            f"subset_size {subset_size} exceeds corpus of {len(images)} samples"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(images))
    eval_idx = order[:subset_size]
    rest = order[subset_size:]
    if len(rest) < 100:
        rest = order
    return (images[rest], labels[rest]), (images[eval_idx], labels[eval_idx])

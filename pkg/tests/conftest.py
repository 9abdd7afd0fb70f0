import numpy as np
import pytest

from infoplane import datagen


@pytest.fixture(scope="session")
def digits_idx(tmp_path_factory):
    """Small handwritten-digit IDX pair (8x8 images, 10 classes).

    Built from sklearn's bundled digits so the suite has no network
    dependency; load_idx is resolution-agnostic.
    """
    from sklearn.datasets import load_digits

    d = load_digits()
    images = np.round(d.images / 16.0 * 255.0).astype(np.uint8)
    root = tmp_path_factory.mktemp("idx")
    images_path = root / "digits-images-idx3-ubyte"
    labels_path = root / "digits-labels-idx1-ubyte"
    datagen.write_idx(images, d.target.astype(np.uint8), images_path, labels_path)
    return str(images_path), str(labels_path)

import os
from pathlib import Path

import pytest

MNIST_DIR = Path(os.environ.get("MDTK_MNIST_DIR", "/root/data/mnist"))


@pytest.fixture
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte").exists() and not (
        MNIST_DIR / "train-images-idx3-ubyte.gz"
    ).exists():
        pytest.skip(f"MNIST IDX files not found in {MNIST_DIR} (set MDTK_MNIST_DIR)")
    return MNIST_DIR

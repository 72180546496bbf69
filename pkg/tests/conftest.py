import numpy as np
import pytest

from noduleaug.phantom import PhantomSpec, generate_phantom_dataset
from noduleaug.dataset import load_dataset


@pytest.fixture(scope="session")
def small_dataset_dir(tmp_path_factory):
    """80-image phantom dataset shared by tests that need real files."""
    out = tmp_path_factory.mktemp("phantom_small")
    generate_phantom_dataset(80, 0.25, PhantomSpec(), seed=303, out_dir=out)
    return out


@pytest.fixture(scope="session")
def small_records(small_dataset_dir):
    return load_dataset(
        small_dataset_dir / "images",
        small_dataset_dir / "labels.csv",
        small_dataset_dir / "bboxes.csv",
        small_dataset_dir / "masks",
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

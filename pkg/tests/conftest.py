import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hotspotter.synthetic import SyntheticConfig, generate_synthetic_dataset


@pytest.fixture(scope="session")
def small_dataset():
    """40 mixed 96×96 images shared by fast tests."""
    cfg = SyntheticConfig(n_images=40, anomalous_fraction=0.5, image_size=(96, 96), seed=101)
    return generate_synthetic_dataset(cfg)

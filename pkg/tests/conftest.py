import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oneshot_ssl.data import SyntheticSpec, generate_synthetic, select_prototypes


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small, easy 4-class synthetic dataset shared by slow-ish tests."""
    return generate_synthetic(SyntheticSpec(num_classes=4, samples_per_class=60,
                                            image_size=16, difficulty=0.2, seed=7),
                              dataset_id="tiny")


@pytest.fixture()
def tiny_protoset(tiny_dataset):
    per_class = []
    for c in range(4):
        idx = [i for i in tiny_dataset.train_indices
               if tiny_dataset._true_labels[i] == c][0]
        per_class.append([int(idx)])
    return select_prototypes(tiny_dataset, per_class)

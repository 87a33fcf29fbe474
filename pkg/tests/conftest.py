import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cld.losslog import CheckpointGrid, LossLog


@pytest.fixture
def tiny_logs():
    """4 train samples x 3 checkpoints, 2 validation samples, 2 classes."""
    grid = CheckpointGrid((0, 1, 2))
    train = LossLog(
        split="train",
        sample_ids=np.array([0, 1, 2, 3]),
        labels=np.array([0, 0, 1, 1]),
        grid=grid,
        losses=np.array(
            [
                [3.0, 2.0, 1.5],
                [2.5, 2.0, 1.0],
                [1.0, 0.8, 0.7],
                [0.7, 0.7, 0.7],
            ]
        ),
    )
    validation = LossLog(
        split="validation",
        sample_ids=np.array([0, 1]),
        labels=np.array([0, 1]),
        grid=grid,
        losses=np.array([[2.0, 1.5, 1.0], [1.2, 1.0, 0.9]]),
    )
    return train, validation


def random_losslog(rng, m=6, t=4, classes=2, split="train"):
    return LossLog(
        split=split,
        sample_ids=np.arange(m),
        labels=rng.integers(0, classes, size=m),
        grid=CheckpointGrid(tuple(range(t + 1))),
        losses=rng.uniform(0.1, 3.0, size=(m, t + 1)),
    )

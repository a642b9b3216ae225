import numpy as np
import pytest
import torch

# Single-threaded torch keeps timings stable and runs bit-identical.
torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    return rng.random((h, w, 3)).astype(np.float32)

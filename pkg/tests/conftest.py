import numpy as np
import pytest
import torch

from peps.numerics import DTYPE


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)


def param(values) -> torch.Tensor:
    return torch.tensor(values, dtype=DTYPE, requires_grad=True)

import sys
from pathlib import Path

import numpy as np
import pytest

from glscv.dataset import RegressionProblem
from glscv.synthetic import random_problem

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def mean_problem():
    # Y = (0, 0, 3), intercept-only, one subject
    return RegressionProblem(Y=[0.0, 0.0, 3.0], X=np.ones((3, 1)),
                             group_ids=["a", "a", "a"], times=[0.0, 1.0, 3.0])


@pytest.fixture
def car1_problem():
    return random_problem(np.random.default_rng(7), n_subjects=15, p=3, family="car1", rho=0.6)


@pytest.fixture
def data_dir():
    return DATA

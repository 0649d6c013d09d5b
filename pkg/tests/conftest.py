"""Shared fixtures: models, warmed kernels, tiny-study helpers."""

import numpy as np
import pytest

from sdemcmc import cir_model, gbm_model
from sdemcmc import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or load from disk cache) the jitted kernels once so the first
    # test that touches them does not pay the compilation latency
    _kernels.warmup()


@pytest.fixture(scope="session")
def gbm():
    return gbm_model()


@pytest.fixture(scope="session")
def cir():
    return cir_model()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

"""
Shared fixtures for the service and command tests
"""
import numpy as np
import pytest

from services.panel_service import panel_service
from services.sparse_eigen_service import SolverSettings


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def tight_settings():
    """Settings that drive the iterations to machine precision"""
    return SolverSettings(epsilon=1e-12, max_iterations=20000)


def random_psd(rng, t, rank=None):
    """Random symmetric PSD matrix of the given rank (full rank by default)"""
    rank = rank or t
    w = rng.standard_normal((t, rank))
    return w @ w.T / rank


def planted_factor(t, support, values):
    """Length-t vector with exactly zero mean on the given support"""
    f = np.zeros(t)
    f[list(support)] = values
    return f


def noise_free_panel(factors, loadings):
    """Centered panel X = F L' built from zero-mean factors"""
    values = np.asarray(factors) @ np.asarray(loadings).T
    return panel_service.demean(panel_service.from_array(values))

"""Shared fixtures: random PD matrices and small exact source models."""

import numpy as np
import pytest

from rrloc import assemble_covariances, generate_leadfields, random_source_model


def random_pd(dim, rng, spread=3.0):
    """Random PD matrix with eigenvalues in [1, spread+1]."""
    a = rng.normal(size=(dim, dim))
    q, _ = np.linalg.qr(a)
    lam = 1.0 + spread * rng.random(dim)
    return (q * lam) @ q.T


def random_symmetric(dim, rng):
    a = rng.normal(size=(dim, dim))
    return (a + a.T) / 2.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_leads():
    """A compact leadfield set shared by localization tests."""
    return generate_leadfields(m=12, s=20, coherence=0.5, seed=3)


def make_model(m=10, s=24, l0=3, seed=0, coherence=0.5, corr=0.4,
               noise_scale=1.0):
    """Exact source model: leadfields, theta0, Q, N and assembled R.

    Returns (leads, model, pair) where pair.R = H0 Q H0^t + N holds to
    machine precision, i.e. the "exact covariance" regime in which the
    unbiasedness and peak-value statements are exact.
    """
    leads = generate_leadfields(m=m, s=s, coherence=coherence, seed=seed)
    model = random_source_model(leads, l0=l0, seed=seed + 1,
                                correlation=corr, noise_scale=noise_scale)
    pair = assemble_covariances(model)
    return leads, model, pair

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from udi import mi_oracle
from udi.errors import ContractError, DimensionError
from udi.synthdata import gen_redundant


def test_product_table_has_zero_mi():
    p = np.outer([0.2, 0.8], [0.1, 0.6, 0.3])
    assert mi_oracle.discrete_mi(p) == pytest.approx(0.0, abs=1e-15)


def test_identity_table_has_log_k_mi():
    assert mi_oracle.discrete_mi(np.eye(4) / 4) == pytest.approx(math.log(4), abs=1e-15)


def test_two_by_two_fixture():
    p = [[0.4, 0.1], [0.1, 0.4]]
    want = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
    assert mi_oracle.discrete_mi(p) == pytest.approx(want, abs=1e-15)
    assert mi_oracle.discrete_mi(p) == pytest.approx(0.192745, abs=1e-6)


def test_invalid_tables():
    with pytest.raises(ContractError):
        mi_oracle.discrete_mi([[0.5, 0.6], [0.0, 0.0]])
    with pytest.raises(ContractError):
        mi_oracle.discrete_mi([[1.2, -0.2]])
    with pytest.raises(DimensionError):
        mi_oracle.discrete_mi([0.5, 0.5])


def test_gaussian_fixtures():
    assert mi_oracle.gaussian_mi(0.8) == pytest.approx(-0.5 * math.log(0.36), abs=1e-15)
    assert mi_oracle.gaussian_mi(0.8) == pytest.approx(0.510826, abs=1e-6)
    assert mi_oracle.gaussian_mi(-0.3) == mi_oracle.gaussian_mi(0.3)
    assert mi_oracle.gaussian_mi(0.0) == 0.0
    assert mi_oracle.gaussian_club_value(0.5) == pytest.approx(1 / 3, abs=1e-15)
    with pytest.raises(ContractError):
        mi_oracle.gaussian_mi(1.0)


@st.composite
def joints(draw):
    nx = draw(st.integers(2, 5))
    ny = draw(st.integers(2, 5))
    seed = draw(st.integers(0, 2**31 - 1))
    p = np.random.default_rng(seed).dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    return p / p.sum()


@given(joints())
def test_mi_bounded_by_marginal_entropies(p):
    mi = mi_oracle.discrete_mi(p)
    hx = mi_oracle.entropy(p.sum(axis=1))
    hy = mi_oracle.entropy(p.sum(axis=0))
    assert -1e-15 <= mi <= min(hx, hy) + 1e-12


@given(joints())
def test_log_ratio_bound_dominates_mi(p):
    assert mi_oracle.club_discrete(p) >= mi_oracle.discrete_mi(p) - 1e-10


def test_bound_is_infinite_on_disjoint_support():
    assert mi_oracle.club_discrete(np.eye(3) / 3) == math.inf


def test_binned_identity_gives_log_bins(rng):
    x = rng.uniform(size=100_000)
    assert mi_oracle.binned_empirical_mi(x, x, bins=10) == pytest.approx(math.log(10), abs=0.05)


def test_binned_independent_is_near_zero(rng):
    x, y = rng.uniform(size=(2, 100_000))
    assert mi_oracle.binned_empirical_mi(x, y) < 0.01


def test_quantile_bins_are_invariant_to_monotone_maps(rng):
    x = rng.standard_normal(5000)
    y = 0.7 * x + rng.standard_normal(5000)
    a = mi_oracle.binned_empirical_mi(x, y)
    b = mi_oracle.binned_empirical_mi(np.exp(x), y**3 + 2 * y)
    assert a == b


def test_uniform_bins_and_bad_arguments(rng):
    x = rng.standard_normal(1000)
    assert mi_oracle.binned_empirical_mi(x, x, bins=4, strategy="uniform") > 0.5
    with pytest.raises(ContractError):
        mi_oracle.binned_empirical_mi(x, x, strategy="kmeans")
    with pytest.raises(DimensionError):
        mi_oracle.binned_empirical_mi(x, x[:10])
    with pytest.raises(ContractError):
        mi_oracle.binned_empirical_mi(x, x, bins=1)


def test_sample_estimate_matches_brute_force_matrix(rng):
    n, d = 40, 3
    mu, lv, y = rng.standard_normal((n, d)), 0.5 * rng.standard_normal((n, d)), rng.standard_normal((n, d))
    logq = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            logq[i, j] = np.sum(-0.5 * lv[i] - 0.5 * (y[j] - mu[i]) ** 2 * np.exp(-lv[i]))
    want = np.mean(np.diag(logq)) - np.mean(logq)
    assert mi_oracle.club_sample_estimate(mu, lv, y) == pytest.approx(want, abs=1e-12)


def test_sample_estimate_approaches_population_value(rng):
    rho = 0.6
    x = rng.standard_normal((200000, 1))
    y = rho * x + math.sqrt(1 - rho * rho) * rng.standard_normal((200000, 1))
    est = mi_oracle.club_sample_estimate(rho * x, np.full_like(x, math.log(1 - rho * rho)), y)
    assert est == pytest.approx(mi_oracle.gaussian_club_value(rho), abs=0.02)
    assert est >= mi_oracle.gaussian_mi(rho)


def test_conditional_mi_vanishes_for_noiseless_redundancy():
    ds = gen_redundant(n=4000, noise=0.0, seed=0)
    x1, x2 = ds.features
    y = ds.labels
    w = np.linalg.lstsq(x1, y.astype(float), rcond=None)[0]
    # with noise=0 modality 1 is recoverable from modality 2 by an affine fit
    design = np.hstack([x2, np.ones((x2.shape[0], 1))])
    back = np.linalg.lstsq(design, x1, rcond=None)[0]
    s1, s2 = x1 @ w, design @ back @ w
    assert mi_oracle.binned_empirical_mi(s1, y) > 0.1
    assert mi_oracle.binned_conditional_mi(s2, y, s1) < 0.05


def test_discrete_labels_mi_of_relabeling():
    a = np.array([0, 1, 2, 0, 1, 2])
    assert mi_oracle.discrete_labels_mi(a, 10 - a) == pytest.approx(math.log(3), abs=1e-15)

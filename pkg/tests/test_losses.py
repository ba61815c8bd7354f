import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from udi import autodiff as ad
from udi import mi_oracle
from udi.errors import ContractError, DimensionError
from udi.losses import (
    bound_from_cross,
    cross_entropy,
    fused_probs,
    js_consistency,
    kl_div,
    mi_nll,
    mi_upper_bound,
    one_hot,
    predictive_entropy,
)
from udi.nets import GaussianConditional, log_q_cross

LN2 = math.log(2.0)


def prob_rows(draw_rng, n, c):
    p = draw_rng.dirichlet(np.ones(c), size=n)
    return p


def identity_q(d, logvar=0.0):
    """Conditional whose mean is f_a itself and whose log-variance is constant."""
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", d, d, [], seed=0)
    ps["mi.a-m.mu.layer0.W"].data = np.eye(d)
    ps["mi.a-m.logvar.layer0.W"].data = np.zeros((d, d))
    ps["mi.a-m.logvar.layer0.b"].data = np.full(d, logvar)
    return q, ps


# --- cross entropy ----------------------------------------------------------------------


def test_cross_entropy_fixtures():
    y = one_hot([0, 1], 2)
    assert cross_entropy(ad.Tensor(y), y).data == 0.0
    u = np.full((3, 6), 1 / 6)
    assert float(cross_entropy(ad.Tensor(u), one_hot([0, 3, 5], 6)).data) == pytest.approx(1.791759469228055, abs=1e-12)
    p = np.array([[0.75, 0.25], [0.75, 0.25]])
    val = float(cross_entropy(ad.Tensor(p), one_hot([0, 1], 2)).data)
    assert val == pytest.approx(0.8369882167858358, abs=1e-12)


def test_cross_entropy_validates():
    with pytest.raises(ContractError):
        cross_entropy(ad.Tensor([[0.5, 0.6]]), one_hot([0], 2))
    with pytest.raises(DimensionError):
        cross_entropy(ad.Tensor([[0.5, 0.5]]), one_hot([0], 3))


@given(st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_cross_entropy_nonnegative(n, c, seed):
    r = np.random.default_rng(seed)
    p = prob_rows(r, n, c)
    assert float(cross_entropy(ad.Tensor(p), one_hot(r.integers(0, c, n), c)).data) >= 0.0


# --- KL / JS --------------------------------------------------------------------------------


def test_kl_fixtures():
    assert kl_div([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kl_div([1.0, 0.0], [0.5, 0.5]) == pytest.approx(LN2, abs=1e-15)


def test_kl_nonnegative_on_random_pairs(rng):
    for _ in range(1000):
        p, q = rng.dirichlet(np.ones(4), size=2)
        assert kl_div(p, q) >= -1e-15


def test_js_fixtures():
    p = np.array([[0.2, 0.8]])
    assert float(js_consistency(p, ad.Tensor(p)).data) == 0.0
    assert float(js_consistency([[1.0, 0.0]], ad.Tensor([[0.0, 1.0]])).data) == pytest.approx(LN2, abs=1e-10)
    v = float(js_consistency([[0.5, 0.5]], ad.Tensor([[1.0, 0.0]])).data)
    assert v == pytest.approx(0.21576155433883565, abs=1e-12)


def test_js_normalization_flag():
    a = np.array([[0.5, 0.5], [0.9, 0.1]])
    m = ad.Tensor([[1.0, 0.0], [0.1, 0.9]])
    mean = float(js_consistency(a, m).data)
    total = float(js_consistency(a, m, normalize=False).data)
    assert total == pytest.approx(2 * mean, rel=1e-14)


def test_js_gradient_reaches_follower_only():
    ya = ad.Tensor([[0.3, 0.7]], requires_grad=True)
    ym = ad.Tensor([[0.6, 0.4]], requires_grad=True)
    ad.backward(js_consistency(ya, ym))
    assert ya.grad is None
    assert ym.grad is not None and np.all(np.isfinite(ym.grad))


@given(st.integers(1, 5), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_js_symmetric_bounded(n, c, seed):
    r = np.random.default_rng(seed)
    a, b = prob_rows(r, n, c), prob_rows(r, n, c)
    ab = float(js_consistency(a, ad.Tensor(b), normalize=False).data)
    ba = float(js_consistency(b, ad.Tensor(a), normalize=False).data)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert -1e-15 <= ab <= n * LN2 + 1e-12


# --- MI estimator objectives ------------------------------------------------------------


def test_mi_nll_fixtures():
    q, _ = identity_q(1)
    f = np.array([[0.3], [-1.2]])
    base = float(mi_nll(q, f, f).data)
    assert base == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-12)
    shifted = f + np.array([[1.0], [0.0]])
    assert float(mi_nll(q, f, shifted).data) == pytest.approx(base + 0.25, abs=1e-12)


def test_mi_nll_trains_estimator_only(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 3, 2, [4], seed=0)
    fa = ad.Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    fm = ad.Tensor(rng.standard_normal((5, 2)), requires_grad=True)
    ad.backward(mi_nll(q, fa, fm))
    assert fa.grad is None and fm.grad is None
    assert all(t.grad is not None for t in ps.values())


def test_bound_small_cases(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 3, 2, [4], seed=0)
    assert float(mi_upper_bound(q, rng.standard_normal((1, 3)), rng.standard_normal((1, 2))).data) == 0.0
    fa, fm = np.tile(rng.standard_normal((1, 3)), (2, 1)), np.tile(rng.standard_normal((1, 2)), (2, 1))
    assert float(mi_upper_bound(q, fa, fm).data) == pytest.approx(0.0, abs=1e-12)


def test_bound_matches_double_sum_oracle(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 2, 2, [3], seed=4)
    fa, fm = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
    mu, lv = (t.data for t in q.moments(ad.Tensor(fa)))

    def logq(i, j):
        return float(np.sum(-0.5 * (np.log(2 * np.pi) + lv[i]) - 0.5 * (fm[j] - mu[i]) ** 2 / np.exp(lv[i])))

    want = sum(logq(i, i) for i in range(3)) / 3 - sum(logq(i, j) for i in range(3) for j in range(3)) / 9
    assert float(mi_upper_bound(q, fa, fm).data) == pytest.approx(want, abs=1e-12)
    cross = log_q_cross(q, fa, fm)
    assert float(bound_from_cross(cross).data) == pytest.approx(want, abs=1e-12)


def test_bound_detached_estimator_gradient_goes_to_follower(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 2, 2, [3], seed=4)
    fa = ad.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    fm = ad.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    ad.backward(mi_upper_bound(q, fa, fm))
    assert fa.grad is None
    assert all(t.grad is None for t in ps.values())
    assert fm.grad is not None


def test_bound_with_true_conditional_matches_moment_trick(rng):
    rho = 0.6
    x = rng.standard_normal((200, 1))
    y = rho * x + math.sqrt(1 - rho * rho) * rng.standard_normal((200, 1))
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 1, 1, [], seed=0)
    ps["mi.a-m.mu.layer0.W"].data = np.array([[rho]])
    ps["mi.a-m.logvar.layer0.W"].data = np.zeros((1, 1))
    ps["mi.a-m.logvar.layer0.b"].data = np.array([math.log(1 - rho * rho)])
    est = float(mi_upper_bound(q, x, y).data)
    fast = mi_oracle.club_sample_estimate(rho * x, np.full_like(x, math.log(1 - rho * rho)), y)
    assert est == pytest.approx(fast, abs=1e-10)


@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_bound_is_permutation_invariant(n, seed):
    r = np.random.default_rng(seed)
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-m", 2, 2, [3], seed=seed % 7)
    fa, fm = r.standard_normal((n, 2)), r.standard_normal((n, 2))
    perm = r.permutation(n)
    a = float(mi_upper_bound(q, fa, fm).data)
    b = float(mi_upper_bound(q, fa[perm], fm[perm]).data)
    assert a == pytest.approx(b, abs=1e-10)


# --- predictive entropy and fusion -------------------------------------------------------


def test_predictive_entropy_fixtures():
    assert predictive_entropy(one_hot([0, 2], 3)) == 0.0
    assert predictive_entropy(np.full((2, 4), 0.25)) == pytest.approx(math.log(4), abs=1e-15)
    p = np.array([[0.5, 0.25, 0.25], [0.9, 0.1, 0.0]])
    want = 0.5 * ((0.5 * math.log(2) + 0.5 * math.log(4)) - (0.9 * math.log(0.9) + 0.1 * math.log(0.1)))
    assert predictive_entropy(p) == pytest.approx(want, abs=1e-15)


def test_fusion_fixtures(rng):
    z = rng.standard_normal((5, 4))
    single = ad.softmax_rows(ad.Tensor(z)).data
    fused = fused_probs([ad.Tensor(z), ad.Tensor(z)]).data
    np.testing.assert_array_equal(fused.argmax(axis=1), single.argmax(axis=1))
    flat = fused_probs([ad.Tensor(np.zeros((5, 4))), ad.Tensor(z)]).data
    np.testing.assert_array_equal(flat.argmax(axis=1), z.argmax(axis=1))

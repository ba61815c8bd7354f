import math

import numpy as np
import pytest

from udi import autodiff as ad
from udi.errors import DimensionError
from udi.nets import DecisionHead, GaussianConditional, Mlp, MlpEncoder, glorot, log_q, log_q_cross


def test_glorot_is_keyed_and_seeded():
    a = glorot(0, "enc.m1.layer0.W", 10, 6)
    assert a.shape == (10, 6)
    np.testing.assert_array_equal(a, glorot(0, "enc.m1.layer0.W", 10, 6))
    assert not np.array_equal(a, glorot(0, "enc.m2.layer0.W", 10, 6))
    assert not np.array_equal(a, glorot(1, "enc.m1.layer0.W", 10, 6))
    limit = math.sqrt(6.0 / 16)
    assert np.all(np.abs(a) <= limit)


def test_mlp_keys_and_shapes():
    ps = ad.ParamSet()
    mlp = Mlp(ps, "enc.m1", [5, 7, 3], seed=0)
    assert ps.keys() == ["enc.m1.layer0.W", "enc.m1.layer0.b", "enc.m1.layer1.W", "enc.m1.layer1.b"]
    out = mlp(ad.Tensor(np.ones((4, 5))))
    assert out.shape == (4, 3)
    with pytest.raises(DimensionError):
        mlp(ad.Tensor(np.ones((4, 6))))


def test_mlp_last_layer_is_linear():
    ps = ad.ParamSet()
    mlp = Mlp(ps, "x", [2, 2], seed=0)
    ps["x.layer0.W"].data = -np.eye(2)
    out = mlp(ad.Tensor([[1.0, 2.0]]))
    np.testing.assert_array_equal(out.data, [[-1.0, -2.0]])


def test_encoder_and_head():
    ps = ad.ParamSet()
    enc = MlpEncoder(ps, "m1", [4, 8, 3], seed=0)
    head = DecisionHead(ps, "m1", 3, 5, seed=0)
    f = enc(ad.Tensor(np.ones((2, 4))))
    logits, probs = head(f)
    assert logits.shape == (2, 5)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0)
    assert any(k.startswith("head.m1") for k in ps.keys())
    with pytest.raises(DimensionError):
        head(ad.Tensor(np.ones((2, 4))))


def test_logvar_is_clamped():
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-b", 2, 2, [4], seed=0)
    big = ad.Tensor(1e3 * np.ones((3, 2)))
    ps["mi.a-b.logvar.layer1.b"].data = np.array([100.0, -100.0])
    _, lv = q.moments(big)
    assert lv.data.max() <= 8.0 and lv.data.min() >= -8.0


def test_log_q_matches_closed_form(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-b", 3, 2, [5], seed=1)
    fa, fm = rng.standard_normal((4, 3)), rng.standard_normal((4, 2))
    mu, lv = q.moments(ad.Tensor(fa))
    want = np.sum(-0.5 * (np.log(2 * np.pi) + lv.data) - 0.5 * (fm - mu.data) ** 2 * np.exp(-lv.data), axis=1)
    np.testing.assert_allclose(log_q(q, fa, fm).data, want, rtol=1e-12)


def test_cross_diagonal_is_paired_log_q(rng):
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-b", 3, 2, [5], seed=1)
    fa, fm = rng.standard_normal((5, 3)), rng.standard_normal((5, 2))
    cross = log_q_cross(q, fa, fm).data
    np.testing.assert_allclose(np.diag(cross), log_q(q, fa, fm).data, rtol=1e-12)


def test_conditional_shape_checks():
    ps = ad.ParamSet()
    q = GaussianConditional(ps, "a-b", 3, 2, [5], seed=1)
    with pytest.raises(DimensionError):
        log_q(q, np.ones((4, 3)), np.ones((5, 2)))
    with pytest.raises(DimensionError):
        log_q(q, np.ones((4, 3)), np.ones((4, 3)))

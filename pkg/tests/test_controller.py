import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from udi import autodiff as ad
from udi.controller import (
    DynamicController,
    FixedController,
    GradMap,
    alignment,
    capture_grads,
    compute_alphas,
)
from udi.errors import ContractError


@pytest.mark.parametrize(
    "xi, want",
    [((2.0, 2.0), (0.5, 0.5)), ((3.0, -1.0), (1.0, 0.0)), ((-5.0, -2.0), (0.0, 0.0))],
)
def test_alpha_fixtures(xi, want):
    got = compute_alphas(*xi)
    assert got == pytest.approx(want, abs=1e-8)


def test_alphas_never_reach_one_together():
    a, b = compute_alphas(1.0, 3.0)
    assert a + b < 1.0
    assert a == 1.0 / (4.0 + 1e-8)


def test_epsilon_must_be_positive():
    with pytest.raises(ContractError):
        compute_alphas(1.0, 1.0, 0.0)


@given(
    st.floats(-1e3, 1e3, allow_nan=False),
    st.floats(-1e3, 1e3, allow_nan=False),
    st.floats(1e-3, 1e3),
)
def test_alphas_scale_covariant(xc, xm, k):
    a = compute_alphas(xc, xm)
    b = compute_alphas(k * xc, k * xm)
    if max(xc, xm, 0.0) * min(k, 1.0) > 1e-3:
        assert np.allclose(a, b, atol=1e-4)
    assert all(0.0 <= v <= 1.0 for v in a)


@given(st.floats(0.01, 1e3), st.floats(0.01, 1e3))
def test_larger_alignment_gets_larger_weight(xc, xm):
    a_con, a_com = compute_alphas(xc, xm)
    if xc > xm:
        assert a_con >= a_com
    elif xm > xc:
        assert a_com >= a_con


def make_params(seed=0):
    rng = np.random.default_rng(seed)
    ps = ad.ParamSet()
    ps.add("w", rng.standard_normal(3))
    ps.add("v", rng.standard_normal((2, 2)))
    return ps


def test_capture_grads_of_half_square_norm():
    ps = make_params()
    loss = ad.add(ad.scale(ad.sum(ad.square(ps["w"])), 0.5), ad.scale(ad.sum(ad.square(ps["v"])), 0.5))
    g = capture_grads(loss, ps, "q")
    np.testing.assert_allclose(g["w"], ps["w"].data, rtol=0, atol=1e-15)
    np.testing.assert_allclose(g["v"], ps["v"].data, rtol=0, atol=1e-15)
    assert all(t.grad is None or not np.any(t.grad) for t in ps.values())


def test_capture_grads_absent_keys_and_disconnection():
    ps = make_params()
    g = capture_grads(ad.sum(ps["w"]), ps, "w only")
    assert set(g.keys()) == {"w"}
    lonely = capture_grads(ad.sum(ad.Tensor(np.ones(2), requires_grad=True)), ps, "none")
    assert lonely.disconnected and len(lonely) == 0


def test_capture_leaves_values_untouched():
    ps = make_params()
    before = ps.checksum()
    capture_grads(ad.sum(ad.square(ps["w"])), ps)
    assert ps.checksum() == before


def test_alignment_fixtures(rng):
    g = GradMap({"a": rng.standard_normal(4), "b": rng.standard_normal((2, 3))})
    neg = GradMap({k: -v for k, v in g.grads.items()})
    other = GradMap({"c": np.ones(3)})
    sq = sum(float(np.sum(v * v)) for v in g.grads.values())
    assert alignment(g, g) == pytest.approx(sq, rel=1e-14)
    assert alignment(g, neg) == pytest.approx(-sq, rel=1e-14)
    assert alignment(g, other) == 0.0
    with pytest.raises(ContractError):
        alignment(g, GradMap({"a": np.ones(5)}))


def geometry(ps):
    w = ps["w"]
    return (
        ad.dot(w, ad.Tensor(np.array([1.0, 0.0]))),
        ad.dot(w, ad.Tensor(np.array([1.0, 0.1]))),
        ad.dot(w, ad.Tensor(np.array([-1.0, 0.0]))),
    )


def test_geometry_sends_weight_to_aligned_loss():
    ps = ad.ParamSet()
    ps.add("w", np.array([0.3, -0.2]))
    ctl = DynamicController()
    assert ctl.alphas == (0.5, 0.5)
    st_ = ctl.maybe_update(1, lambda: geometry(ps), ps)
    assert st_.xi_con == pytest.approx(1.0) and st_.xi_com == pytest.approx(-1.0)
    assert ctl.alphas[0] == pytest.approx(1.0, abs=1e-6)
    assert ctl.alphas[1] == 0.0


def test_cadence_once_per_epoch():
    ps = ad.ParamSet()
    ps.add("w", np.array([0.3, -0.2]))
    before = ps.checksum()
    ctl = DynamicController()
    calls = []

    def build():
        calls.append(1)
        return geometry(ps)

    for epoch in (1, 1, 1, 2, 2, 3):
        ctl.maybe_update(epoch, build, ps)
    assert ctl.updates == 3 and len(calls) == 3
    assert ctl.backward_passes == 9
    assert ctl.state.epoch_of_last_update == 3
    assert ps.checksum() == before


def test_fixed_controller_is_inert():
    ps = ad.ParamSet()
    ps.add("w", np.array([0.3, -0.2]))
    ctl = FixedController(0.25, 0.75)
    for e in range(1, 4):
        ctl.maybe_update(e, lambda: pytest.fail("fixed controller must not build losses"), ps)
    assert ctl.alphas == (0.25, 0.75)
    assert ctl.backward_passes == 0 and ctl.updates == 0

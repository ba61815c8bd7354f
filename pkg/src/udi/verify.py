"""Self-check suite: every oracle comparison the package relies on, with its measured error.

Each check returns a :class:`Check`; :func:`run_all` collects them and
:func:`format_report` renders one line per check.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from . import autodiff as ad
from . import mi_oracle
from .controller import DynamicController, compute_alphas
from .losses import cross_entropy, fused_probs, js_consistency, mi_nll, mi_upper_bound, one_hot
from .nets import DecisionHead, GaussianConditional, MlpEncoder
from .pipeline import select_anchor

GRAD_TOL = 1e-4


@dataclass
class Check:
    name: str
    measured: float
    tolerance: float
    passed: bool
    detail: str = ""
    seconds: float = 0.0


# ---------------------------------------------------------------------------
# gradients


def small_models(seed=0, n=6, d_a=5, d_m=4, d_feat=3, c=3):
    """A tiny two-branch model, its ParamSet, an MI estimator and a fixed batch."""
    rng = np.random.default_rng(seed)
    ps = ad.ParamSet()
    enc_a = MlpEncoder(ps, "a", [d_a, 4, d_feat], seed)
    enc_m = MlpEncoder(ps, "m", [d_m, 4, d_feat], seed)
    head_a = DecisionHead(ps, "a", d_feat, c, seed)
    head_m = DecisionHead(ps, "m", d_feat, c, seed)
    q = GaussianConditional(ps, "a-m", d_feat, d_feat, [4], seed)
    # move off the zero-bias starting point so no ReLU sits exactly at a kink
    for k, t in ps.items():
        t.data = t.data + 0.1 * rng.standard_normal(t.shape)
    xa = rng.standard_normal((n, d_a))
    xm = rng.standard_normal((n, d_m))
    y = one_hot(rng.integers(0, c, n), c)
    return dict(ps=ps, enc_a=enc_a, enc_m=enc_m, head_a=head_a, head_m=head_m, q=q, xa=xa, xm=xm, y=y)


def loss_builders(m):
    """Name -> f(params) for every training objective, evaluated on the small model."""
    xa, xm, y, q = ad.Tensor(m["xa"]), ad.Tensor(m["xm"]), m["y"], m["q"]

    def branch(enc, head, x):
        f = enc(x)
        z, p = head(f)
        return f, z, p

    def ce(_):
        return cross_entropy(branch(m["enc_m"], m["head_m"], xm)[2], y)

    def js(_):
        pa = branch(m["enc_a"], m["head_a"], xa)[2]
        pm = branch(m["enc_m"], m["head_m"], xm)[2]
        return js_consistency(pa.data, pm)

    def nll(_):
        fa = m["enc_a"](xa)
        fm = m["enc_m"](xm)
        return mi_nll(q, fa, fm)

    def bound(_):
        fa = m["enc_a"](xa)
        fm = m["enc_m"](xm)
        return mi_upper_bound(q, fa, fm, detach_estimator=False)

    def fused(_):
        za = branch(m["enc_a"], m["head_a"], xa)[1]
        zm = branch(m["enc_m"], m["head_m"], xm)[1]
        return cross_entropy(fused_probs([za, zm]), y)

    def bound_follower(_):
        fa = m["enc_a"](xa)
        fm = m["enc_m"](xm)
        return mi_upper_bound(q, fa, fm)

    return {
        "cross_entropy": (ce, ("enc.m.", "head.m.")),
        "js_consistency": (js, ("enc.m.", "head.m.")),
        "mi_nll": (nll, ("mi.",)),
        "mi_upper_bound": (bound, ("",)),
        "mi_upper_bound_follower": (bound_follower, ("enc.m.",)),
        "fused_loss": (fused, ("",)),
    }


def check_gradients(seed=0):
    out = []
    m = small_models(seed)
    for name, (f, prefixes) in loss_builders(m).items():
        t0 = time.perf_counter()
        # detached inputs are constants by contract, so only the trained tensors are perturbed
        err = ad.grad_check(f, m["ps"].select(prefixes))
        out.append(Check(f"grad:{name}", err, GRAD_TOL, err < GRAD_TOL, f"seed {seed}",
                         time.perf_counter() - t0))
    return out


# ---------------------------------------------------------------------------
# MI bound


def random_joint(rng, nx, ny, factorizable=False):
    if factorizable:
        px = rng.dirichlet(np.ones(nx))
        py = rng.dirichlet(np.ones(ny))
        p = np.outer(px, py)
    else:
        p = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    return p / p.sum()


def check_discrete_bound(n_tables=100, seed=0):
    rng = np.random.default_rng(seed)
    worst_slack, worst_eq = math.inf, 0.0
    for _ in range(n_tables):
        nx, ny = rng.integers(2, 6, size=2)
        p = random_joint(rng, nx, ny)
        worst_slack = min(worst_slack, mi_oracle.club_discrete(p) - mi_oracle.discrete_mi(p))
        f = random_joint(rng, nx, ny, factorizable=True)
        worst_eq = max(worst_eq, abs(mi_oracle.club_discrete(f) - mi_oracle.discrete_mi(f)))
    ok = worst_slack >= -1e-10 and worst_eq < 1e-10
    return Check("mi:discrete_bound", max(-worst_slack, worst_eq), 1e-10, ok,
                 f"min(bound - MI) = {worst_slack:.3e} on dependent joints; max |gap| = {worst_eq:.3e} on product joints")


def gaussian_pairs(rho, n, seed, d=1):
    """x ~ N(0, I); y = rho x + sqrt(1 - rho^2) e, plus the true conditional's moments."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    y = rho * x + math.sqrt(1 - rho * rho) * rng.standard_normal((n, d))
    mu = rho * x
    logvar = np.full_like(x, math.log1p(-rho * rho))
    return x, y, mu, logvar


def check_sampled_bound(rhos=(0.3, 0.6, 0.9), seeds=range(5), n=20000):
    worst, detail = math.inf, []
    for rho in rhos:
        truth = mi_oracle.gaussian_mi(rho)
        for s in seeds:
            _, y, mu, logvar = gaussian_pairs(rho, n, s)
            est = mi_oracle.club_sample_estimate(mu, logvar, y)
            worst = min(worst, est - truth)
        detail.append(f"rho={rho}")
    return Check("mi:sampled_bound", max(0.0, -worst), 0.02, worst >= -0.02,
                 f"min(estimate - MI) = {worst:.4f} over {', '.join(detail)}")


# ---------------------------------------------------------------------------
# controller and anchor


def check_alpha_cases():
    cases = [((1.0, 1.0), (0.5, 0.5)), ((-1.0, 2.0), (0.0, 1.0)), ((-1.0, -2.0), (0.0, 0.0))]
    worst = 0.0
    for (xc, xm), want in cases:
        got = compute_alphas(xc, xm, 1e-8)
        want = (max(xc, 0) / (max(xc, 0) + max(xm, 0) + 1e-8), max(xm, 0) / (max(xc, 0) + max(xm, 0) + 1e-8))
        worst = max(worst, abs(got[0] - want[0]), abs(got[1] - want[1]))
    return Check("controller:alpha_cases", worst, 0.0, worst == 0.0, "symmetric, one-negative, both-negative")


def _geometry_losses(ps):
    w = ps["w"]
    task = ad.dot(w, ad.Tensor(np.array([1.0, 0.0])))
    con = ad.dot(w, ad.Tensor(np.array([1.0, 0.1])))
    com = ad.dot(w, ad.Tensor(np.array([-1.0, 0.0])))
    return task, con, com


def check_alpha_geometry():
    ps = ad.ParamSet()
    ps.add("w", np.array([0.3, -0.2]))
    ctl = DynamicController()
    ctl.maybe_update(1, lambda: _geometry_losses(ps), ps)
    a_con = ctl.alphas[0]
    return Check("controller:geometry", 1.0 - a_con, 0.01, a_con > 0.99, f"alpha_con = {a_con:.6f}")


def check_cadence(epochs=4, batches_per_epoch=5):
    ps = ad.ParamSet()
    ps.add("w", np.array([0.3, -0.2]))
    ctl = DynamicController()
    for e in range(1, epochs + 1):
        for _ in range(batches_per_epoch):
            ctl.maybe_update(e, lambda: _geometry_losses(ps), ps)
    ok = ctl.updates == epochs and ctl.backward_passes == 3 * epochs
    return Check("controller:cadence", abs(ctl.updates - epochs), 0.0, ok,
                 f"{ctl.updates} updates and {ctl.backward_passes} backward passes over {epochs} epochs")


class _Probe:
    def __init__(self, modality, acc, ent):
        self.modality, self.val_acc, self.val_entropy = modality, acc, ent


def check_anchor_rules():
    got = [
        select_anchor([_Probe("m1", 0.90, 0.5), _Probe("m2", 0.70, 0.1)]),
        select_anchor([_Probe("m1", 0.80, 0.2), _Probe("m2", 0.80, 0.5)]),
        select_anchor([_Probe("m1", 0.81, 0.9), _Probe("m2", 0.80, 0.1), _Probe("m3", 0.60, 0.0)], 0.02),
    ]
    want = ["m1", "m1", "m2"]
    bad = sum(g != w for g, w in zip(got, want))
    return Check("anchor:rules", bad, 0.0, bad == 0, f"selected {got}")


# ---------------------------------------------------------------------------
# kernels


def check_kernel_parity(seed=0):
    if not _kernels.HAVE_NUMBA:
        return Check("kernels:parity", 0.0, 1e-12, True, "compiled path disabled; numpy only")
    rng = np.random.default_rng(seed)
    mu, lv, y = rng.standard_normal((7, 3)), rng.standard_normal((7, 3)), rng.standard_normal((9, 3))
    g = rng.standard_normal((7, 9))
    a = _kernels.pairwise_gauss_logpdf(mu, lv, y, use_numba=True)
    b = _kernels.pairwise_gauss_logpdf(mu, lv, y, use_numba=False)
    err = float(np.max(np.abs(a - b)))
    ga = _kernels.pairwise_gauss_logpdf_grad(mu, lv, y, g, use_numba=True)
    gb = _kernels.pairwise_gauss_logpdf_grad(mu, lv, y, g, use_numba=False)
    err = max(err, *(float(np.max(np.abs(u - v))) for u, v in zip(ga, gb)))
    return Check("kernels:parity", err, 1e-12, err < 1e-12, "compiled vs numpy")


CHECKS = [
    check_gradients,
    check_discrete_bound,
    check_sampled_bound,
    check_alpha_cases,
    check_alpha_geometry,
    check_cadence,
    check_anchor_rules,
    check_kernel_parity,
]


def run_all():
    results = []
    for fn in CHECKS:
        t0 = time.perf_counter()
        out = fn()
        items = out if isinstance(out, list) else [out]
        if not isinstance(out, list):
            out.seconds = time.perf_counter() - t0
        results.extend(items)
    return results


def format_report(results):
    lines = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        lines.append(f"{status}  {r.name:<30} measured={r.measured:.3e}  tol={r.tolerance:.1e}  "
                     f"{r.seconds:6.2f}s  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)

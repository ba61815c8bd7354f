"""Training objectives: cross-entropy, JS consistency, MI-estimator NLL and the MI upper bound."""

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .nets import log_q, log_q_cross

PROB_CLAMP = 1e-12


@dataclass
class LossBreakdown:
    cls: float = 0.0
    con: float = 0.0
    com: float = 0.0
    mi_nll: float = 0.0
    total: float = 0.0
    pair: str = ""

    def as_dict(self):
        return asdict(self)


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(probs, labels):
    """Mean over rows of -log p(true class).  ``labels`` is a one-hot matrix."""
    labels = ad.as_tensor(labels)
    if probs.shape != labels.shape:
        raise DimensionError(f"cross_entropy: probs {probs.shape} vs labels {labels.shape}")
    row_err = np.abs(probs.data.sum(axis=1) - 1.0)
    if row_err.size and row_err.max() > 1e-6:
        raise ContractError(f"cross_entropy: probability rows deviate from 1 by {row_err.max():.3g}")
    picked = ad.sum(ad.mul(labels, ad.log(probs)))
    return ad.scale(picked, -1.0 / probs.shape[0])


def kl_div(p, q):
    """KL(p || q) for two probability rows; 0 log 0 is 0 and q is clamped at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), PROB_CLAMP)
    nz = p > 0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))


def js_consistency(y_a, y_m, normalize=True):
    """Jensen-Shannon consistency between anchor and follower probability rows.

    Sums the per-row JS divergence over the batch; divides by the batch size
    when ``normalize`` is set.  Gradients reach ``y_m`` only.
    """
    y_a = ad.as_tensor(y_a).detach()
    if y_a.shape != y_m.shape:
        raise DimensionError(f"js_consistency: shapes {y_a.shape} vs {y_m.shape}")
    mix = ad.scale(ad.add(y_a, y_m), 0.5)
    log_mix = ad.log(mix)
    kl_a = ad.mul(y_a, ad.sub(ad.log(y_a), log_mix))
    kl_m = ad.mul(y_m, ad.sub(ad.log(y_m), log_mix))
    total = ad.scale(ad.sum(ad.add(kl_a, kl_m)), 0.5)
    if normalize:
        total = ad.scale(total, 1.0 / y_m.shape[0])
    return total


def mi_nll(q, f_a, f_m):
    """Negative mean log-likelihood of the estimator; trains only its own parameters."""
    return ad.scale(ad.mean(log_q(q, ad.as_tensor(f_a).detach(), ad.as_tensor(f_m).detach())), -1.0)


def bound_from_cross(cross):
    """Mean diagonal minus mean of all entries of an n x n log-density matrix."""
    n = cross.shape[0]
    if cross.data.ndim != 2 or cross.shape[1] != n:
        raise DimensionError(f"bound_from_cross: need a square matrix, got {cross.shape}")
    diag = ad.sum(ad.mul(cross, ad.Tensor(np.eye(n))))
    return ad.sub(ad.scale(diag, 1.0 / n), ad.scale(ad.sum(cross), 1.0 / (n * n)))


def mi_upper_bound(q, f_a, f_m, detach_estimator=True):
    """Sampled variational MI upper bound between paired feature rows.

    With ``detach_estimator`` (the training setting) the estimator outputs and
    ``f_a`` are constants, so gradients flow into ``f_m`` alone.
    """
    f_a, f_m = ad.as_tensor(f_a), ad.as_tensor(f_m)
    if detach_estimator:
        f_a = f_a.detach()
        q._check(f_a, f_m)
        mu, logvar = q.moments(f_a)
        cross = ad.pairwise_gauss_logpdf(mu.detach(), logvar.detach(), f_m)
    else:
        cross = log_q_cross(q, f_a, f_m)
    return bound_from_cross(cross)


def predictive_entropy(probs):
    p = np.asarray(probs.data if isinstance(probs, ad.Tensor) else probs, dtype=np.float64)
    safe = np.maximum(p, PROB_CLAMP)
    return float(np.mean(-np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=1)))


def fused_probs(logit_list):
    """Softmax of the elementwise sum of branch logits."""
    total = logit_list[0]
    for lg in logit_list[1:]:
        total = ad.add(total, lg)
    return ad.softmax_rows(total)

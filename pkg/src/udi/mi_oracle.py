"""Exact and brute-force mutual-information references.

These never touch the autodiff graph; they exist to check the learned
estimator and the upper-bound property against independent arithmetic.
"""

import math

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError


def _validate_joint(joint):
    p = np.asarray(joint, dtype=np.float64)
    if p.ndim != 2:
        raise DimensionError(f"joint table must be 2-D, got shape {p.shape}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ContractError(f"joint table must be nonnegative and sum to 1 (sum={p.sum()!r})")
    return p


def discrete_mi(joint):
    """I(X; Y) in nats for a finite joint table, skipping zero cells."""
    p = _validate_joint(joint)
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    ratio = p[nz] / (px * py)[nz]
    return float(max(0.0, np.sum(p[nz] * np.log(ratio))))


def entropy(pmf):
    p = np.asarray(pmf, dtype=np.float64).ravel()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def club_discrete(joint):
    """Population value of the log-ratio upper bound with the exact conditional p(y|x).

    Returns E_{p(x,y)}[log p(y|x)] - E_{p(x)} E_{p(y)}[log p(y|x)].  When some
    p(y|x) is zero while p(x) p(y) > 0 the bound is +inf.
    """
    p = _validate_joint(joint)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    keep = px > 0
    p, px = p[keep], px[keep]
    cond = p / px[:, None]
    with np.errstate(divide="ignore"):
        logc = np.log(cond)
    joint_term = float(np.sum(p[p > 0] * logc[p > 0]))
    prod = px[:, None] * py[None, :]
    live = prod > 0
    if np.any(cond[live] == 0):
        return math.inf
    marg_term = float(np.sum(prod[live] * logc[live]))
    return joint_term - marg_term


def gaussian_mi(rho):
    """MI of a standard bivariate Gaussian with correlation ``rho``."""
    rho = float(rho)
    if not abs(rho) < 1.0:
        raise ContractError(f"gaussian_mi: |rho| must be < 1, got {rho}")
    return -0.5 * math.log1p(-rho * rho)


def gaussian_club_value(rho):
    """Population log-ratio bound for a standard bivariate Gaussian with the true conditional.

    With y = rho x + sqrt(1 - rho^2) e the bound evaluates to rho^2 / (1 - rho^2).
    """
    rho = float(rho)
    if not abs(rho) < 1.0:
        raise ContractError(f"gaussian_club_value: |rho| must be < 1, got {rho}")
    return rho * rho / (1.0 - rho * rho)


def club_sample_estimate(mu, logvar, y):
    """Sampled log-ratio bound for a diagonal-Gaussian conditional, in O(N d).

    Row i of (mu, logvar) is the conditional at x_i.  Equivalent to the mean
    diagonal minus the mean of the full N x N log-density matrix, using
    mean_j (y_j - mu_i)^2 = E[y^2] - 2 mu_i E[y] + mu_i^2 per dimension.
    """
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if mu.shape != logvar.shape or mu.shape != y.shape:
        raise DimensionError(f"club_sample_estimate: shapes {mu.shape}, {logvar.shape}, {y.shape}")
    prec = np.exp(-logvar)
    paired = ((y - mu) ** 2 * prec).sum(axis=1)
    m1 = y.mean(axis=0)
    m2 = (y * y).mean(axis=0)
    crossed = ((m2[None, :] - 2.0 * mu * m1[None, :] + mu * mu) * prec).sum(axis=1)
    return float(np.mean(-0.5 * paired + 0.5 * crossed))


def _bin_indices(v, bins, strategy):
    v = np.asarray(v, dtype=np.float64).ravel()
    if strategy == "quantile":
        ranks = np.argsort(np.argsort(v, kind="stable"), kind="stable")
        return (ranks * bins) // v.size
    if strategy == "uniform":
        lo, hi = v.min(), v.max()
        if hi == lo:
            return np.zeros(v.size, dtype=np.int64)
        idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
        return np.minimum(idx, bins - 1)
    raise ContractError(f"unknown binning strategy {strategy!r}")


def binned_empirical_mi(x, y, bins=10, strategy="quantile"):
    """Plug-in MI of the histogram of (x, y) pairs.

    Positively biased at small N by roughly (bins - 1)^2 / (2 N) nats.
    Quantile (equal-count) bins make the estimate invariant to strictly
    increasing transforms of either variable.
    """
    x = np.asarray(x).ravel()
    y = np.asarray(y).ravel()
    if x.size == 0 or y.size == 0:
        raise ContractError("binned_empirical_mi: empty input")
    if x.size != y.size:
        raise DimensionError(f"binned_empirical_mi: lengths {x.size} vs {y.size}")
    if bins < 2:
        raise ContractError("binned_empirical_mi: bins must be >= 2")
    xi = _bin_indices(x, bins, strategy)
    yi = _bin_indices(y, bins, strategy)
    counts = _kernels.joint_histogram(xi, yi, bins, bins)
    return discrete_mi(counts / counts.sum())


def discrete_labels_mi(codes_x, codes_y):
    """MI between two integer-coded discrete samples."""
    cx = np.unique(np.asarray(codes_x), return_inverse=True)[1]
    cy = np.unique(np.asarray(codes_y), return_inverse=True)[1]
    counts = _kernels.joint_histogram(cx, cy, int(cx.max()) + 1, int(cy.max()) + 1)
    return discrete_mi(counts / counts.sum())


def binned_conditional_mi(x, y, z, bins=10):
    """I(X; Y | Z) with X and Z continuous (quantile-binned) and Y discrete."""
    xi = _bin_indices(x, bins, "quantile")
    zi = _bin_indices(z, bins, "quantile")
    y = np.asarray(y).ravel()
    total = 0.0
    for b in range(bins):
        sel = zi == b
        if sel.sum() == 0:
            continue
        total += sel.mean() * discrete_labels_mi(xi[sel], y[sel])
    return total

"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly and the environment
variable ``UDI_DISABLE_NUMBA`` is unset (or ``0``).  Both paths compute the
same quantities; summation order differs, so results agree to rounding only.
Within one backend every kernel is deterministic.
"""

import math
import os

import numpy as np

from .errors import ContractError

LOG_2PI = math.log(2.0 * math.pi)


def _numba_requested():
    flag = os.environ.get("UDI_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by UDI_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

# fastmath stays off: it reorders reductions and breaks run-to-run bit equality.
JIT_OPTIONS = {"cache": True, "nogil": True}


# ---------------------------------------------------------------------------
# numpy reference path


def pairwise_gauss_logpdf_np(mu, logvar, y):
    """Return C with C[i, j] = log N(y[j] | mu[i], diag(exp(logvar[i])))."""
    prec = np.exp(-logvar)
    diff = y[None, :, :] - mu[:, None, :]
    quad = (diff * diff * prec[:, None, :]).sum(axis=2)
    norm = (LOG_2PI + logvar).sum(axis=1)
    return -0.5 * quad - 0.5 * norm[:, None]


def pairwise_gauss_logpdf_grad_np(mu, logvar, y, g):
    prec = np.exp(-logvar)
    diff = y[None, :, :] - mu[:, None, :]
    gp = g[:, :, None] * prec[:, None, :]
    gmu = (gp * diff).sum(axis=1)
    glogvar = 0.5 * (gp * diff * diff).sum(axis=1) - 0.5 * g.sum(axis=1)[:, None]
    gy = -(gp * diff).sum(axis=0)
    return gmu, glogvar, gy


def joint_histogram_np(xi, yi, nx, ny):
    counts = np.zeros((nx, ny), dtype=np.float64)
    np.add.at(counts, (xi, yi), 1.0)
    return counts


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(**JIT_OPTIONS)
    def _pairwise_gauss_logpdf_nb(mu, logvar, y):
        n, d = mu.shape
        m = y.shape[0]
        out = np.empty((n, m))
        prec = np.empty(d)
        for i in range(n):
            norm = 0.0
            for k in range(d):
                norm += LOG_2PI + logvar[i, k]
                prec[k] = math.exp(-logvar[i, k])
            for j in range(m):
                quad = 0.0
                for k in range(d):
                    r = y[j, k] - mu[i, k]
                    quad += r * r * prec[k]
                out[i, j] = -0.5 * quad - 0.5 * norm
        return out

    @njit(**JIT_OPTIONS)
    def _pairwise_gauss_logpdf_grad_nb(mu, logvar, y, g):
        n, d = mu.shape
        m = y.shape[0]
        gmu = np.zeros((n, d))
        glogvar = np.zeros((n, d))
        gy = np.zeros((m, d))
        for i in range(n):
            rowsum = 0.0
            for j in range(m):
                rowsum += g[i, j]
            for k in range(d):
                p = math.exp(-logvar[i, k])
                acc_mu = 0.0
                acc_lv = 0.0
                for j in range(m):
                    r = y[j, k] - mu[i, k]
                    w = g[i, j] * p * r
                    acc_mu += w
                    acc_lv += w * r
                    gy[j, k] -= w
                gmu[i, k] = acc_mu
                glogvar[i, k] = 0.5 * acc_lv - 0.5 * rowsum
        return gmu, glogvar, gy

    @njit(**JIT_OPTIONS)
    def _joint_histogram_nb(xi, yi, nx, ny):
        counts = np.zeros((nx, ny))
        for t in range(xi.shape[0]):
            counts[xi[t], yi[t]] += 1.0
        return counts


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def _resolve(use_numba):
    if use_numba is None:
        return HAVE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise ContractError("compiled kernels requested but numba is unavailable or disabled")
    return bool(use_numba)


def pairwise_gauss_logpdf(mu, logvar, y, use_numba=None):
    if _resolve(use_numba):
        return _pairwise_gauss_logpdf_nb(_f64(mu), _f64(logvar), _f64(y))
    return pairwise_gauss_logpdf_np(mu, logvar, y)


def pairwise_gauss_logpdf_grad(mu, logvar, y, g, use_numba=None):
    """Vector-Jacobian product of :func:`pairwise_gauss_logpdf` for upstream g."""
    if _resolve(use_numba):
        return _pairwise_gauss_logpdf_grad_nb(_f64(mu), _f64(logvar), _f64(y), _f64(g))
    return pairwise_gauss_logpdf_grad_np(mu, logvar, y, g)


def joint_histogram(xi, yi, nx, ny, use_numba=None):
    use_numba = _resolve(use_numba)
    xi = np.ascontiguousarray(xi, dtype=np.int64)
    yi = np.ascontiguousarray(yi, dtype=np.int64)
    if use_numba:
        return _joint_histogram_nb(xi, yi, nx, ny)
    return joint_histogram_np(xi, yi, nx, ny)


def backend():
    return "numba" if HAVE_NUMBA else "numpy"

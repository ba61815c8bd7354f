"""Network roles: modality encoders, decision heads, and the Gaussian conditional estimator."""

import math
import zlib

import numpy as np

from . import autodiff as ad
from .errors import DimensionError

LOGVAR_MIN = -8.0
LOGVAR_MAX = 8.0
LOG_2PI = math.log(2.0 * math.pi)


def param_rng(seed, key):
    """Generator for one parameter tensor, a pure function of (seed, key)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(key.encode())]))


def glorot(seed, key, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return param_rng(seed, key).uniform(-bound, bound, size=(fan_in, fan_out))


class Mlp:
    """Stack of affine layers with ReLU between them and a linear last layer."""

    def __init__(self, params, prefix, dims, seed):
        if len(dims) < 2:
            raise DimensionError(f"{prefix}: need at least input and output dims, got {dims}")
        self.prefix = prefix
        self.dims = list(dims)
        self.layers = []
        for i, (fi, fo) in enumerate(zip(dims[:-1], dims[1:])):
            wk, bk = f"{prefix}.layer{i}.W", f"{prefix}.layer{i}.b"
            W = params.add(wk, glorot(seed, wk, fi, fo))
            b = params.add(bk, np.zeros(fo))
            self.layers.append((W, b))

    @property
    def d_in(self):
        return self.dims[0]

    @property
    def d_out(self):
        return self.dims[-1]

    def __call__(self, x):
        x = ad.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.d_in:
            raise DimensionError(f"{self.prefix}: expected n x {self.d_in} input, got {x.shape}")
        h = x
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = ad.add(ad.matmul(h, W), b)
            if i < last:
                h = ad.relu(h)
        return h


class MlpEncoder(Mlp):
    """Modality encoder; parameters live under ``enc.<modality>``."""

    def __init__(self, params, modality, dims, seed):
        super().__init__(params, f"enc.{modality}", dims, seed)
        self.modality = modality


class DecisionHead:
    def __init__(self, params, modality, d_feat, n_classes, seed):
        self.prefix = f"head.{modality}"
        self.d_feat = d_feat
        self.n_classes = n_classes
        self.W = params.add(f"{self.prefix}.W", glorot(seed, f"{self.prefix}.W", d_feat, n_classes))
        self.b = params.add(f"{self.prefix}.b", np.zeros(n_classes))

    def __call__(self, f):
        if f.data.ndim != 2 or f.shape[1] != self.d_feat:
            raise DimensionError(f"{self.prefix}: expected n x {self.d_feat} features, got {f.shape}")
        logits = ad.add(ad.matmul(f, self.W), self.b)
        return logits, ad.softmax_rows(logits)


def head_forward(head, f):
    return head(f)


def encoder_forward(enc, x):
    return enc(x)


class GaussianConditional:
    """Diagonal Gaussian q(f_m | f_a) whose mean and log-variance are MLPs of f_a.

    The log-variance output is clamped to [-8, 8].
    """

    def __init__(self, params, pair, d_cond, d_target, hidden, seed):
        self.prefix = f"mi.{pair}"
        self.pair = pair
        self.d_cond = d_cond
        self.d_target = d_target
        self.params = params
        dims = [d_cond, *hidden, d_target]
        self.mean_net = Mlp(params, f"{self.prefix}.mu", dims, seed)
        self.logvar_net = Mlp(params, f"{self.prefix}.logvar", dims, seed)

    def moments(self, f_a):
        f_a = ad.as_tensor(f_a)
        return self.mean_net(f_a), ad.clamp(self.logvar_net(f_a), LOGVAR_MIN, LOGVAR_MAX)

    def _check(self, f_a, f_m):
        if f_a.shape[0] != f_m.shape[0]:
            raise DimensionError(f"{self.prefix}: row counts differ, {f_a.shape} vs {f_m.shape}")
        if f_m.data.ndim != 2 or f_m.shape[1] != self.d_target:
            raise DimensionError(f"{self.prefix}: expected n x {self.d_target} targets, got {f_m.shape}")


def log_q(q, f_a, f_m):
    """Per-row log q(f_m[i] | f_a[i]); returns a length-n Tensor."""
    f_a, f_m = ad.as_tensor(f_a), ad.as_tensor(f_m)
    q._check(f_a, f_m)
    mu, logvar = q.moments(f_a)
    r2 = ad.square(ad.sub(f_m, mu))
    quad = ad.mul(r2, ad.exp(ad.neg(logvar)))
    per_dim = ad.add(ad.add(quad, logvar), LOG_2PI)
    return ad.scale(ad.sum(per_dim, axis=1), -0.5)


def log_q_cross(q, f_a, f_m):
    """n x n matrix whose (i, j) entry is log q(f_m[j] | f_a[i])."""
    f_a, f_m = ad.as_tensor(f_a), ad.as_tensor(f_m)
    q._check(f_a, f_m)
    mu, logvar = q.moments(f_a)
    return ad.pairwise_gauss_logpdf(mu, logvar, f_m)

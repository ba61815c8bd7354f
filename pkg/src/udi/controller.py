"""Gradient-alignment controller for the consistency and complementary loss weights."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ContractError

log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-8


@dataclass
class GradMap:
    """Per-parameter gradient snapshot of one loss."""

    grads: dict = field(default_factory=dict)
    source: str = ""
    disconnected: bool = False

    def keys(self):
        return self.grads.keys()

    def __getitem__(self, key):
        return self.grads[key]

    def __len__(self):
        return len(self.grads)


@dataclass
class ControllerState:
    xi_con: float = 0.0
    xi_com: float = 0.0
    alpha_con: float = 0.5
    alpha_com: float = 0.5
    epsilon: float = DEFAULT_EPSILON
    epoch_of_last_update: int = 0


def capture_grads(loss, params, source=""):
    """Isolated backward pass: zero, backprop, snapshot, zero.  Parameter values are untouched."""
    params.zero_grad()
    ad.backward(loss)
    grads = {k: t.grad.copy() for k, t in params.items() if t.grad is not None}
    params.zero_grad()
    gm = GradMap(grads, source, disconnected=not grads)
    if gm.disconnected:
        log.warning("capture_grads: loss %r reaches no parameter", source)
    return gm


def alignment(g1, g2):
    """Sum over shared keys of the flat dot product of the two gradients."""
    total = 0.0
    for k in g1.keys():
        if k not in g2.grads:
            continue
        a, b = g1[k], g2[k]
        if a.shape != b.shape:
            raise ContractError(f"alignment: key {k!r} has shapes {a.shape} and {b.shape}")
        total += float(np.dot(a.ravel(), b.ravel()))
    return total


def compute_alphas(xi_con, xi_com, epsilon=DEFAULT_EPSILON):
    if not epsilon > 0:
        raise ContractError("compute_alphas: epsilon must be positive")
    pc = max(float(xi_con), 0.0)
    pm = max(float(xi_com), 0.0)
    denom = pc + pm + epsilon
    return pc / denom, pm / denom


class DynamicController:
    """Updates the loss weights from one mini-batch per epoch.

    ``backward_passes`` counts every isolated backward run, so the cadence
    (three passes per epoch, on the first batch seen) is observable.
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, initial=(0.5, 0.5)):
        self.state = ControllerState(alpha_con=initial[0], alpha_com=initial[1], epsilon=epsilon)
        self.backward_passes = 0
        self.updates = 0

    @property
    def alphas(self):
        return self.state.alpha_con, self.state.alpha_com

    def maybe_update(self, epoch, build_losses, params):
        """Recompute weights if ``epoch`` is new.

        ``build_losses`` returns ``(task_loss, con_loss, com_loss)`` on the
        current batch; it is only called when an update happens.
        """
        st = self.state
        if epoch <= st.epoch_of_last_update:
            return st
        task, con, com = build_losses()
        g_cls = capture_grads(task, params, "cls")
        g_con = capture_grads(con, params, "con")
        g_com = capture_grads(com, params, "com")
        self.backward_passes += 3
        xi_con = alignment(g_cls, g_con)
        xi_com = alignment(g_cls, g_com)
        a_con, a_com = compute_alphas(xi_con, xi_com, st.epsilon)
        self.state = ControllerState(xi_con, xi_com, a_con, a_com, st.epsilon, epoch)
        self.updates += 1
        return self.state


class FixedController:
    """Constant weights; never runs backward passes."""

    def __init__(self, alpha_con, alpha_com):
        self.state = ControllerState(alpha_con=float(alpha_con), alpha_com=float(alpha_com))
        self.backward_passes = 0
        self.updates = 0

    @property
    def alphas(self):
        return self.state.alpha_con, self.state.alpha_com

    def maybe_update(self, epoch, build_losses, params):
        return self.state

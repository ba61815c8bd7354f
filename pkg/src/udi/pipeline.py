"""Training strategies: sequential anchor-then-follower (udi), joint summation, decoupled.

The udi procedure:

1. every modality branch is trained alone; the anchor is the best one on
   validation accuracy (ties within ``tie_threshold`` go to lower predictive
   entropy, then lower modality index);
2. the anchor is frozen and each remaining modality, in descending validation
   order, is trained from scratch with its own cross-entropy plus a weighted
   JS consistency term toward the fused prediction of the frozen branches and
   a weighted MI upper bound between its features and each frozen branch's
   features;
3. one step of each MI estimator precedes every follower step, and the
   controller refreshes the two weights on the first mini-batch of each epoch.
"""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .controller import DynamicController, FixedController
from .errors import ContractError, DataError, NumericError
from .losses import (
    LossBreakdown,
    cross_entropy,
    fused_probs,
    js_consistency,
    mi_nll,
    mi_upper_bound,
    one_hot,
    predictive_entropy,
)
from .nets import DecisionHead, GaussianConditional, MlpEncoder

log = logging.getLogger("udi")

STRATEGIES = ("udi", "joint_sum", "decoupled")
FUSIONS = ("sum", "mean_probs", "concat")


@dataclass
class TrainOptions:
    """Plain-number view of the knobs the training loops need."""

    lr: float = 0.01
    mi_lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: dict = field(default_factory=dict)
    default_epochs: int = 40
    patience: int = 10
    min_delta: float = 1e-4
    encoder_hidden: tuple = (64,)
    feature_dim: int = 32
    mi_hidden: tuple = (64,)
    clip_norm: float = 5.0
    mi_clip_norm: float = 10.0
    controller_mode: str = "dynamic"
    fixed_alphas: tuple = (0.5, 0.5)
    epsilon: float = 1e-8
    task_loss: str = "fused"
    js_normalize: bool = True
    anchor: str = "auto"
    fusion: str = "sum"
    tie_threshold: float = 0.005
    concat_epochs: int = 20
    seed: int = 0

    def epochs_for(self, modality):
        return int(self.epochs.get(modality, self.default_epochs))


# ---------------------------------------------------------------------------
# building blocks


class Optimizer:
    """SGD with momentum and L2 weight decay folded into the velocity.

    v <- momentum * v + g + weight_decay * theta;  theta <- theta - lr * v

    ``clip_norm`` rescales the raw gradients to at most that global L2 norm
    before the update (off when None).
    """

    def __init__(self, params, lr, momentum=0.9, weight_decay=1e-4, clip_norm=None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm

    def _grad_scale(self):
        if self.clip_norm is None:
            return 1.0
        sq = sum(float(np.sum(t.grad * t.grad)) for t in self.params.values() if t.grad is not None)
        norm = math.sqrt(sq)
        return self.clip_norm / norm if norm > self.clip_norm else 1.0

    def step(self):
        vel = self.params.velocity
        scale = self._grad_scale()
        for k, t in self.params.items():
            if not t.requires_grad:
                raise ContractError(f"optimizer step on frozen parameter {k!r}")
            g = t.grad if t.grad is not None else 0.0
            if scale != 1.0:
                g = g * scale
            v = vel.get(k)
            v = g + self.weight_decay * t.data if v is None else self.momentum * v + g + self.weight_decay * t.data
            vel[k] = v
            t.data = t.data - self.lr * v

    def zero_grad(self):
        self.params.zero_grad()


class ModalityBranch:
    """Encoder plus decision head for one modality, with its own ParamSet."""

    def __init__(self, modality, d_in, n_classes, opts):
        self.modality = modality
        self.params = ad.ParamSet()
        dims = [d_in, *opts.encoder_hidden, opts.feature_dim]
        self.encoder = MlpEncoder(self.params, modality, dims, opts.seed)
        self.head = DecisionHead(self.params, modality, opts.feature_dim, n_classes, opts.seed)
        self.frozen = False
        self.trained = False
        self.val_acc = float("nan")
        self.val_entropy = float("nan")
        self.best_epoch = 0

    def forward(self, x):
        f = self.encoder(x)
        logits, probs = self.head(f)
        return f, logits, probs

    def predict(self, x):
        """Numpy (features, logits) without building a graph."""
        was_trainable = self.params.trainable
        self.params.set_trainable(False)
        try:
            f, logits, _ = self.forward(ad.Tensor(x))
        finally:
            self.params.set_trainable(was_trainable)
        return f.data, logits.data

    def freeze(self):
        self.params.set_trainable(False)
        self.frozen = True

    def checksum(self):
        return self.params.checksum()


def softmax_np(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def epoch_order(n, seed, epoch):
    """Shuffle of ``range(n)`` for one epoch, a pure function of (seed, epoch)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(epoch)]))
    return rng.permutation(n)


def batches(order, batch_size):
    for s in range(0, order.size, batch_size):
        yield order[s : s + batch_size]


def _finite(value, where):
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss {value!r} at {where}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate_probs(probs, labels, n_classes):
    """Accuracy, macro-F1 and a per-class table for predicted probabilities."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("evaluate: empty split")
    pred = np.asarray(probs).argmax(axis=1)
    acc = float(np.mean(pred == labels))
    per_class, f1s = [], []
    for k in range(n_classes):
        tp = int(np.sum((pred == k) & (labels == k)))
        fp = int(np.sum((pred == k) & (labels != k)))
        fn = int(np.sum((pred != k) & (labels == k)))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per_class.append({"class": k, "precision": prec, "recall": rec, "f1": f1, "support": tp + fn})
        f1s.append(f1)
    return {"acc": acc, "macro_f1": float(np.mean(f1s)), "per_class": per_class}


def fuse_logits(logit_list, rule="sum", concat_head=None, feats=None):
    """Fused class probabilities (numpy) from per-branch logits."""
    if rule == "sum":
        return softmax_np(np.sum(logit_list, axis=0))
    if rule == "mean_probs":
        return np.mean([softmax_np(z) for z in logit_list], axis=0)
    if rule == "concat":
        if concat_head is None:
            raise ContractError("concat fusion needs a trained concat head")
        _, probs = concat_head(ad.Tensor(np.hstack(feats)))
        return probs.data
    raise ContractError(f"unknown fusion rule {rule!r}")


@dataclass
class TrainedEnsemble:
    branches: list
    estimators: dict = field(default_factory=dict)
    fusion: str = "sum"
    concat_head: object = None
    concat_params: object = None
    anchor: str = ""

    def branch(self, modality):
        for b in self.branches:
            if b.modality == modality:
                return b
        raise KeyError(modality)


def fuse_predict(ensemble, ds, rows, rule=None, order=None):
    """Fused probabilities for ``rows``; branches are evaluated in dataset modality order."""
    rule = rule or ensemble.fusion
    branches = [ensemble.branch(m) for m in (order or ds.names)]
    for b in branches:
        if not b.trained:
            raise ContractError(f"branch {b.modality!r} is untrained")
    feats, logits = [], []
    for b in branches:
        f, z = b.predict(ds.features[ds.index(b.modality)][rows])
        feats.append(f)
        logits.append(z)
    return fuse_logits(logits, rule, ensemble.concat_head, feats)


def evaluate_ensemble(ensemble, ds, split, rule=None):
    rows = ds.rows(split)
    y = ds.labels[rows]
    out = {"unimodal": {}}
    for b in ensemble.branches:
        _, z = b.predict(ds.features[ds.index(b.modality)][rows])
        out["unimodal"][b.modality] = evaluate_probs(softmax_np(z), y, ds.n_classes)["acc"]
    fused = evaluate_probs(fuse_predict(ensemble, ds, rows, rule), y, ds.n_classes)
    out["fused_acc"] = fused["acc"]
    out["macro_f1"] = fused["macro_f1"]
    out["per_class"] = fused["per_class"]
    return out


# ---------------------------------------------------------------------------
# metrics plumbing


class RowSink:
    """Collects metrics rows in memory; the CLI serializes them."""

    def __init__(self, run_id="run", strategy=""):
        self.run_id = run_id
        self.strategy = strategy
        self.rows = []
        self.timings = []

    def add(self, stage, modality, epoch, split, **values):
        row = {"run_id": self.run_id, "strategy": self.strategy, "stage": stage, "modality": modality,
               "epoch": epoch, "split": split}
        row.update(values)
        self.rows.append(row)

    def time(self, stage, modality, seconds):
        self.timings.append({"run_id": self.run_id, "stage": stage, "modality": modality, "seconds": seconds})


def _unimodal_eval(branch, x, y, n_classes):
    _, z = branch.predict(x)
    p = softmax_np(z)
    return evaluate_probs(p, y, n_classes)["acc"], predictive_entropy(p)


# ---------------------------------------------------------------------------
# stage: standalone training


def train_unimodal(branch, ds, opts, sink=None, stage="probe"):
    """Mini-batch SGD on the branch's own cross-entropy with early stopping on val accuracy."""
    if ds.n == 0:
        raise DataError("train_unimodal: empty dataset")
    m = branch.modality
    col = ds.index(m)
    tr, va = ds.rows("train"), ds.rows("val")
    if tr.size == 0:
        raise DataError("train_unimodal: no training rows")
    x_tr, y_tr = ds.features[col][tr], one_hot(ds.labels[tr], ds.n_classes)
    x_va, y_va = ds.features[col][va], ds.labels[va]
    opt = Optimizer(branch.params, opts.lr, opts.momentum, opts.weight_decay, opts.clip_norm)
    t0 = time.perf_counter()

    acc, ent = _unimodal_eval(branch, x_va, y_va, ds.n_classes)
    branch.val_acc, branch.val_entropy, branch.best_epoch = acc, ent, 0
    best_acc, best_state, wait = -math.inf, branch.params.state(), 0
    for epoch in range(1, opts.epochs_for(m) + 1):
        tot, nb = 0.0, 0
        for b in batches(epoch_order(tr.size, opts.seed, epoch), opts.batch_size):
            opt.zero_grad()
            _, _, probs = branch.forward(ad.Tensor(x_tr[b]))
            loss = cross_entropy(probs, y_tr[b])
            val = float(loss.data)
            _finite(val, f"{stage}:{m} epoch {epoch}")
            ad.backward(loss)
            opt.step()
            tot += val
            nb += 1
        acc, ent = _unimodal_eval(branch, x_va, y_va, ds.n_classes)
        if sink is not None:
            sink.add(stage, m, epoch, "train", cls=tot / nb, total=tot / nb)
            sink.add(stage, m, epoch, "val", **{f"acc_{m}": acc})
        log.debug("%s %s epoch %d loss %.4f val_acc %.4f", stage, m, epoch, tot / nb, acc)
        if acc > best_acc + opts.min_delta:
            best_acc, wait = acc, 0
            best_state = branch.params.state()
            branch.val_acc, branch.val_entropy, branch.best_epoch = acc, ent, epoch
        else:
            wait += 1
            if wait >= opts.patience:
                break
    branch.params.load_state(best_state)
    branch.params.velocity.clear()
    branch.trained = True
    if sink is not None:
        sink.time(stage, m, time.perf_counter() - t0)
    log.info("%s %s: best epoch %d, val acc %.4f", stage, m, branch.best_epoch, branch.val_acc)
    return branch


def select_anchor(branches, tie_threshold=0.005):
    """Modality id of the anchor: best val accuracy, entropy tie-break, then index."""
    if not branches:
        raise ContractError("select_anchor: no branches")
    best = max(b.val_acc for b in branches)
    tied = [b for b in branches if best - b.val_acc <= tie_threshold]
    if len(tied) == 1:
        return tied[0].modality
    low = min(b.val_entropy for b in tied)
    return next(b.modality for b in tied if b.val_entropy == low)


def training_order(branches, anchor, tie_threshold=0.005):
    """Anchor first, then the rest by the same ranking rule applied repeatedly."""
    rest = [b for b in branches if b.modality != anchor]
    order = [anchor]
    while rest:
        nxt = select_anchor(rest, tie_threshold)
        order.append(nxt)
        rest = [b for b in rest if b.modality != nxt]
    return order


# ---------------------------------------------------------------------------
# stage: follower


class FollowerStage:
    """State for training one new branch under guidance of frozen branches."""

    def __init__(self, guides, follower, ds, opts):
        if not guides:
            raise ContractError("follower stage needs at least one frozen branch")
        for g in guides:
            if not g.frozen:
                raise ContractError(f"guide branch {g.modality!r} is not frozen")
        self.guides = guides
        self.follower = follower
        self.ds = ds
        self.opts = opts
        m = follower.modality
        self.estimators = {}
        for g in guides:
            pair = f"{g.modality}-{m}"
            ps = ad.ParamSet()
            q = GaussianConditional(ps, pair, opts.feature_dim, opts.feature_dim, list(opts.mi_hidden), opts.seed)
            opt = Optimizer(ps, opts.mi_lr, opts.momentum, opts.weight_decay, opts.mi_clip_norm)
            self.estimators[pair] = (q, ps, opt)
        if opts.controller_mode == "dynamic":
            self.controller = DynamicController(opts.epsilon)
        else:
            self.controller = FixedController(*opts.fixed_alphas)

    def guide_outputs(self, rows):
        feats, logits = [], []
        for g in self.guides:
            f, z = g.predict(self.ds.features[self.ds.index(g.modality)][rows])
            feats.append(f)
            logits.append(z)
        return feats, np.sum(logits, axis=0)

    def losses(self, f_m, logits_m, probs_m, guide_feats, guide_logit_sum, y):
        """(task, cls, con, com) tensors for one batch; guides enter as constants."""
        cls = cross_entropy(probs_m, y)
        if self.opts.task_loss == "fused":
            task = cross_entropy(ad.softmax_rows(ad.add(ad.Tensor(guide_logit_sum), logits_m)), y)
        else:
            task = cls
        con = js_consistency(softmax_np(guide_logit_sum), probs_m, self.opts.js_normalize)
        coms = [mi_upper_bound(q, gf, f_m) for (q, _, _), gf in zip(self.estimators.values(), guide_feats)]
        com = coms[0]
        for extra in coms[1:]:
            com = ad.add(com, extra)
        if len(coms) > 1:
            com = ad.scale(com, 1.0 / len(coms))
        return task, cls, con, com

    def estimator_step(self, guide_feats, f_m):
        total = 0.0
        for (q, ps, opt), gf in zip(self.estimators.values(), guide_feats):
            opt.zero_grad()
            loss = mi_nll(q, gf, f_m)
            ad.backward(loss)
            opt.step()
            total += float(loss.data)
        return total / len(self.estimators)


def train_follower(guides, follower, ds, opts, sink=None, stage="follower"):
    """Train ``follower`` guided by the frozen ``guides``; returns (branch, FollowerStage)."""
    st = FollowerStage(guides, follower, ds, opts)
    checks = {g.modality: g.checksum() for g in guides}
    m = follower.modality
    col = ds.index(m)
    tr, va = ds.rows("train"), ds.rows("val")
    x_tr, y_tr = ds.features[col][tr], one_hot(ds.labels[tr], ds.n_classes)
    x_va, y_va = ds.features[col][va], ds.labels[va]
    g_feats_tr, g_sum_tr = st.guide_outputs(tr)
    _, g_sum_va = st.guide_outputs(va)
    opt = Optimizer(follower.params, opts.lr, opts.momentum, opts.weight_decay, opts.clip_norm)
    t0 = time.perf_counter()

    acc, ent = _unimodal_eval(follower, x_va, y_va, ds.n_classes)
    follower.val_acc, follower.val_entropy, follower.best_epoch = acc, ent, 0
    best_acc, best_state, wait = -math.inf, follower.params.state(), 0
    for epoch in range(1, opts.epochs_for(m) + 1):
        sums = np.zeros(5)
        nb = 0
        for b in batches(epoch_order(tr.size, opts.seed, epoch), opts.batch_size):
            gf = [f[b] for f in g_feats_tr]
            f_m, logits_m, probs_m = follower.forward(ad.Tensor(x_tr[b]))
            nll = st.estimator_step(gf, f_m.data)
            task, cls, con, com = st.losses(f_m, logits_m, probs_m, gf, g_sum_tr[b], y_tr[b])
            st.controller.maybe_update(epoch, lambda: (task, con, com), follower.params)
            a_con, a_com = st.controller.alphas
            total = cls
            if a_con != 0.0:
                total = ad.add(total, ad.scale(con, a_con))
            if a_com != 0.0:
                total = ad.add(total, ad.scale(com, a_com))
            bd = LossBreakdown(float(cls.data), float(con.data), float(com.data), nll, float(total.data), m)
            _finite(bd.total, f"{stage}:{m} epoch {epoch}")
            opt.zero_grad()
            ad.backward(total)
            opt.step()
            sums += (bd.cls, bd.con, bd.com, bd.mi_nll, bd.total)
            nb += 1
        acc, ent = _unimodal_eval(follower, x_va, y_va, ds.n_classes)
        _, z_va = follower.predict(x_va)
        fused_va = evaluate_probs(softmax_np(g_sum_va + z_va), y_va, ds.n_classes)["acc"]
        if sink is not None:
            s = st.controller.state
            mean = sums / nb
            sink.add(stage, m, epoch, "train", cls=mean[0], con=mean[1], com=mean[2], mi_nll=mean[3],
                     total=mean[4], alpha_con=s.alpha_con, alpha_com=s.alpha_com, xi_con=s.xi_con,
                     xi_com=s.xi_com)
            sink.add(stage, m, epoch, "val", **{f"acc_{m}": acc, "fused_acc": fused_va})
        log.debug("%s %s epoch %d total %.4f val_acc %.4f fused %.4f", stage, m, epoch, sums[4] / nb, acc, fused_va)
        if acc > best_acc + opts.min_delta:
            best_acc, wait = acc, 0
            best_state = follower.params.state()
            follower.val_acc, follower.val_entropy, follower.best_epoch = acc, ent, epoch
        else:
            wait += 1
            if wait >= opts.patience:
                break
    follower.params.load_state(best_state)
    follower.params.velocity.clear()
    follower.trained = True
    for g in guides:
        if g.checksum() != checks[g.modality]:
            raise ContractError(f"frozen branch {g.modality!r} changed during follower training")
    if sink is not None:
        sink.time(stage, m, time.perf_counter() - t0)
    log.info("%s %s: best epoch %d, val acc %.4f, alphas %s", stage, m, follower.best_epoch,
             follower.val_acc, st.controller.alphas)
    return follower, st


def train_trimodal_stage(guides, branch, ds, opts, sink=None):
    """Third-or-later modality stage: guided by the fused output of two or more frozen branches."""
    if len(guides) < 2:
        raise ContractError("trimodal stage needs at least two trained branches")
    return train_follower(guides, branch, ds, opts, sink, stage="follower")


def train_concat_head(branches, ds, opts, sink=None):
    """Small joint head over concatenated frozen features."""
    for b in branches:
        if not b.frozen:
            raise ContractError("concat head is trained with all branches frozen")
    ps = ad.ParamSet()
    d = opts.feature_dim * len(branches)
    head = DecisionHead(ps, "concat", d, ds.n_classes, opts.seed)
    tr, va = ds.rows("train"), ds.rows("val")

    def feats(rows):
        return np.hstack([b.predict(ds.features[ds.index(b.modality)][rows])[0] for b in branches])

    f_tr, y_tr = feats(tr), one_hot(ds.labels[tr], ds.n_classes)
    f_va, y_va = feats(va), ds.labels[va]
    opt = Optimizer(ps, opts.lr, opts.momentum, opts.weight_decay, opts.clip_norm)
    best_acc, best_state = -math.inf, ps.state()
    for epoch in range(1, opts.concat_epochs + 1):
        for b in batches(epoch_order(tr.size, opts.seed, epoch), opts.batch_size):
            opt.zero_grad()
            _, probs = head(ad.Tensor(f_tr[b]))
            loss = cross_entropy(probs, y_tr[b])
            _finite(float(loss.data), f"concat epoch {epoch}")
            ad.backward(loss)
            opt.step()
        _, p_va = head(ad.Tensor(f_va))
        acc = evaluate_probs(p_va.data, y_va, ds.n_classes)["acc"]
        if sink is not None:
            sink.add("concat", "fused", epoch, "val", fused_acc=acc)
        if acc > best_acc + opts.min_delta:
            best_acc, best_state = acc, ps.state()
    ps.load_state(best_state)
    ps.set_trainable(False)
    return head, ps


# ---------------------------------------------------------------------------
# strategies


def new_branch(ds, modality, opts):
    return ModalityBranch(modality, ds.features[ds.index(modality)].shape[1], ds.n_classes, opts)


def train_probes(ds, opts, sink=None):
    """Standalone training of every branch (the decoupled baseline and the anchor-selection pass)."""
    return [train_unimodal(new_branch(ds, m, opts), ds, opts, sink, stage="probe") for m in ds.names]


@dataclass
class RunResult:
    strategy: str
    ensemble: TrainedEnsemble
    test: dict
    order: list = field(default_factory=list)
    anchor: str = ""
    stages: list = field(default_factory=list)
    controllers: dict = field(default_factory=dict)
    probes: list = field(default_factory=list)

    def summary(self):
        out = {"strategy": self.strategy, "fused_acc": self.test["fused_acc"], "macro_f1": self.test["macro_f1"]}
        out.update({f"acc_{m}": v for m, v in self.test["unimodal"].items()})
        if self.anchor:
            out["anchor"] = self.anchor
        return out


def run_udi(ds, opts, sink=None, probes=None):
    """Full sequential procedure.  ``probes`` may carry already-trained standalone branches."""
    if probes is None:
        probes = train_probes(ds, opts, sink)
    by_mod = {b.modality: b for b in probes}
    if opts.anchor == "auto":
        anchor = select_anchor(probes, opts.tie_threshold)
    elif opts.anchor in by_mod:
        anchor = opts.anchor
    else:
        raise ContractError(f"anchor {opts.anchor!r} is not a modality of this dataset")
    order = training_order(probes, anchor, opts.tie_threshold)
    anchor_branch = by_mod[anchor]
    anchor_branch.freeze()
    anchor_sum = anchor_branch.checksum()
    if sink is not None:
        # the anchor's own stage is its standalone run; relabel those rows
        for row in sink.rows:
            if row["stage"] == "probe" and row["modality"] == anchor:
                row["stage"] = "anchor"
    trained, stages, controllers, estimators = [anchor_branch], [("anchor", anchor)], {}, {}
    for m in order[1:]:
        branch = new_branch(ds, m, opts)
        if len(trained) >= 2:
            branch, st = train_trimodal_stage(trained, branch, ds, opts, sink)
        else:
            branch, st = train_follower(trained, branch, ds, opts, sink)
        branch.freeze()
        trained.append(branch)
        stages.append(("follower", m))
        controllers[m] = st.controller
        estimators.update({pair: (q, ps) for pair, (q, ps, _) in st.estimators.items()})
    if anchor_branch.checksum() != anchor_sum:
        raise ContractError("anchor parameters changed after the anchor stage")
    ens = TrainedEnsemble(trained, estimators, opts.fusion, anchor=anchor)
    if opts.fusion == "concat":
        ens.concat_head, ens.concat_params = train_concat_head(trained, ds, opts, sink)
    test = evaluate_ensemble(ens, ds, "test")
    return RunResult("udi", ens, test, order, anchor, stages, controllers, probes)


def run_joint_sum(ds, opts, sink=None):
    """All branches optimized together on one cross-entropy of summed logits."""
    branches = [new_branch(ds, m, opts) for m in ds.names]
    params = ad.ParamSet()
    for b in branches:
        params.update(b.params)
    tr, va = ds.rows("train"), ds.rows("val")
    xs_tr = [ds.features[ds.index(b.modality)][tr] for b in branches]
    y_tr = one_hot(ds.labels[tr], ds.n_classes)
    opt = Optimizer(params, opts.lr, opts.momentum, opts.weight_decay, opts.clip_norm)
    epochs = max(opts.epochs_for(m) for m in ds.names)
    ens = TrainedEnsemble(branches, fusion="sum")
    t0 = time.perf_counter()

    def val_acc():
        for b in branches:
            b.trained = True
        return evaluate_probs(fuse_predict(ens, ds, va, "sum"), ds.labels[va], ds.n_classes)["acc"]

    best_acc, best_state, wait, best_epoch = -math.inf, params.state(), 0, 0
    for epoch in range(1, epochs + 1):
        tot, nb = 0.0, 0
        for bidx in batches(epoch_order(tr.size, opts.seed, epoch), opts.batch_size):
            opt.zero_grad()
            logits = [b.forward(ad.Tensor(x[bidx]))[1] for b, x in zip(branches, xs_tr)]
            loss = cross_entropy(fused_probs(logits), y_tr[bidx])
            val = float(loss.data)
            _finite(val, f"joint_sum epoch {epoch}")
            ad.backward(loss)
            opt.step()
            tot += val
            nb += 1
        acc = val_acc()
        if sink is not None:
            sink.add("joint", "all", epoch, "train", cls=tot / nb, total=tot / nb)
            sink.add("joint", "all", epoch, "val", fused_acc=acc)
        if acc > best_acc + opts.min_delta:
            best_acc, best_state, wait, best_epoch = acc, params.state(), 0, epoch
        else:
            wait += 1
            if wait >= opts.patience:
                break
    params.load_state(best_state)
    for b in branches:
        b.trained = True
        b.best_epoch = best_epoch
        b.freeze()
    if sink is not None:
        sink.time("joint", "all", time.perf_counter() - t0)
    test = evaluate_ensemble(ens, ds, "test")
    return RunResult("joint_sum", ens, test, list(ds.names), stages=[("joint", "all")])


def run_decoupled(ds, opts, sink=None, probes=None):
    """Independent standalone branches fused by averaging their probabilities."""
    if probes is None:
        probes = train_probes(ds, opts, sink)
    for b in probes:
        b.freeze()
    ens = TrainedEnsemble(list(probes), fusion="mean_probs")
    test = evaluate_ensemble(ens, ds, "test")
    return RunResult("decoupled", ens, test, list(ds.names), stages=[("probe", b.modality) for b in probes],
                     probes=probes)


def run_strategy(strategy, ds, opts, sink=None):
    if strategy == "udi":
        return run_udi(ds, opts, sink)
    if strategy == "joint_sum":
        return run_joint_sum(ds, opts, sink)
    if strategy == "decoupled":
        return run_decoupled(ds, opts, sink)
    raise ContractError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")

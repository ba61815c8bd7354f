"""Run checkpoints: one JSON parameter file per branch and per MI estimator, plus a manifest."""

import json
import os
from dataclasses import asdict

from . import autodiff as ad
from .errors import ContractError
from .nets import DecisionHead, GaussianConditional
from .pipeline import ModalityBranch, TrainedEnsemble, TrainOptions

MANIFEST = "manifest.json"
FORMAT = 1


def options_to_dict(opts):
    return json.loads(json.dumps(asdict(opts)))


def options_from_dict(doc):
    doc = dict(doc)
    for k in ("encoder_hidden", "mi_hidden", "fixed_alphas"):
        if k in doc:
            doc[k] = tuple(doc[k])
    return TrainOptions(**doc)


def save_run(ckpt_dir, result, ds, opts):
    """Write every trained component of ``result`` under ``ckpt_dir``; returns the manifest dict."""
    os.makedirs(ckpt_dir, exist_ok=True)
    ens = result.ensemble
    branches = []
    for b in ens.branches:
        fname = f"branch_{b.modality}.json"
        b.params.save(os.path.join(ckpt_dir, fname))
        branches.append({
            "modality": b.modality,
            "d_in": int(ds.features[ds.index(b.modality)].shape[1]),
            "file": fname,
            "checksum": b.checksum(),
            "best_epoch": int(b.best_epoch),
        })
    estimators = []
    for pair, (q, ps) in sorted(ens.estimators.items()):
        fname = f"mi_{pair}.json"
        ps.save(os.path.join(ckpt_dir, fname))
        estimators.append({"pair": pair, "d_cond": q.d_cond, "d_target": q.d_target, "file": fname,
                           "checksum": ps.checksum()})
    concat = None
    if ens.concat_params is not None:
        ens.concat_params.save(os.path.join(ckpt_dir, "concat_head.json"))
        concat = {"file": "concat_head.json", "d_feat": ens.concat_head.d_feat,
                  "checksum": ens.concat_params.checksum()}
    manifest = {
        "format": FORMAT,
        "strategy": result.strategy,
        "order": list(result.order),
        "anchor": result.anchor,
        "fusion": ens.fusion,
        "n_classes": int(ds.n_classes),
        "modalities": list(ds.names),
        "dataset_fingerprint": ds.fingerprint(),
        "branches": branches,
        "estimators": estimators,
        "concat": concat,
        "options": options_to_dict(opts),
    }
    with open(os.path.join(ckpt_dir, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _load_params(ckpt_dir, entry, target):
    path = os.path.join(ckpt_dir, entry["file"])
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint file missing: {path}")
    stored = ad.ParamSet.load(path)
    target.load_state(stored.state())
    if target.checksum() != entry["checksum"]:
        raise ContractError(f"{path}: checksum mismatch")


def load_manifest(ckpt_dir):
    path = os.path.join(ckpt_dir, MANIFEST)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != FORMAT:
        raise ContractError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    return manifest


def load_run(ckpt_dir):
    """Rebuild the frozen ensemble written by :func:`save_run`; returns (ensemble, manifest)."""
    manifest = load_manifest(ckpt_dir)
    opts = options_from_dict(manifest["options"])
    branches = []
    for entry in manifest["branches"]:
        b = ModalityBranch(entry["modality"], entry["d_in"], manifest["n_classes"], opts)
        _load_params(ckpt_dir, entry, b.params)
        b.freeze()
        b.trained = True
        b.best_epoch = entry["best_epoch"]
        branches.append(b)
    estimators = {}
    for entry in manifest["estimators"]:
        ps = ad.ParamSet()
        q = GaussianConditional(ps, entry["pair"], entry["d_cond"], entry["d_target"], list(opts.mi_hidden), opts.seed)
        _load_params(ckpt_dir, entry, ps)
        ps.set_trainable(False)
        estimators[entry["pair"]] = (q, ps)
    ens = TrainedEnsemble(branches, estimators, manifest["fusion"], anchor=manifest["anchor"])
    if manifest["concat"] is not None:
        ps = ad.ParamSet()
        ens.concat_head = DecisionHead(ps, "concat", manifest["concat"]["d_feat"], manifest["n_classes"], opts.seed)
        _load_params(ckpt_dir, manifest["concat"], ps)
        ps.set_trainable(False)
        ens.concat_params = ps
    return ens, manifest

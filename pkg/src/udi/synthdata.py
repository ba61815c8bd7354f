"""Synthetic multimodal datasets and CSV ingestion.

Three regimes:

* ``redundant``: modality 2 is a noisy linear image of modality 1 and carries
  no label information beyond it.
* ``complementary``: the label is a pair of independent factors; each
  modality sees one factor, plus a shared label-free nuisance.
* ``imbalanced``: both modalities see the same class signal at different SNR.

Every generator is a pure function of its arguments (seed included).
"""

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

SPLITS = ("train", "val", "test")


@dataclass
class MultimodalDataset:
    names: list
    features: list
    labels: np.ndarray
    n_classes: int
    split: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.labels.shape[0]
        if len(self.names) != len(self.features):
            raise DataError("one name per modality required")
        for name, x in zip(self.names, self.features):
            if x.ndim != 2 or x.shape[0] != n:
                raise DataError(f"modality {name!r} has shape {x.shape}, expected {n} rows")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if self.split.shape != (n,) or not set(np.unique(self.split)) <= set(SPLITS):
            raise DataError("split tags must be one of train/val/test per row")

    @property
    def n(self):
        return int(self.labels.shape[0])

    @property
    def n_modalities(self):
        return len(self.names)

    def dims(self):
        return [int(x.shape[1]) for x in self.features]

    def index(self, name):
        return self.names.index(name)

    def rows(self, split):
        return np.flatnonzero(self.split == split)

    def take(self, rows):
        """Features (list) and labels for the given row indices."""
        return [x[rows] for x in self.features], self.labels[rows]

    def fingerprint(self):
        h = hashlib.sha256()
        for name, x in zip(self.names, self.features):
            h.update(name.encode())
            h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        h.update("".join(self.split).encode())
        return h.hexdigest()


def stratified_split(labels, fractions=(0.7, 0.15, 0.15), seed=0):
    """Per-class shuffled 70/15/15 (by default) assignment of rows to splits."""
    labels = np.asarray(labels)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise DataError(f"split fractions must be three nonnegative numbers summing to 1: {fractions}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5B11]))
    split = np.empty(labels.shape[0], dtype="<U5")
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        idx = idx[rng.permutation(idx.size)]
        n_tr = int(round(fractions[0] * idx.size))
        n_va = int(round(fractions[1] * idx.size))
        split[idx[:n_tr]] = "train"
        split[idx[n_tr : n_tr + n_va]] = "val"
        split[idx[n_tr + n_va :]] = "test"
    return split


def _rng(seed, stream):
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream]))


def _class_means(c, d, sep, rng):
    """c points with all pairwise distances equal to ``sep`` when c <= d."""
    g = rng.standard_normal((max(c, d), d))
    if c <= d:
        q, _ = np.linalg.qr(g[:d].T)
        dirs = q[:, :c].T
    else:
        dirs = g[:c] / np.linalg.norm(g[:c], axis=1, keepdims=True)
    return dirs * (sep / math.sqrt(2.0))


def _balanced_labels(n, c, rng):
    y = np.arange(n) % c
    return y[rng.permutation(n)]


def _check_common(n, c):
    if c < 2:
        raise DataError(f"need at least 2 classes, got {c}")
    if n < 10 * c:
        raise DataError(f"need n >= 10 * c samples, got n={n}, c={c}")


def gen_redundant(n=3000, c=4, d1=16, d2=64, noise=10.0, seed=0, sep=5.0, sigma=1.0, gain=10.0):
    """Modality 2 = modality 1 through a fixed linear map, plus a constant bias pattern and noise.

    Modality 1 is a Gaussian mixture with class means at pairwise distance
    ``sep`` and isotropic spread ``sigma``.  With ``noise=0`` modality 2 is an
    exact affine function of modality 1.
    """
    _check_common(n, c)
    if d1 < 1 or d2 < 1 or noise < 0 or sigma <= 0:
        raise DataError("gen_redundant: dims must be positive and noise, sigma nonnegative/positive")
    rng = _rng(seed, 1)
    y = _balanced_labels(n, c, rng)
    means = _class_means(c, d1, sep, rng)
    x1 = means[y] + sigma * rng.standard_normal((n, d1))
    A = gain * rng.standard_normal((d1, d2)) / math.sqrt(d1)
    bias = rng.uniform(-1.0, 1.0, size=d2)
    x2 = x1 @ A + bias[None, :] + noise * rng.standard_normal((n, d2))
    params = dict(n=n, c=c, d1=d1, d2=d2, noise=noise, seed=seed, sep=sep, sigma=sigma, gain=gain)
    return MultimodalDataset(
        ["m1", "m2"], [x1, x2], y, c, stratified_split(y, seed=seed), {"generator": "redundant", "params": params}
    )


def factor_sizes(c):
    """Split c into two factor cardinalities (ca, cb), ca <= cb, both >= 2, as balanced as possible."""
    for ca in range(int(math.isqrt(c)), 1, -1):
        if c % ca == 0:
            return ca, c // ca
    raise DataError(f"complementary regime needs a composite class count >= 4, got {c}")


def gen_complementary(n=3000, c=4, d_shared=4, d_specific=8, seed=0, sep=4.0, sigma=1.0, shared_scale=1.0):
    """Label = (factor A, factor B); modality 1 sees A, modality 2 sees B.

    Both modalities also carry a common label-independent nuisance of
    dimension ``d_shared``, so their features share information that is
    useless for the task.
    """
    _check_common(n, c)
    if c < 4:
        raise DataError(f"gen_complementary: c must be >= 4, got {c}")
    if d_specific < 1 or d_shared < 0:
        raise DataError("gen_complementary: d_specific must be >= 1 and d_shared >= 0")
    ca, cb = factor_sizes(c)
    rng = _rng(seed, 2)
    y = _balanced_labels(n, c, rng)
    fa, fb = y // cb, y % cb
    means_a = _class_means(ca, d_specific, sep, rng)
    means_b = _class_means(cb, d_specific, sep, rng)
    za = means_a[fa] + sigma * rng.standard_normal((n, d_specific))
    zb = means_b[fb] + sigma * rng.standard_normal((n, d_specific))
    shared = rng.standard_normal((n, d_shared))
    mix1 = shared_scale * rng.standard_normal((d_shared, d_shared))
    mix2 = shared_scale * rng.standard_normal((d_shared, d_shared))
    x1 = np.hstack([za, shared @ mix1])
    x2 = np.hstack([zb, shared @ mix2])
    params = dict(
        n=n, c=c, d_shared=d_shared, d_specific=d_specific, seed=seed, sep=sep, sigma=sigma, shared_scale=shared_scale
    )
    meta = {
        "generator": "complementary",
        "params": params,
        "factors": (ca, cb),
        "latents": {"a": za, "b": zb, "means_a": means_a, "means_b": means_b},
    }
    return MultimodalDataset(["m1", "m2"], [x1, x2], y, c, stratified_split(y, seed=seed), meta)


def gen_imbalanced(n=3000, c=4, snr1=4.0, snr2=1.0, seed=0, d=16):
    """Both modalities carry the same class signal; ``snr_m`` scales it against unit noise."""
    _check_common(n, c)
    if snr1 < 0 or snr2 < 0 or d < 1:
        raise DataError("gen_imbalanced: SNRs must be nonnegative and d positive")
    rng = _rng(seed, 3)
    y = _balanced_labels(n, c, rng)
    means = _class_means(c, d, math.sqrt(2.0), rng)
    feats = []
    for snr in (snr1, snr2):
        rot, _ = np.linalg.qr(rng.standard_normal((d, d)))
        feats.append(math.sqrt(snr) * means[y] @ rot + rng.standard_normal((n, d)))
    params = dict(n=n, c=c, snr1=snr1, snr2=snr2, seed=seed, d=d)
    return MultimodalDataset(
        ["m1", "m2"], feats, y, c, stratified_split(y, seed=seed), {"generator": "imbalanced", "params": params}
    )


def gen_trimodal(n=3000, c=4, snrs=(6.0, 3.0, 1.5), seed=0, d=16):
    """Three views of one class signal at decreasing SNR."""
    _check_common(n, c)
    rng = _rng(seed, 4)
    y = _balanced_labels(n, c, rng)
    means = _class_means(c, d, math.sqrt(2.0), rng)
    feats = []
    for snr in snrs:
        rot, _ = np.linalg.qr(rng.standard_normal((d, d)))
        feats.append(math.sqrt(snr) * means[y] @ rot + rng.standard_normal((n, d)))
    names = [f"m{i + 1}" for i in range(len(snrs))]
    params = dict(n=n, c=c, snrs=list(snrs), seed=seed, d=d)
    return MultimodalDataset(names, feats, y, c, stratified_split(y, seed=seed), {"generator": "trimodal", "params": params})


GENERATORS = {
    "redundant": gen_redundant,
    "complementary": gen_complementary,
    "imbalanced": gen_imbalanced,
    "trimodal": gen_trimodal,
}


def generate(generator, **params):
    try:
        fn = GENERATORS[generator]
    except KeyError:
        raise DataError(f"unknown generator {generator!r}; choose from {sorted(GENERATORS)}") from None
    return fn(**params)


def complementary_bayes_accuracy(ds):
    """Accuracy of the nearest-mean oracle on the latent factor features.

    Equal priors and isotropic noise make nearest-mean Bayes-optimal for each
    factor; returns (fused, modality-1-only, modality-2-only) accuracies, where
    a single modality can at best guess the unseen factor uniformly.
    """
    lat = ds.meta["latents"]
    ca, cb = ds.meta["factors"]
    y = ds.labels
    fa, fb = y // cb, y % cb

    def nearest(z, means):
        d2 = ((z[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    ok_a = nearest(lat["a"], lat["means_a"]) == fa
    ok_b = nearest(lat["b"], lat["means_b"]) == fb
    return float(np.mean(ok_a & ok_b)), float(np.mean(ok_a)) / cb, float(np.mean(ok_b)) / ca


# ---------------------------------------------------------------------------
# CSV


def _fmt(v):
    return repr(float(v))


def save_csv(ds, out_dir, force=False):
    """Write one CSV per modality plus labels.csv and split.csv; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, f"{name}.csv") for name in ds.names}
    paths["labels"] = os.path.join(out_dir, "labels.csv")
    paths["split"] = os.path.join(out_dir, "split.csv")
    if not force:
        clash = [p for p in paths.values() if os.path.exists(p)]
        if clash:
            raise DataError(f"refusing to overwrite {clash[0]} (pass force)")
    for name, x in zip(ds.names, ds.features):
        with open(paths[name], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"f{j}" for j in range(x.shape[1])])
            for row in x:
                w.writerow([_fmt(v) for v in row])
    with open(paths["labels"], "w", encoding="utf-8", newline="") as fh:
        fh.write("label\n")
        fh.writelines(f"{int(v)}\n" for v in ds.labels)
    with open(paths["split"], "w", encoding="utf-8", newline="") as fh:
        fh.write("split\n")
        fh.writelines(f"{s}\n" for s in ds.split)
    return paths


def _read_matrix(path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        width = len(header)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}: line {reader.line_num} has {len(row)} fields, expected {width}")
            vals = []
            for col, cell in enumerate(row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: line {reader.line_num}, column {col + 1} ({header[col]}): cannot parse {cell!r}"
                    ) from None
            rows.append(vals)
    return header, np.array(rows, dtype=np.float64).reshape(len(rows), width)


def _read_column(path, expected):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [expected]:
            raise DataError(f"{path}: header must be {expected!r}")
        out = []
        for row in reader:
            if not row:
                continue
            if len(row) != 1:
                raise DataError(f"{path}: line {reader.line_num} has {len(row)} fields, expected 1")
            out.append((reader.line_num, row[0].strip()))
    return out


def load_csv(modality_paths, labels_path, split_path=None, standardize=True, n_classes=None, split_seed=0):
    """Load a dataset written in the per-modality CSV layout.

    ``modality_paths`` maps modality name to file (or is a list, named
    m1, m2, ...).  Without ``split_path`` a stratified split is drawn with
    ``split_seed``.  Standardization uses train-split statistics only.
    """
    if not isinstance(modality_paths, dict):
        modality_paths = {f"m{i + 1}": p for i, p in enumerate(modality_paths)}
    names, feats = [], []
    for name, path in modality_paths.items():
        _, x = _read_matrix(path)
        names.append(name)
        feats.append(x)
    labels = []
    for line, cell in _read_column(labels_path, "label"):
        try:
            labels.append(int(cell))
        except ValueError:
            raise DataError(f"{labels_path}: line {line}: label {cell!r} is not an integer") from None
    y = np.array(labels, dtype=np.int64)
    for name, x in zip(names, feats):
        if x.shape[0] != y.size:
            raise DataError(f"row-count mismatch: {name} has {x.shape[0]} rows, labels have {y.size}")
    c = int(n_classes) if n_classes is not None else int(y.max()) + 1 if y.size else 0
    bad = np.flatnonzero((y < 0) | (y >= c))
    if bad.size:
        raise DataError(f"{labels_path}: label {y[bad[0]]} on data row {bad[0] + 1} is outside [0, {c})")
    if split_path is not None:
        split = np.array([s for _, s in _read_column(split_path, "split")], dtype="<U5")
        if split.size != y.size:
            raise DataError(f"row-count mismatch: split has {split.size} rows, labels have {y.size}")
        unknown = sorted(set(split) - set(SPLITS))
        if unknown:
            raise DataError(f"{split_path}: unknown split tag {unknown[0]!r}")
    else:
        split = stratified_split(y, seed=split_seed)
    if standardize:
        tr = split == "train"
        scaled = []
        for x in feats:
            mu = x[tr].mean(axis=0)
            sd = x[tr].std(axis=0)
            sd[sd == 0] = 1.0
            scaled.append((x - mu) / sd)
        feats = scaled
    meta = {"generator": "csv", "paths": {k: str(v) for k, v in modality_paths.items()}, "standardized": standardize}
    return MultimodalDataset(names, feats, y, c, split, meta)

"""Event classifiers over the six directional maneuver classes.

Two model families share one interface (``predict_proba`` on raw 50-sample
feature rows): a single-layer 1D CNN trained with Adam, and a random forest
whose nodes split records by their nearest per-class centroid. Both persist
to a small checksummed binary format.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptFile,
    EmptyDataset,
    IoFailure,
    MissingClass,
    ShapeMismatch,
    VersionMismatch,
)
from .features import N_FEATURES, PcaModel, pca_fit
from .telemetry import EVENT_CLASSES, N_EVENT_CLASSES, ManeuverLabel

# ---------------------------------------------------------------- 1D CNN


@dataclass(frozen=True)
class CnnConfig:
    filters: int = 250
    kernel_size: int = 3
    epochs: int = 40
    learning_rate: float = 0.001
    batch_size: int = 32
    # max-pool over this many equal blocks of conv positions; 1 is global pooling
    pool_regions: int = 4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class Cnn1dModel:
    conv_w: np.ndarray  # (filters, kernel)
    conv_b: np.ndarray  # (filters,)
    dense_w: np.ndarray  # (regions * filters, classes), region-major rows
    dense_b: np.ndarray  # (classes,)
    meta: dict = field(default_factory=dict)

    kind = "cnn"
    PARAMS = ("conv_w", "conv_b", "dense_w", "dense_b")

    @classmethod
    def init(
        cls,
        rng,
        filters: int = 250,
        kernel_size: int = 3,
        pool_regions: int = 1,
        n_classes: int = N_EVENT_CLASSES,
    ):
        """Glorot-uniform weights, zero biases."""
        if (N_FEATURES - kernel_size + 1) % pool_regions:
            raise ValueError("pool_regions must divide the number of conv positions")
        lim_c = math.sqrt(6.0 / (kernel_size + kernel_size * filters))
        n_pooled = pool_regions * filters
        lim_d = math.sqrt(6.0 / (n_pooled + n_classes))
        return cls(
            rng.uniform(-lim_c, lim_c, size=(filters, kernel_size)),
            np.zeros(filters),
            rng.uniform(-lim_d, lim_d, size=(n_pooled, n_classes)),
            np.zeros(n_classes),
        )

    @property
    def kernel_size(self) -> int:
        return self.conv_w.shape[1]

    @property
    def filters(self) -> int:
        return self.conv_w.shape[0]

    @property
    def pool_regions(self) -> int:
        return self.dense_w.shape[0] // self.filters

    def params(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in self.PARAMS]

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != N_FEATURES:
            raise ShapeMismatch(f"expected inputs of length {N_FEATURES}, got shape {x.shape}")
        return x

    def _forward(self, x):
        k = self.kernel_size
        width = x.shape[1] - k + 1
        # (batch, positions, kernel) view of every receptive field
        patches = np.stack([x[:, i : i + width] for i in range(k)], axis=2)
        pre = patches @ self.conv_w.T + self.conv_b  # (batch, positions, filters)
        act = np.maximum(pre, 0.0)
        r = self.pool_regions
        block = width // r
        blocks = act.reshape(x.shape[0], r, block, self.filters)
        # absolute position of each (region, filter) maximum
        where = blocks.argmax(axis=2) + (np.arange(r) * block)[None, :, None]
        where = where.reshape(x.shape[0], r * self.filters)
        cols = np.tile(np.arange(self.filters), r)
        pooled = act[np.arange(x.shape[0])[:, None], where, cols[None, :]]
        logits = pooled @ self.dense_w + self.dense_b
        return patches, pre, where, pooled, logits

    def logits(self, x) -> np.ndarray:
        return self._forward(self._check(x))[4]

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x))

    def gradients(self, x, y) -> tuple[float, list[np.ndarray]]:
        """Mean cross-entropy and its gradient for each entry of ``PARAMS``."""
        x = self._check(x)
        y = np.asarray(y, dtype=np.int64)
        if x.shape[0] == 0:
            raise EmptyDataset("gradient of an empty batch")
        patches, pre, where, pooled, logits = self._forward(x)
        p = softmax(logits)
        n = x.shape[0]
        rows = np.arange(n)
        loss = float(-np.mean(_log_softmax(logits)[rows, y]))
        d_logits = p.copy()
        d_logits[rows, y] -= 1.0
        d_logits /= n
        g_dense_w = pooled.T @ d_logits
        g_dense_b = d_logits.sum(axis=0)
        d_pooled = d_logits @ self.dense_w.T  # (batch, regions * filters)
        cols = np.tile(np.arange(self.filters), self.pool_regions)
        d_pre = d_pooled * (pooled > 0)
        # receptive field under each pooled maximum: (batch, regions * filters, kernel)
        chosen = np.take_along_axis(patches, where[:, :, None], axis=1)
        g_rows = np.einsum("bj,bjk->jk", d_pre, chosen)
        g_conv_w = np.zeros_like(self.conv_w)
        np.add.at(g_conv_w, cols, g_rows)
        g_conv_b = np.bincount(cols, weights=d_pre.sum(axis=0), minlength=self.filters)
        return loss, [g_conv_w, g_conv_b, g_dense_w, g_dense_b]


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass
class TrainReport:
    epoch_loss: list[float]
    train_accuracy: float
    seed: int

    def to_json(self) -> dict:
        return {"epoch_loss": self.epoch_loss, "train_accuracy": self.train_accuracy, "seed": self.seed}


def _check_dataset(x, y, need_all_classes: bool):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise EmptyDataset("training set is empty")
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {x.shape} do not match labels {y.shape}")
    if np.any((y < 0) | (y >= N_EVENT_CLASSES)):
        raise ValueError(f"class indices must lie in 0..{N_EVENT_CLASSES - 1}")
    if need_all_classes:
        missing = sorted(set(range(N_EVENT_CLASSES)) - set(y.tolist()))
        if missing:
            names = ", ".join(EVENT_CLASSES[i].value for i in missing)
            raise MissingClass(f"no training examples for: {names}")
    return x, y


def cnn_train(x, y, seed: int = 0, cfg: CnnConfig = CnnConfig()) -> tuple[Cnn1dModel, TrainReport]:
    """Mini-batch Adam on mean cross-entropy; bit-reproducible for a given seed."""
    x, y = _check_dataset(x, y, need_all_classes=True)
    if x.shape[1] != N_FEATURES:
        raise ShapeMismatch(f"expected {N_FEATURES} features, got {x.shape[1]}")
    rng = np.random.default_rng(seed)
    model = Cnn1dModel.init(rng, cfg.filters, cfg.kernel_size, cfg.pool_regions)
    m = [np.zeros_like(p) for p in model.params()]
    v = [np.zeros_like(p) for p in model.params()]
    step = 0
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        total = 0.0
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = model.gradients(x[idx], y[idx])
            total += loss * idx.size
            step += 1
            c1 = 1.0 - cfg.beta1**step
            c2 = 1.0 - cfg.beta2**step
            for p, g, mi, vi in zip(model.params(), grads, m, v):
                mi *= cfg.beta1
                mi += (1.0 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        losses.append(total / x.shape[0])
    acc = float(np.mean(model.predict_proba(x).argmax(axis=1) == y))
    model.meta.update(
        {
            "seed": int(seed),
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "pool_regions": cfg.pool_regions,
        }
    )
    return model, TrainReport(losses, acc, int(seed))


# ---------------------------------------------------------------- center-split forest

_NO_CHILD = -1


@dataclass
class CenterSplitTree:
    """Flat node arrays. ``centers[i, c]`` is NaN for classes absent at node ``i``."""

    features: np.ndarray  # (nodes, subset) feature indices
    centers: np.ndarray  # (nodes, classes, subset)
    children: np.ndarray  # (nodes, classes) node index or -1
    distribution: np.ndarray  # (nodes, classes) class frequencies at the node

    def leaf_for(self, record) -> int:
        node = 0
        while True:
            kids = self.children[node]
            if np.all(kids == _NO_CHILD):
                return node
            branch = rf_route(record[self.features[node]], self.centers[node])
            nxt = kids[branch]
            if nxt == _NO_CHILD:
                # no training record took this branch
                return node
            node = int(nxt)

    def predict(self, record) -> int:
        return int(np.argmax(self.distribution[self.leaf_for(record)]))


def rf_node_centers(x, y, feature_subset, n_classes: int = N_EVENT_CLASSES) -> np.ndarray:
    """Per-class means over ``feature_subset``; absent classes get NaN rows."""
    x = np.asarray(x, dtype=np.float64)[:, feature_subset]
    y = np.asarray(y)
    centers = np.full((n_classes, len(feature_subset)), np.nan)
    for c in range(n_classes):
        members = y == c
        if members.any():
            centers[c] = x[members].mean(axis=0)
    return centers


def rf_route(record, centers) -> int:
    """Branch of the Manhattan-nearest center; ties go to the lowest class index."""
    d = np.abs(np.asarray(centers) - np.asarray(record)).sum(axis=-1)
    d = np.where(np.isnan(d), np.inf, d)
    return int(np.argmin(d))


def _grow_tree(x, y, subset_size, rng, n_classes=N_EVENT_CLASSES) -> CenterSplitTree:
    feats, cents, kids, dists = [], [], [], []
    stack = [(np.arange(y.size), None, None)]
    while stack:
        idx, parent, branch = stack.pop()
        node = len(feats)
        if parent is not None:
            kids[parent][branch] = node
        counts = np.bincount(y[idx], minlength=n_classes).astype(np.float64)
        subset = np.sort(rng.choice(x.shape[1], size=subset_size, replace=False))
        feats.append(subset)
        dists.append(counts / counts.sum())
        kids.append(np.full(n_classes, _NO_CHILD, dtype=np.int64))
        if idx.size < 2 or np.count_nonzero(counts) < 2:
            cents.append(np.full((n_classes, subset_size), np.nan))
            continue
        centers = rf_node_centers(x[idx], y[idx], subset, n_classes)
        d = np.abs(x[idx][:, subset][:, None, :] - centers[None, :, :]).sum(axis=2)
        d = np.where(np.isnan(d), np.inf, d)
        route = d.argmin(axis=1)
        if np.unique(route).size < 2:
            # the split separates nothing: stop here
            cents.append(np.full((n_classes, subset_size), np.nan))
            continue
        cents.append(centers)
        # push in reverse so children are numbered in class order
        for c in range(n_classes - 1, -1, -1):
            members = idx[route == c]
            if members.size:
                stack.append((members, node, c))
    return CenterSplitTree(np.array(feats), np.array(cents), np.array(kids), np.array(dists))


@dataclass
class RandomForestModel:
    trees: list[CenterSplitTree]
    pca: PcaModel | None = None
    meta: dict = field(default_factory=dict)

    kind = "rf"

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _reduce(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        return self.pca.transform(x) if self.pca is not None else x

    def votes(self, x) -> np.ndarray:
        r = self._reduce(x)
        out = np.zeros((r.shape[0], N_EVENT_CLASSES))
        for tree in self.trees:
            for i, rec in enumerate(r):
                out[i, tree.predict(rec)] += 1
        return out

    def predict_proba(self, x) -> np.ndarray:
        return self.votes(x) / self.n_trees


@dataclass(frozen=True)
class RfConfig:
    n_trees: int = 50
    pca_components: int = 10
    subset_size: int = 0  # 0 means ceil(sqrt(k))


def rf_train(x, y, n_trees: int = 50, subset_size: int | None = None, seed: int = 0) -> RandomForestModel:
    """Forest of center-split trees on already reduced features."""
    x, y = _check_dataset(x, y, need_all_classes=False)
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    k = x.shape[1]
    s = subset_size if subset_size is not None else math.ceil(math.sqrt(k))
    if not 1 <= s <= k:
        raise ValueError(f"subset_size must lie in 1..{k}")
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        boot = rng.integers(0, y.size, size=y.size)
        trees.append(_grow_tree(x[boot], y[boot], s, rng))
    return RandomForestModel(trees, None, {"seed": int(seed), "n_trees": n_trees, "subset_size": s})


def rf_train_pipeline(x50, y, seed: int = 0, cfg: RfConfig = RfConfig()) -> tuple[RandomForestModel, TrainReport]:
    """PCA on the raw 50-sample rows, then a forest on the projections."""
    x50, y = _check_dataset(x50, y, need_all_classes=False)
    pca = pca_fit(x50, cfg.pca_components)
    model = rf_train(pca.transform(x50), y, cfg.n_trees, cfg.subset_size or None, seed)
    model.pca = pca
    model.meta["pca_components"] = cfg.pca_components
    acc = float(np.mean(model.predict_proba(x50).argmax(axis=1) == y))
    return model, TrainReport([], acc, int(seed))


def rf_predict(model: RandomForestModel, record) -> np.ndarray:
    return model.predict_proba(record)[0]


# ---------------------------------------------------------------- ensemble


def ensemble_vote(predictions) -> tuple[ManeuverLabel, float]:
    """Most frequent label; ties go to the higher mean confidence, then the lower class index.

    ``predictions`` holds ``(label, confidence)`` pairs or bare labels
    (confidence 1). Returns the winner and its mean confidence.
    """
    preds = [(p, 1.0) if isinstance(p, ManeuverLabel) else (p[0], float(p[1])) for p in predictions]
    if not preds:
        raise ValueError("ensemble_vote needs at least one prediction")
    stats: dict = {}
    for label, conf in preds:
        n, s = stats.get(label, (0, 0.0))
        stats[label] = (n + 1, s + conf)
    best = min(stats, key=lambda lab: (-stats[lab][0], -stats[lab][1] / stats[lab][0], lab.index))
    n, s = stats[best]
    return best, s / n


def classify_features(models, x50) -> list[tuple[ManeuverLabel, float]]:
    """Label each row with one model or the majority vote of several."""
    x50 = np.asarray(x50, dtype=np.float64).reshape(-1, N_FEATURES)
    per_model = []
    for m in models:
        proba = m.predict_proba(x50)
        best = proba.argmax(axis=1)
        per_model.append([(EVENT_CLASSES[b], float(proba[i, b])) for i, b in enumerate(best)])
    if len(per_model) == 1:
        return per_model[0]
    return [ensemble_vote(votes) for votes in zip(*per_model)]


# ---------------------------------------------------------------- persistence

MAGIC = b"MSEG"
FORMAT_VERSION = 1
KIND_TAGS = {"cnn": 1, "rf": 2}
_PREFIX = struct.Struct("<4sHBI")  # magic, version, kind, header length


def _model_arrays(model) -> dict[str, np.ndarray]:
    if isinstance(model, Cnn1dModel):
        return {name: getattr(model, name) for name in Cnn1dModel.PARAMS}
    arrays = {}
    for i, t in enumerate(model.trees):
        arrays[f"tree{i}.features"] = t.features.astype(np.float64)
        arrays[f"tree{i}.centers"] = t.centers
        arrays[f"tree{i}.children"] = t.children.astype(np.float64)
        arrays[f"tree{i}.distribution"] = t.distribution
    if model.pca is not None:
        arrays["pca.mean"] = model.pca.mean
        arrays["pca.components"] = model.pca.components
        arrays["pca.explained_variance"] = model.pca.explained_variance
        arrays["pca.total_variance"] = np.array([model.pca.total_variance])
    return arrays


def model_to_bytes(model) -> bytes:
    arrays = _model_arrays(model)
    header = {
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
        "meta": model.meta,
    }
    hdr = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for v in arrays.values())
    body = _PREFIX.pack(MAGIC, FORMAT_VERSION, KIND_TAGS[model.kind], len(hdr)) + hdr + blob
    return body + struct.pack("<I", zlib.crc32(body))


def model_from_bytes(data: bytes, expected_kind: str | None = None):
    if len(data) < _PREFIX.size + 4 or data[:4] != MAGIC:
        raise CorruptFile("not a model file (bad magic or too short)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptFile("checksum mismatch: file is truncated or damaged")
    _, version, tag, hdr_len = _PREFIX.unpack(body[: _PREFIX.size])
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"model format version {version}, expected {FORMAT_VERSION}")
    kinds = {v: k for k, v in KIND_TAGS.items()}
    if tag not in kinds:
        raise VersionMismatch(f"unknown model kind tag {tag}")
    kind = kinds[tag]
    if expected_kind is not None and kind != expected_kind:
        raise VersionMismatch(f"file holds a {kind} model, expected {expected_kind}")
    try:
        header = json.loads(body[_PREFIX.size : _PREFIX.size + hdr_len].decode("utf-8"))
        pos = _PREFIX.size + hdr_len
        arrays = {}
        for entry in header["arrays"]:
            n = int(np.prod(entry["shape"], dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f8", count=n, offset=pos).astype(np.float64)
            arrays[entry["name"]] = arr.reshape(entry["shape"])
            pos += 8 * n
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"malformed layout header: {exc}") from None
    if pos != len(body):
        raise CorruptFile("parameter blob length does not match the layout header")
    meta = header.get("meta", {})
    if kind == "cnn":
        return Cnn1dModel(*(arrays[n] for n in Cnn1dModel.PARAMS), meta=meta)
    trees = []
    i = 0
    while f"tree{i}.features" in arrays:
        trees.append(
            CenterSplitTree(
                arrays[f"tree{i}.features"].astype(np.int64),
                arrays[f"tree{i}.centers"],
                arrays[f"tree{i}.children"].astype(np.int64),
                arrays[f"tree{i}.distribution"],
            )
        )
        i += 1
    pca = None
    if "pca.mean" in arrays:
        pca = PcaModel(
            arrays["pca.mean"],
            arrays["pca.components"],
            arrays["pca.explained_variance"],
            float(arrays["pca.total_variance"][0]),
        )
    return RandomForestModel(trees, pca, meta)


def model_save(model, path) -> None:
    try:
        Path(path).write_bytes(model_to_bytes(model))
    except OSError as exc:
        raise IoFailure(f"cannot write model to {path}: {exc}") from exc


def model_load(path, expected_kind: str | None = None):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read model {path}: {exc}") from exc
    return model_from_bytes(data, expected_kind)

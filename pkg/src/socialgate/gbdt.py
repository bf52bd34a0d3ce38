"""Histogram-based gradient-boosted trees for binary classification.

Logistic loss, Newton leaf values, depth-wise growth over quantile-binned
features. Bin edges are actual training values, and a sample falls in bin
``b`` when exactly ``b`` edges are <= its value; a split sends bins ``<= t``
left. Because edges are data values, fitted predictions depend only on the
per-feature rank order of the data.

Model files are JSON with fields, in order: ``format``, ``v``, ``n_features``,
``config``, ``base_score``, ``bin_edges`` (list per feature), ``trees`` (each
with parallel arrays ``feature``, ``threshold_bin``, ``left``, ``right``,
``value``; ``feature == -1`` marks a leaf), ``train_loss``.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

logger = logging.getLogger(__name__)

MODEL_FORMAT = "socialgate-gbdt"
MODEL_VERSION = 1
_MIN_GAIN = 1e-12


class SingleClassError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class DegenerateFeatureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_depth: int = 7
    n_iterations: int = 100
    min_samples_leaf: int = 8
    n_bins: int = 64
    seed: int = 0
    l2_regularization: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1 or self.n_iterations < 1 or self.min_samples_leaf < 1:
            raise ValueError("max_depth, n_iterations and min_samples_leaf must be >= 1")
        if not 2 <= self.n_bins <= 256:
            raise ValueError("n_bins must be in [2, 256]")
        if self.l2_regularization < 0:
            raise ValueError("l2_regularization must be >= 0")


@dataclass(frozen=True)
class LabeledSet:
    """Feature rows with binary labels (1 = gaze preamble, 0 = resting)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y).astype(int)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("X must be a nonempty 2-D array")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per row")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("labels must be 0 or 1")
        if not np.isfinite(X).all():
            raise ValueError("features must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "LabeledSet":
        return LabeledSet(self.X[idx], self.y[idx])

    @classmethod
    def concat(cls, sets: Iterable["LabeledSet"]) -> "LabeledSet":
        sets = list(sets)
        return cls(np.vstack([s.X for s in sets]), np.concatenate([s.y for s in sets]))


@dataclass
class Tree:
    feature: np.ndarray
    threshold_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, binned: np.ndarray) -> np.ndarray:
        node = np.zeros(len(binned), dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = binned[rows, self.feature[cur]] <= self.threshold_bin[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return node

    def predict(self, binned: np.ndarray) -> np.ndarray:
        return self.value[self.apply(binned)]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


@dataclass
class GbdtModel:
    trees: list[Tree]
    bin_edges: list[np.ndarray]
    base_score: float
    config: TrainConfig
    n_features: int
    train_loss: list[float] = field(default_factory=list)

    def bin(self, X: np.ndarray) -> np.ndarray:
        return bin_features(X, self.bin_edges)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = _check_input(X, self.n_features)
        binned = self.bin(X)
        raw = np.full(len(X), self.base_score)
        for tree in self.trees:
            raw += tree.predict(binned)
        return raw


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-np.logaddexp(0.0, -z))


def log_loss(y: np.ndarray, raw: np.ndarray) -> float:
    # log(1 + e^{-z}) for y=1, log(1 + e^{z}) for y=0
    return float(np.mean(np.logaddexp(0.0, np.where(y == 1, -raw, raw))))


def _check_input(X, n_features: int) -> np.ndarray:
    X = np.asarray(getattr(X, "values", X), dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise DimensionMismatchError(
            f"expected {n_features} features, got shape {np.shape(X)}")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    return X


def quantile_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Split thresholds drawn from the column's own values; at most n_bins - 1 of them."""
    s = np.sort(column)
    uniq = np.unique(s)
    if len(uniq) <= n_bins:
        return uniq[1:]
    pos = (np.arange(1, n_bins) * len(s)) // n_bins
    edges = np.unique(s[pos])
    return edges[edges > uniq[0]]


def bin_features(X: np.ndarray, edges: Sequence[np.ndarray]) -> np.ndarray:
    binned = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        binned[:, j] = np.searchsorted(e, X[:, j], side="right")
    return binned


def _grow_tree(binned: np.ndarray, grad: np.ndarray, hess: np.ndarray,
               cfg: TrainConfig, n_bins: int) -> Tree:
    n_features = binned.shape[1]
    offsets = np.arange(n_features) * n_bins
    lam = cfg.l2_regularization
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node() -> int:
        for arr, v in ((feature, -1), (threshold, -1), (left, -1), (right, -1), (value, 0.0)):
            arr.append(v)
        return len(feature) - 1

    def leaf_value(g: float, h: float) -> float:
        denom = h + lam
        return -cfg.learning_rate * g / denom if denom > 0 else 0.0

    def score(g, h):
        denom = h + lam
        return np.divide(g * g, denom, out=np.zeros_like(g), where=denom > 0)

    root = new_node()
    level = [(root, np.arange(len(grad)))]
    depth = 0
    while level:
        next_level = []
        for node, idx in level:
            g_idx, h_idx = grad[idx], hess[idx]
            G, H = g_idx.sum(), h_idx.sum()
            value[node] = leaf_value(G, H)
            if depth >= cfg.max_depth or len(idx) < 2 * cfg.min_samples_leaf:
                continue
            flat = (binned[idx] + offsets).ravel()
            size = n_features * n_bins
            g_hist = np.bincount(flat, np.repeat(g_idx, n_features), size).reshape(n_features, n_bins)
            h_hist = np.bincount(flat, np.repeat(h_idx, n_features), size).reshape(n_features, n_bins)
            c_hist = np.bincount(flat, minlength=size).reshape(n_features, n_bins)
            gl = np.cumsum(g_hist, axis=1)[:, :-1]
            hl = np.cumsum(h_hist, axis=1)[:, :-1]
            cl = np.cumsum(c_hist, axis=1)[:, :-1]
            gr, hr, cr = G - gl, H - hl, len(idx) - cl
            gain = score(gl, hl) + score(gr, hr) - score(np.array(G), np.array(H))
            valid = (cl >= cfg.min_samples_leaf) & (cr >= cfg.min_samples_leaf)
            gain = np.where(valid, gain, -np.inf)
            best = int(np.argmax(gain))
            if not gain.flat[best] > _MIN_GAIN:
                continue
            f, b = divmod(best, n_bins - 1)
            mask = binned[idx, f] <= b
            lchild, rchild = new_node(), new_node()
            feature[node], threshold[node] = f, b
            left[node], right[node] = lchild, rchild
            next_level.append((lchild, idx[mask]))
            next_level.append((rchild, idx[~mask]))
        level = next_level
        depth += 1
    return Tree(np.array(feature, dtype=int), np.array(threshold, dtype=int),
                np.array(left, dtype=int), np.array(right, dtype=int), np.array(value, dtype=float))


def fit(data: LabeledSet, config: TrainConfig | None = None) -> GbdtModel:
    """Train a boosted ensemble; deterministic for a given input order and config."""
    cfg = config or TrainConfig()
    X, y = data.X, data.y
    if len(np.unique(y)) < 2:
        raise SingleClassError("training data must contain both classes")
    edges = [quantile_edges(X[:, j], cfg.n_bins) for j in range(X.shape[1])]
    constant = [j for j, e in enumerate(edges) if len(e) == 0]
    if constant:
        warnings.warn(f"constant feature columns {constant} can never be split on",
                      DegenerateFeatureWarning, stacklevel=2)
    binned = bin_features(X, edges)
    p0 = y.mean()
    base = float(np.log(p0 / (1 - p0)))
    raw = np.full(len(y), base)
    trees = []
    losses = [log_loss(y, raw)]
    for _ in range(cfg.n_iterations):
        p = sigmoid(raw)
        tree = _grow_tree(binned, p - y, p * (1 - p), cfg, cfg.n_bins)
        raw = raw + tree.predict(binned)
        trees.append(tree)
        losses.append(log_loss(y, raw))
    return GbdtModel(trees, edges, base, cfg, X.shape[1], losses)


def predict_proba(model: GbdtModel, x) -> float | np.ndarray:
    """Positive-class probability; a float for a single row, an array for a matrix."""
    single = np.ndim(getattr(x, "values", x)) == 1
    p = sigmoid(model.decision_function(x))
    return float(p[0]) if single else p


def predict(model: GbdtModel, x, threshold: float = 0.5):
    p = predict_proba(model, x)
    return p >= threshold if isinstance(p, float) else (p >= threshold).astype(int)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    roc_auc: float
    confusion: tuple[tuple[int, int], tuple[int, int]]  # [[TN, FP], [FN, TP]]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = [list(r) for r in self.confusion]
        return d


def roc_auc(y: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC with ties counted as half; NaN when a class is absent."""
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def metrics_from_confusion(tn: int, fp: int, fn: int, tp: int, auc: float = float("nan")) -> Metrics:
    total = tn + fp + fn + tp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / total if total else 0.0, precision, recall, f1, auc,
                   ((tn, fp), (fn, tp)))


def metrics_from_predictions(y, scores, threshold: float = 0.5) -> Metrics:
    y = np.asarray(y).astype(int)
    scores = np.asarray(scores, dtype=float)
    pred = scores >= threshold
    tp = int((pred & (y == 1)).sum())
    fp = int((pred & (y == 0)).sum())
    fn = int((~pred & (y == 1)).sum())
    tn = int((~pred & (y == 0)).sum())
    return metrics_from_confusion(tn, fp, fn, tp, roc_auc(y, scores))


def evaluate(model: GbdtModel, data: LabeledSet, threshold: float = 0.5) -> Metrics:
    return metrics_from_predictions(data.y, predict_proba(model, data.X), threshold)


def stratified_folds(y: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Fold id per row; each class is shuffled then dealt round-robin."""
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in (0, 1)])
    folds = np.empty(len(y), dtype=int)
    folds[order] = np.arange(len(order)) % k
    return folds


@dataclass
class CVResult:
    best: TrainConfig
    fold_scores: dict[TrainConfig, list[float]]
    folds: np.ndarray

    def mean_f1(self, cfg: TrainConfig) -> float:
        return float(np.mean(self.fold_scores[cfg]))


def cross_validate(data: LabeledSet, grid: Iterable[TrainConfig], k: int = 5,
                   seed: int = 0, threshold: float = 0.5) -> CVResult:
    """Grid search by mean held-out F1 over stratified k folds.

    Ties go to fewer boosting rounds, then shallower trees, then grid order.
    """
    grid = list(dict.fromkeys(grid))
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if k < 2 or len(data) < k:
        raise InsufficientDataError(f"need k >= 2 and at least k rows (k={k}, rows={len(data)})")
    folds = stratified_folds(data.y, k, seed)
    scores: dict[TrainConfig, list[float]] = {}
    for cfg in grid:
        fold_f1 = []
        for f in range(k):
            train, test = folds != f, folds == f
            if len(np.unique(data.y[train])) < 2:
                raise InsufficientDataError("a training fold lacks one of the classes")
            model = fit(data.subset(train), cfg)
            fold_f1.append(evaluate(model, data.subset(test), threshold).f1)
        scores[cfg] = fold_f1
        logger.info("cv %s mean F1 %.3f", cfg, np.mean(fold_f1))
    ranked = sorted(range(len(grid)), key=lambda i: (
        -np.mean(scores[grid[i]]), grid[i].n_iterations, grid[i].max_depth, i))
    return CVResult(grid[ranked[0]], scores, folds)


def model_to_json(model: GbdtModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "v": MODEL_VERSION,
        "n_features": model.n_features,
        "config": asdict(model.config),
        "base_score": model.base_score,
        "bin_edges": [e.tolist() for e in model.bin_edges],
        "trees": [
            {"feature": t.feature.tolist(), "threshold_bin": t.threshold_bin.tolist(),
             "left": t.left.tolist(), "right": t.right.tolist(), "value": t.value.tolist()}
            for t in model.trees
        ],
        "train_loss": list(model.train_loss),
    }


def model_from_json(obj: dict) -> GbdtModel:
    if obj.get("format") != MODEL_FORMAT or obj.get("v") != MODEL_VERSION:
        raise ValueError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} model file")
    trees = [Tree(np.array(t["feature"], dtype=int), np.array(t["threshold_bin"], dtype=int),
                  np.array(t["left"], dtype=int), np.array(t["right"], dtype=int),
                  np.array(t["value"], dtype=float)) for t in obj["trees"]]
    edges = [np.array(e, dtype=float) for e in obj["bin_edges"]]
    return GbdtModel(trees, edges, float(obj["base_score"]), TrainConfig(**obj["config"]),
                     int(obj["n_features"]), list(obj.get("train_loss", [])))


def save_model(model: GbdtModel, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model), fh)
        fh.write("\n")


def load_model(path: str | Path) -> GbdtModel:
    with open(path) as fh:
        return model_from_json(json.load(fh))

"""Desk-scale reference trainers: CART regression tree, LS gradient boosting, random forest.

These exist to produce fixtures and to check the least-squares special case,
where back-propagated node scores coincide with node residual means. Splits
are exact: every midpoint between consecutive distinct feature values is
scored by the reduction in squared error, ties going to the lower feature
index and then the lower threshold. Node ids are assigned breadth-first.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ensemble import (
    Ensemble,
    EnsembleKind,
    MissingPolicy,
    Operator,
    SplitPredicate,
    Tree,
    TreeNode,
)
from .ingest.tabular import Dataset

# Splits whose gain is below this fraction of the node's squared error are noise.
_REL_GAIN_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    max_depth: int = 3
    min_samples_leaf: int = 1
    n_trees: int = 10
    shrinkage: float = 1.0
    rf_feature_fraction: float = 1.0
    rf_bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must be in (0, 1]")
        if not 0.0 < self.rf_feature_fraction <= 1.0:
            raise ValueError("rf_feature_fraction must be in (0, 1]")


@dataclass
class FitTrace:
    """Per-iteration fitting targets and the rows each tree was trained on."""

    residuals: list[np.ndarray] = field(default_factory=list)
    rows: list[np.ndarray] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        m = len(self.residuals)
        buf.write(",".join(["row"] + [f"r_{k + 1}" for k in range(m)]) + "\n")
        if m:
            for i in range(len(self.residuals[0])):
                buf.write(",".join([str(i)] + [repr(float(r[i])) for r in self.residuals]) + "\n")
        return buf.getvalue()


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray, feats: np.ndarray, min_leaf: int):
    """Return (gain, feature, threshold) of the best split, or None."""
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    yn = y[idx]
    yc = yn - yn.mean()
    sse = float(yc @ yc)
    if sse <= 0.0:
        return None
    Xn = X[np.ix_(idx, feats)]
    order = np.argsort(Xn, axis=0, kind="stable")
    xs = np.take_along_axis(Xn, order, axis=0)
    ys = yc[order]
    left_sum = np.cumsum(ys, axis=0)[:-1]
    total = ys.sum(axis=0)
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    gain = left_sum**2 / n_left + (total - left_sum) ** 2 / n_right - total**2 / n
    ok = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    gain = np.where(ok, gain, -np.inf)
    pos = np.argmax(gain, axis=0)
    per_feature = gain[pos, np.arange(len(feats))]
    col = int(np.argmax(per_feature))
    best = float(per_feature[col])
    if not best > _REL_GAIN_EPS * sse:
        return None
    i = int(pos[col])
    lo, hi = float(xs[i, col]), float(xs[i + 1, col])
    threshold = 0.5 * (lo + hi)
    if not lo <= threshold < hi:
        threshold = lo
    return best, int(feats[col]), threshold


def _grow(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    scale: float = 1.0,
    feature_fraction: float = 1.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tree, np.ndarray]:
    """Grow one tree breadth-first; also return the fitted value of every row."""
    n_features = X.shape[1]
    k = max(1, int(round(feature_fraction * n_features)))
    all_feats = np.arange(n_features)
    fitted = np.empty(len(y))
    nodes: list[TreeNode] = []
    queue = deque([(0, np.arange(len(y)), 0, None)])
    next_id = 1
    while queue:
        nid, idx, depth, pred = queue.popleft()
        split = None
        if depth < config.max_depth:
            feats = all_feats if k == n_features else np.sort(rng.choice(n_features, size=k, replace=False))
            split = _best_split(X, y, idx, feats, config.min_samples_leaf)
        if split is None:
            score = float(np.mean(y[idx])) * scale
            fitted[idx] = score
            nodes.append(TreeNode(nid, pred, (), score))
            continue
        _, feat, threshold = split
        go_left = X[idx, feat] <= threshold
        left, right = next_id, next_id + 1
        next_id += 2
        queue.append((left, idx[go_left], depth + 1, SplitPredicate(feat, Operator.LESS_OR_EQUAL, threshold)))
        queue.append((right, idx[~go_left], depth + 1, SplitPredicate(feat, Operator.GREATER_THAN, threshold)))
        nodes.append(TreeNode(nid, pred, (left, right)))
    return Tree.from_nodes(nodes), fitted


def fit_regression_tree(X, y, config: TrainConfig, scale: float = 1.0) -> Tree:
    """Least-squares CART tree; each leaf scores ``scale * mean(targets at leaf)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return _grow(X, y, config, scale)[0]


def fit_gbdt(dataset: Dataset, config: TrainConfig) -> tuple[Ensemble, FitTrace]:
    """Gradient boosting with squared loss, starting from f_0 = 0.

    Each tree is fit to the current residuals and its leaves are scaled by the
    shrinkage before being stored, so the ensemble predicts by plain summation.
    """
    X = dataset.numeric_matrix()
    y = dataset.label_array
    trace = FitTrace()
    residual = y.copy()
    all_rows = np.arange(len(y))
    trees = []
    for _ in range(config.n_trees):
        trace.residuals.append(residual)
        trace.rows.append(all_rows)
        trace.losses.append(float(residual @ residual) / len(y))
        tree, fitted = _grow(X, residual, config, config.shrinkage)
        trees.append(tree)
        residual = residual - fitted
    trace.losses.append(float(residual @ residual) / len(y))
    ensemble = Ensemble(tuple(trees), dataset.catalog, EnsembleKind.GBDT_SUM, MissingPolicy.ALWAYS_LEFT)
    return ensemble, trace


def fit_random_forest(dataset: Dataset, config: TrainConfig) -> Ensemble:
    """Bagged classification forest; leaf score is the positive fraction at the leaf."""
    X = dataset.numeric_matrix()
    y = dataset.label_array
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("random forest needs binary labels in {0, 1}")
    n = len(y)
    trees = []
    for seq in np.random.SeedSequence(config.seed).spawn(config.n_trees):
        rng = np.random.default_rng(seq)
        rows = rng.integers(0, n, size=n) if config.rf_bootstrap else np.arange(n)
        tree, _ = _grow(X[rows], y[rows], config, 1.0, config.rf_feature_fraction, rng)
        trees.append(tree)
    return Ensemble(tuple(trees), dataset.catalog, EnsembleKind.RF_AVERAGE, MissingPolicy.ALWAYS_LEFT)


def make_planted_dataset(
    n_rows: int = 2000,
    n_features: int = 60,
    n_informative: int = 8,
    seed: int = 0,
    noise: float = 1.0,
) -> tuple[Dataset, list[int]]:
    """Binary-label dataset where only ``n_informative`` features carry signal.

    Features are uniform on [0, 1]. Each informative feature raises the log-odds
    of the positive class when it lies in its top quartile, so its effect is
    skewed: most rows see a small negative contribution, a few a large
    positive one. Returns the dataset and the sorted informative indices.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n_rows, n_features))
    informative = sorted(int(j) for j in rng.choice(n_features, size=n_informative, replace=False))
    weights = np.linspace(3.0, 1.5, n_informative)
    logit = (X[:, informative] > 0.75) @ weights - 0.25 * weights.sum() - 1.0
    logit = logit + noise * rng.logistic(size=n_rows)
    y = (logit > 0).astype(float)
    return Dataset.from_arrays(X, y, [f"f{j:02d}" for j in range(n_features)]), informative

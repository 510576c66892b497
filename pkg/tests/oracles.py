"""Independent reference computations used as test oracles.

Nothing here calls the routing, annotation or contribution code under test;
predicates are evaluated with the ``operator`` module and paths are found by
brute force.
"""

from __future__ import annotations

import operator

import numpy as np

from treecontrib.ensemble import (
    Ensemble,
    EnsembleKind,
    FeatureCatalog,
    MissingPolicy,
    Operator,
    SplitPredicate,
    Tree,
    TreeNode,
)

_ORDER = {
    Operator.LESS_OR_EQUAL: operator.le,
    Operator.LESS_THAN: operator.lt,
    Operator.GREATER_THAN: operator.gt,
    Operator.GREATER_OR_EQUAL: operator.ge,
}


def holds(pred: SplitPredicate, instance) -> bool:
    value = instance[pred.feature]
    if value is None:
        return False
    if pred.operator in _ORDER:
        return _ORDER[pred.operator](float(value), float(pred.threshold))
    same = str(value) == pred.threshold or (
        not isinstance(value, str) and _num(pred.threshold) == value
    )
    return same if pred.operator is Operator.EQUAL else not same


def _num(token):
    try:
        return float(token)
    except ValueError:
        return None


def brute_force_path(tree: Tree, instance) -> list[int]:
    """Follow whichever child predicate holds; fail loudly on ambiguity."""
    path = [tree.root_id]
    node = tree.nodes[tree.root_id]
    while node.children:
        matches = [c for c in node.children if holds(tree.nodes[c].predicate, instance)]
        assert len(matches) == 1, f"ambiguous routing at node {node.id}: {matches}"
        node = tree.nodes[matches[0]]
        path.append(node.id)
    return path


def brute_force_predict(ensemble: Ensemble, instance) -> float:
    scores = [t.weight * t.nodes[brute_force_path(t, instance)[-1]].leaf_score for t in ensemble.trees]
    total = 0.0
    for s in scores:
        total += s
    return total / len(scores) if ensemble.kind is EnsembleKind.RF_AVERAGE else total


def path_conjunctions(tree: Tree) -> dict[int, list[SplitPredicate]]:
    """For each node, the predicates of every edge from the root down to it."""
    out = {tree.root_id: []}
    frontier = [tree.root_id]
    while frontier:
        nid = frontier.pop()
        for c in tree.nodes[nid].children:
            out[c] = out[nid] + [tree.nodes[c].predicate]
            frontier.append(c)
    return out


def oracle_counts(tree: Tree, rows) -> dict[int, int]:
    return {
        nid: sum(1 for r in rows if all(holds(p, r) for p in preds))
        for nid, preds in path_conjunctions(tree).items()
    }


def oracle_explain(model, instance, variant) -> tuple[np.ndarray, float]:
    """Walk each path and sum S(child) - S(parent) per split feature from node scores."""
    ens = model.ensemble
    width = len(ens.catalog)
    total = np.zeros(width)
    base = 0.0
    for tree, ann in zip(ens.trees, model.annotations):
        per_tree = np.zeros(width)
        path = brute_force_path(tree, instance)
        s_parent = ann[path[0]].score(variant)
        for child in path[1:]:
            feature = tree.nodes[child].predicate.feature
            s_child = ann[child].score(variant)
            if s_child is None:  # empty node: label mean inherited from parent
                s_child = s_parent
            per_tree[feature] += s_child - s_parent
            s_parent = s_child
        total += tree.weight * per_tree
        base += tree.weight * ann[tree.root_id].score(variant)
    if ens.kind is EnsembleKind.RF_AVERAGE:
        total /= len(ens.trees)
        base /= len(ens.trees)
    return total, base


def sort_median(values) -> float:
    s = sorted(values)
    n = len(s)
    mid = n // 2
    return s[mid] if n % 2 else (s[mid - 1] + s[mid]) / 2


def exhaustive_best_split(X: np.ndarray, y: np.ndarray, min_leaf: int = 1):
    """Score every (feature, midpoint) by squared-error reduction; first best wins."""
    n, d = X.shape
    parent = float(((y - y.mean()) ** 2).sum())
    best = None
    for j in range(d):
        values = sorted(set(X[:, j]))
        for a, b in zip(values, values[1:]):
            t = (a + b) / 2
            left = y[X[:, j] <= t]
            right = y[X[:, j] > t]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            sse = ((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum()
            gain = parent - sse
            if best is None or gain > best[0] + 1e-12:
                best = (gain, j, t)
    return best


THRESHOLD_GRID = np.round(np.linspace(-2, 2, 9), 2)


def random_tree(rng: np.random.Generator, n_features: int, max_depth: int, p_split: float = 0.75,
                weight: float = 1.0) -> Tree:
    """Random binary tree with shuffled node ids and complementary predicates."""
    slots = [(None, None, 0)]
    built = []
    while slots:
        parent, pred, depth = slots.pop(0)
        slot = len(built)
        split = depth < max_depth and (depth == 0 or rng.random() < p_split)
        built.append({"parent": parent, "pred": pred, "children": []})
        if parent is not None:
            built[parent]["children"].append(slot)
        if split:
            f = int(rng.integers(n_features))
            t = float(rng.choice(THRESHOLD_GRID))
            op = Operator.LESS_OR_EQUAL if rng.random() < 0.7 else Operator.LESS_THAN
            left = SplitPredicate(f, op, t)
            slots.append((slot, left, depth + 1))
            slots.append((slot, left.complement(), depth + 1))
    ids = rng.permutation(len(built) * 3)[: len(built)]
    nodes = []
    for slot, b in enumerate(built):
        children = tuple(int(ids[c]) for c in b["children"])
        score = None if children else float(rng.normal(scale=0.5))
        nodes.append(TreeNode(int(ids[slot]), b["pred"], children, score))
    return Tree.from_nodes(nodes, int(ids[0]), weight)


def random_ensemble(rng, n_features=4, n_trees=5, max_depth=4, kind=EnsembleKind.GBDT_SUM,
                    random_weights=False) -> Ensemble:
    trees = tuple(
        random_tree(rng, n_features, max_depth, weight=float(rng.uniform(0.2, 1.5)) if random_weights else 1.0)
        for _ in range(n_trees)
    )
    catalog = FeatureCatalog([f"x{j}" for j in range(n_features)])
    return Ensemble(trees, catalog, kind, MissingPolicy.ALWAYS_LEFT)


def random_rows(rng, n_rows, n_features):
    """Rows drawn partly from the threshold grid so boundary ties occur."""
    grid = rng.choice(THRESHOLD_GRID, size=(n_rows, n_features))
    cont = rng.uniform(-2.5, 2.5, size=(n_rows, n_features))
    pick = rng.random((n_rows, n_features)) < 0.3
    X = np.where(pick, grid, cont)
    return [tuple(float(v) for v in row) for row in X]

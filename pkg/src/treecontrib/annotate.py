"""Offline preparation: instance counts, back-propagated node scores and edge increments.

Every interior node gets a score derived from its children, either the plain
average of the two child scores (SIMPLE) or the instance-count weighted
average (WEIGHTED). The local increment of an edge is the child's score minus
the parent's and is attributed to the parent's split feature. When labels (or
per-tree fitting targets) are available, the same is done with node label
means (LABEL), which is the label-distribution interpretation used for random
forests.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .ensemble import Ensemble, EnsembleKind, Tree, trace_path
from .errors import CatalogMismatchError, VariantUnavailableError

if TYPE_CHECKING:
    from .ingest.tabular import Dataset


class Variant(enum.Enum):
    SIMPLE = "simple"
    WEIGHTED = "weighted"
    LABEL = "label"


@dataclass(frozen=True)
class NodeAnnotation:
    count: int | None
    bp_score_simple: float
    bp_score_weighted: float | None = None
    pos_fraction: float | None = None
    li_simple: float | None = None
    li_weighted: float | None = None
    li_label: float | None = None
    fallback: bool = False
    """Set when the weighted average was undefined (both child counts 0)."""

    def score(self, variant: Variant) -> float | None:
        if variant is Variant.SIMPLE:
            return self.bp_score_simple
        if variant is Variant.WEIGHTED:
            return self.bp_score_weighted
        return self.pos_fraction

    def increment(self, variant: Variant) -> float | None:
        if variant is Variant.SIMPLE:
            return self.li_simple
        if variant is Variant.WEIGHTED:
            return self.li_weighted
        return self.li_label


@dataclass(frozen=True)
class NodeCounts:
    """Per-node instance counts and target sums for one tree."""

    counts: dict[int, int]
    target_sums: dict[int, float] | None = None


@dataclass(frozen=True)
class BackpropScores:
    simple: dict[int, float]
    weighted: dict[int, float] | None = None
    fallback: frozenset[int] = frozenset()


@dataclass(frozen=True)
class AnnotatedEnsemble:
    ensemble: Ensemble
    annotations: tuple[dict[int, NodeAnnotation], ...]
    # Derived values (variant set, baselines, edge increments); the instance is immutable.
    _edge_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def variants(self) -> frozenset[Variant]:
        cached = self._edge_cache.get("variants")
        if cached is None:
            cached = self._edge_cache["variants"] = self._compute_variants()
        return cached

    def _compute_variants(self) -> frozenset[Variant]:
        out = {Variant.SIMPLE}
        if all(a.bp_score_weighted is not None for t in self.annotations for a in t.values()):
            out.add(Variant.WEIGHTED)
        if all(
            a.li_label is not None
            for tree, ann in zip(self.ensemble.trees, self.annotations)
            for nid, a in ann.items()
            if nid != tree.root_id
        ) and all(ann[tree.root_id].pos_fraction is not None for tree, ann in zip(self.ensemble.trees, self.annotations)):
            out.add(Variant.LABEL)
        return frozenset(out)

    @property
    def has_counts(self) -> bool:
        return all(a.count is not None for t in self.annotations for a in t.values())

    def require(self, variant: Variant) -> None:
        if variant not in self.variants:
            raise VariantUnavailableError(
                f"variant {variant.value!r} not annotated; available: {sorted(v.value for v in self.variants)}"
            )

    def baseline(self, variant: Variant) -> float:
        """Sum (GBDT) or mean (RF) of the per-tree root scores for ``variant``."""
        key = ("baseline", variant)
        if key in self._edge_cache:
            return self._edge_cache[key]
        self.require(variant)
        total = 0.0
        for tree, ann in zip(self.ensemble.trees, self.annotations):
            total += tree.weight * ann[tree.root_id].score(variant)
        if self.ensemble.kind is EnsembleKind.RF_AVERAGE:
            total /= len(self.ensemble.trees)
        self._edge_cache[key] = total
        return total

    def edge_increments(self, variant: Variant) -> list[dict[int, tuple[int, float]]]:
        """Per tree: child id -> (parent's split feature, local increment)."""
        cached = self._edge_cache.get(variant)
        if cached is None:
            self.require(variant)
            cached = []
            for tree, ann in zip(self.ensemble.trees, self.annotations):
                cached.append({
                    nid: (node.predicate.feature, ann[nid].increment(variant))
                    for nid, node in tree.nodes.items()
                    if nid != tree.root_id
                })
            self._edge_cache[variant] = cached
        return cached


def _tree_counts(tree: Tree, rows, targets, policy, n_features) -> NodeCounts:
    counts = dict.fromkeys(tree.nodes, 0)
    sums = dict.fromkeys(tree.nodes, 0.0) if targets is not None else None
    for i, row in enumerate(rows):
        path = trace_path(tree, row, policy, n_features=n_features).node_ids
        for nid in path:
            counts[nid] += 1
        if sums is not None:
            t = targets[i]
            for nid in path:
                sums[nid] += t
    return NodeCounts(counts, sums)


def _check_catalog(ensemble: Ensemble, dataset: Dataset) -> None:
    if dataset.catalog != ensemble.catalog:
        raise CatalogMismatchError(
            f"dataset features {list(dataset.catalog.names)} != model features {list(ensemble.catalog.names)}"
        )


def count_instances(
    ensemble: Ensemble,
    dataset: Dataset,
    tree_targets: Sequence[Sequence[float]] | None = None,
) -> list[NodeCounts]:
    """Route every row through every tree, counting visits and summing targets.

    Targets default to the dataset labels for every tree; ``tree_targets``
    supplies one target vector per tree (e.g. boosting residuals).
    """
    _check_catalog(ensemble, dataset)
    width = len(ensemble.catalog)
    out = []
    for m, tree in enumerate(ensemble.trees):
        targets = tree_targets[m] if tree_targets is not None else dataset.labels
        out.append(_tree_counts(tree, dataset.rows, targets, ensemble.missing_policy, width))
    return out


def _weighted_mean(n1: int, s1: float, n2: int, s2: float) -> float:
    if n1 == n2:
        return 0.5 * (s1 + s2)
    value = (n1 * s1 + n2 * s2) / (n1 + n2)
    # Rounding must not push the mean outside the children's range.
    return min(max(value, min(s1, s2)), max(s1, s2))


def backprop_scores(tree: Tree, counts: dict[int, int] | None = None) -> BackpropScores:
    """Assign interior node scores bottom-up from the leaf scores."""
    simple: dict[int, float] = {}
    weighted: dict[int, float] | None = {} if counts is not None else None
    fallback = set()
    for nid in tree.postorder():
        node = tree.nodes[nid]
        if node.is_leaf:
            simple[nid] = node.leaf_score
            if weighted is not None:
                weighted[nid] = node.leaf_score
            continue
        c1, c2 = node.children
        simple[nid] = 0.5 * (simple[c1] + simple[c2])
        if weighted is not None:
            n1, n2 = counts[c1], counts[c2]
            if n1 + n2 == 0:
                weighted[nid] = 0.5 * (weighted[c1] + weighted[c2])
                fallback.add(nid)
            else:
                weighted[nid] = _weighted_mean(n1, weighted[c1], n2, weighted[c2])
    return BackpropScores(simple, weighted, frozenset(fallback))


def compute_local_increments(tree: Tree, scores: dict[int, float]) -> dict[int, float]:
    """Local increment S(child) - S(parent) for every non-root node.

    The increment belongs to the parent's split feature, which is the feature
    of the child's own predicate.
    """
    return {c: scores[c] - scores[p] for c, p in tree.parents().items()}


def _label_means(tree: Tree, nc: NodeCounts) -> tuple[dict[int, float | None], dict[int, float]]:
    """Node target means plus the increments they induce.

    Empty nodes have no mean; for increments they inherit their parent's mean,
    so edges into unpopulated regions carry zero.
    """
    means: dict[int, float | None] = {}
    effective: dict[int, float] = {}
    parents = tree.parents()
    for nid in tree.preorder():
        n = nc.counts[nid]
        means[nid] = nc.target_sums[nid] / n if n > 0 else None
        if means[nid] is not None:
            effective[nid] = means[nid]
        else:
            parent = parents.get(nid)
            effective[nid] = effective[parent] if parent is not None else 0.0
    return means, compute_local_increments(tree, effective)


def annotate_tree(tree: Tree, nc: NodeCounts | None, with_labels: bool) -> dict[int, NodeAnnotation]:
    bp = backprop_scores(tree, nc.counts if nc is not None else None)
    li_s = compute_local_increments(tree, bp.simple)
    li_w = compute_local_increments(tree, bp.weighted) if bp.weighted is not None else {}
    means, li_l = _label_means(tree, nc) if with_labels else ({}, {})
    return {
        nid: NodeAnnotation(
            count=nc.counts[nid] if nc is not None else None,
            bp_score_simple=bp.simple[nid],
            bp_score_weighted=bp.weighted[nid] if bp.weighted is not None else None,
            pos_fraction=means.get(nid),
            li_simple=li_s.get(nid),
            li_weighted=li_w.get(nid),
            li_label=li_l.get(nid),
            fallback=nid in bp.fallback,
        )
        for nid in tree.node_ids()
    }


def annotate(
    ensemble: Ensemble,
    dataset: Dataset | None = None,
    tree_targets: Sequence[Sequence[float]] | None = None,
    threads: int = 1,
) -> AnnotatedEnsemble:
    """Compute every annotation variant the inputs allow.

    Without a dataset only SIMPLE is available. With a dataset the WEIGHTED
    variant is added, and LABEL too when the labels are binary or per-tree
    targets are given.
    """
    if dataset is None:
        return AnnotatedEnsemble(ensemble, [annotate_tree(t, None, False) for t in ensemble.trees])
    _check_catalog(ensemble, dataset)
    with_labels = tree_targets is not None or dataset.has_binary_labels()
    width = len(ensemble.catalog)

    def work(m: int) -> dict[int, NodeAnnotation]:
        tree = ensemble.trees[m]
        targets = tree_targets[m] if tree_targets is not None else dataset.labels
        nc = _tree_counts(tree, dataset.rows, targets if with_labels else None, ensemble.missing_policy, width)
        return annotate_tree(tree, nc, with_labels)

    indices = range(len(ensemble.trees))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_tree = list(pool.map(work, indices))
    else:
        per_tree = [work(m) for m in indices]
    return AnnotatedEnsemble(ensemble, per_tree)

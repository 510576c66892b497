"""Tree-ensemble data model and pure traversal.

Trees are stored as id-indexed node maps. A node's predicate describes how it
is selected from its parent (PMML style), so routing an instance through an
internal node means finding the single child whose predicate holds.
"""

from __future__ import annotations

import enum
import math
import operator
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

from .errors import MissingValueError, ModelInvariantError

MISSING = None
"""Marker for an absent feature value inside an :data:`Instance`."""

Value = Union[float, str, None]
Instance = Sequence[Value]


class Operator(enum.Enum):
    LESS_OR_EQUAL = "lessOrEqual"
    LESS_THAN = "lessThan"
    GREATER_THAN = "greaterThan"
    GREATER_OR_EQUAL = "greaterOrEqual"
    EQUAL = "equal"
    NOT_EQUAL = "notEqual"

    @property
    def is_ordering(self) -> bool:
        return self not in (Operator.EQUAL, Operator.NOT_EQUAL)


# Pairs of operators that partition the defined values for a shared threshold.
_COMPLEMENT = {
    Operator.LESS_OR_EQUAL: Operator.GREATER_THAN,
    Operator.GREATER_THAN: Operator.LESS_OR_EQUAL,
    Operator.LESS_THAN: Operator.GREATER_OR_EQUAL,
    Operator.GREATER_OR_EQUAL: Operator.LESS_THAN,
    Operator.EQUAL: Operator.NOT_EQUAL,
    Operator.NOT_EQUAL: Operator.EQUAL,
}


_ORDERING = {
    Operator.LESS_OR_EQUAL: operator.le,
    Operator.LESS_THAN: operator.lt,
    Operator.GREATER_THAN: operator.gt,
    Operator.GREATER_OR_EQUAL: operator.ge,
}


class EnsembleKind(enum.Enum):
    GBDT_SUM = "GBDT_SUM"
    RF_AVERAGE = "RF_AVERAGE"


class MissingPolicy(enum.Enum):
    DEFAULT_CHILD = "DEFAULT_CHILD"
    ALWAYS_LEFT = "ALWAYS_LEFT"
    ERROR = "ERROR"


class FeatureCatalog:
    """Ordered, unique feature names with a name -> index map."""

    __slots__ = ("names", "index")

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        for name in names:
            if not isinstance(name, str) or not name:
                raise ModelInvariantError(f"feature names must be non-empty strings, got {name!r}")
        index = {name: i for i, name in enumerate(names)}
        if len(index) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ModelInvariantError(f"duplicate feature names: {dupes}")
        self.names = names
        self.index = index

    def __len__(self) -> int:
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FeatureCatalog) and self.names == other.names

    def __hash__(self) -> int:
        return hash(self.names)

    def __repr__(self) -> str:
        return f"FeatureCatalog({list(self.names)!r})"


@dataclass(frozen=True)
class SplitPredicate:
    feature: int
    operator: Operator
    threshold: float | str
    _numeric_token: float | None = field(default=None, init=False, repr=False, compare=False)
    _compare: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.operator.is_ordering:
            if isinstance(self.threshold, str) or not math.isfinite(self.threshold):
                raise ModelInvariantError(
                    f"{self.operator.value} needs a finite numeric threshold, got {self.threshold!r}"
                )
            object.__setattr__(self, "threshold", float(self.threshold))
            object.__setattr__(self, "_compare", _ORDERING[self.operator])
        else:
            token = str(self.threshold)
            if not token:
                raise ModelInvariantError(f"{self.operator.value} needs a non-empty token")
            object.__setattr__(self, "threshold", token)
            try:
                object.__setattr__(self, "_numeric_token", float(token))
            except ValueError:
                pass

    def complement(self) -> SplitPredicate:
        return SplitPredicate(self.feature, _COMPLEMENT[self.operator], self.threshold)

    def is_complement_of(self, other: SplitPredicate) -> bool:
        return (
            self.feature == other.feature
            and _COMPLEMENT[self.operator] is other.operator
            and self.threshold == other.threshold
        )

    def evaluate(self, value: float | str) -> bool:
        """Test a defined (non-missing) value against the predicate."""
        compare = self._compare
        if compare is not None:
            if isinstance(value, str):
                raise ModelInvariantError(
                    f"ordering predicate on feature {self.feature} got categorical value {value!r}"
                )
            return compare(value, self.threshold)
        if isinstance(value, str):
            equal = value == self.threshold
        else:
            equal = self._numeric_token is not None and value == self._numeric_token
        return equal if self.operator is Operator.EQUAL else not equal


@dataclass(frozen=True)
class TreeNode:
    id: int
    predicate: SplitPredicate | None = None
    children: tuple[int, ...] = ()
    leaf_score: float | None = None
    default_child: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Tree:
    nodes: Mapping[int, TreeNode]
    root_id: int = 0
    weight: float = 1.0

    def node_ids(self) -> list[int]:
        return sorted(self.nodes)

    def parents(self) -> dict[int, int]:
        """Map child id -> parent id."""
        return {c: n.id for n in self.nodes.values() for c in n.children}

    def split_feature(self, node_id: int) -> int:
        """Feature tested by an internal node (shared by its children's predicates)."""
        first = self.nodes[self.nodes[node_id].children[0]]
        return first.predicate.feature

    def postorder(self) -> list[int]:
        """Node ids with every child before its parent, siblings in stored order."""
        out: list[int] = []
        stack = [(self.root_id, False)]
        while stack:
            nid, expanded = stack.pop()
            if expanded:
                out.append(nid)
                continue
            stack.append((nid, True))
            for c in reversed(self.nodes[nid].children):
                stack.append((c, False))
        return out

    def preorder(self) -> list[int]:
        out: list[int] = []
        stack = [self.root_id]
        while stack:
            nid = stack.pop()
            out.append(nid)
            stack.extend(reversed(self.nodes[nid].children))
        return out

    @staticmethod
    def from_nodes(nodes: Sequence[TreeNode], root_id: int = 0, weight: float = 1.0) -> Tree:
        return Tree({n.id: n for n in nodes}, root_id, weight)


@dataclass(frozen=True)
class Ensemble:
    trees: tuple[Tree, ...]
    catalog: FeatureCatalog
    kind: EnsembleKind = EnsembleKind.GBDT_SUM
    missing_policy: MissingPolicy = MissingPolicy.ALWAYS_LEFT

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))


@dataclass(frozen=True)
class PredictionPath:
    tree_index: int
    node_ids: tuple[int, ...]
    leaf_score: float


@dataclass(frozen=True)
class Violation:
    tree: int | None
    node: int | None
    rule: str
    message: str


def route(node: TreeNode, instance: Instance, policy: MissingPolicy, nodes: Mapping[int, TreeNode]) -> int:
    """Return the id of the child of ``node`` selected by ``instance``."""
    if node.is_leaf:
        raise ModelInvariantError(f"node {node.id} is a leaf and cannot route")
    feature = nodes[node.children[0]].predicate.feature
    value = instance[feature]
    if value is MISSING or (isinstance(value, float) and math.isnan(value)):
        if policy is MissingPolicy.ALWAYS_LEFT:
            return node.children[0]
        if policy is MissingPolicy.DEFAULT_CHILD:
            if node.default_child is None:
                # No default recorded on this node; same outcome as ALWAYS_LEFT.
                return node.children[0]
            return node.default_child
        raise MissingValueError(f"feature {feature} is missing at node {node.id}")
    matched = [c for c in node.children if nodes[c].predicate.evaluate(value)]
    if len(matched) != 1:
        raise ModelInvariantError(
            f"node {node.id}: value {value!r} of feature {feature} matches {len(matched)} children"
        )
    return matched[0]


def _check_length(instance: Instance, n_features: int | None) -> None:
    if n_features is not None and len(instance) != n_features:
        raise ModelInvariantError(f"instance has {len(instance)} values, catalog has {n_features}")


def trace_path(
    tree: Tree,
    instance: Instance,
    policy: MissingPolicy = MissingPolicy.ALWAYS_LEFT,
    tree_index: int = 0,
    n_features: int | None = None,
) -> PredictionPath:
    _check_length(instance, n_features)
    nodes = tree.nodes
    node = nodes[tree.root_id]
    ids = [node.id]
    while node.children:
        node = nodes[route(node, instance, policy, nodes)]
        ids.append(node.id)
    return PredictionPath(tree_index, tuple(ids), node.leaf_score * tree.weight)


def predict(ensemble: Ensemble, instance: Instance) -> float:
    """Sum (GBDT) or mean (RF) of the weighted leaf scores reached by ``instance``."""
    _check_length(instance, len(ensemble.catalog))
    return combine_leaf_scores(
        ensemble,
        (trace_path(tree, instance, ensemble.missing_policy, m).leaf_score for m, tree in enumerate(ensemble.trees)),
    )


def combine_leaf_scores(ensemble: Ensemble, scores: Iterable[float]) -> float:
    """Fold already-weighted per-tree leaf scores with the ensemble's combiner, in tree order."""
    total = 0.0
    for s in scores:
        total += s
    if ensemble.kind is EnsembleKind.RF_AVERAGE:
        total /= len(ensemble.trees)
    return total


def validate(ensemble: Ensemble) -> list[Violation]:
    """Collect every structural violation; an empty list means the model is valid."""
    out: list[Violation] = []
    if not ensemble.trees:
        out.append(Violation(None, None, "ensemble_empty", "ensemble must contain at least one tree"))
    n_features = len(ensemble.catalog)
    for m, tree in enumerate(ensemble.trees):
        out.extend(_validate_tree(m, tree, n_features))
    return out


def _validate_tree(m: int, tree: Tree, n_features: int) -> list[Violation]:
    out: list[Violation] = []

    def bad(node, rule, msg):
        out.append(Violation(m, node, rule, msg))

    if not math.isfinite(tree.weight):
        bad(None, "tree_weight", "tree weight must be finite")
    nodes = tree.nodes
    for key, node in nodes.items():
        if key != node.id:
            bad(key, "node_id", f"node stored under id {key} declares id {node.id}")
    if tree.root_id not in nodes:
        bad(tree.root_id, "root_missing", "root id not present in tree")
        return out

    # Reachability: every node exactly once from the root.
    seen: dict[int, int] = {}
    stack = [tree.root_id]
    while stack:
        nid = stack.pop()
        seen[nid] = seen.get(nid, 0) + 1
        if seen[nid] > 1:
            bad(nid, "multiple_parents", "node reachable more than once (shared child or cycle)")
            continue
        for c in nodes[nid].children:
            if c not in nodes:
                bad(nid, "child_missing", f"child id {c} not present in tree")
            else:
                stack.append(c)
    for nid in sorted(set(nodes) - set(seen)):
        bad(nid, "unreachable", "node unreachable from root")

    for nid in sorted(nodes):
        node = nodes[nid]
        if nid == tree.root_id and node.predicate is not None:
            bad(nid, "root_predicate", "root must not carry a predicate")
        if node.predicate is not None and not 0 <= node.predicate.feature < n_features:
            bad(nid, "feature_index", f"predicate feature index {node.predicate.feature} out of range")
        if not node.children:
            if node.leaf_score is None:
                bad(nid, "leaf_score", "leaf node must carry a score")
            elif not math.isfinite(node.leaf_score):
                bad(nid, "leaf_score", "leaf score must be finite")
            if node.default_child is not None:
                bad(nid, "default_child", "leaf must not declare a default child")
            continue
        if len(node.children) != 2:
            bad(nid, "child_count", "internal node must have 2 children")
            continue
        if node.leaf_score is not None:
            bad(nid, "internal_score", "internal node must not carry a leaf score")
        if node.default_child is not None and node.default_child not in node.children:
            bad(nid, "default_child", "default child must be one of the node's children")
        kids = [nodes.get(c) for c in node.children]
        if any(k is None for k in kids):
            continue
        preds = [k.predicate for k in kids]
        if any(p is None for p in preds):
            bad(nid, "child_predicate", "child node must carry a predicate")
            continue
        if preds[0].feature != preds[1].feature:
            bad(nid, "sibling_feature", "sibling predicates must share feature")
        elif not preds[0].is_complement_of(preds[1]):
            bad(nid, "sibling_complement", "sibling predicates must be complementary")
    return out

"""Native JSON model format, the carrier for annotated models.

Output is deterministic: keys in a fixed order, nodes in ascending id, floats
rendered by ``repr`` (shortest round-trip form), so equal documents serialize
to identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any

from ..annotate import AnnotatedEnsemble, NodeAnnotation
from ..ensemble import (
    Ensemble,
    EnsembleKind,
    FeatureCatalog,
    MissingPolicy,
    Operator,
    SplitPredicate,
    Tree,
    TreeNode,
    validate,
)
from ..errors import ModelInvariantError, ParseError

FORMAT_VERSION = "1.0"
SUPPORTED_VERSIONS = frozenset({FORMAT_VERSION})

_ANNOTATION_KEYS = (
    "count",
    "bp_score_simple",
    "bp_score_weighted",
    "pos_fraction",
    "li_simple",
    "li_weighted",
    "li_label",
    "fallback",
)


@dataclass(frozen=True)
class NativeModelDocument:
    ensemble: Ensemble
    annotations: tuple[dict[int, NodeAnnotation], ...] | None = None
    format_version: str = FORMAT_VERSION

    @classmethod
    def from_annotated(cls, model: AnnotatedEnsemble) -> NativeModelDocument:
        return cls(model.ensemble, model.annotations)

    def annotated(self) -> AnnotatedEnsemble:
        if self.annotations is None:
            raise ParseError("model document carries no annotations")
        return AnnotatedEnsemble(self.ensemble, self.annotations)


def _predicate_json(pred: SplitPredicate | None, catalog: FeatureCatalog):
    if pred is None:
        return None
    return {
        "feature": catalog.names[pred.feature],
        "operator": pred.operator.value,
        "value": pred.threshold,
    }


def _node_json(node: TreeNode, catalog: FeatureCatalog, ann: NodeAnnotation | None) -> dict:
    out: dict[str, Any] = {
        "id": node.id,
        "predicate": _predicate_json(node.predicate, catalog),
        "children": list(node.children),
    }
    if node.is_leaf:
        out["score"] = node.leaf_score
    if node.default_child is not None:
        out["default_child"] = node.default_child
    if ann is not None:
        out["annotation"] = {key: getattr(ann, key) for key in _ANNOTATION_KEYS}
    return out


def serialize_native(doc: NativeModelDocument | AnnotatedEnsemble | Ensemble) -> str:
    if isinstance(doc, AnnotatedEnsemble):
        doc = NativeModelDocument.from_annotated(doc)
    elif isinstance(doc, Ensemble):
        doc = NativeModelDocument(doc)
    ens = doc.ensemble
    trees = []
    for m, tree in enumerate(ens.trees):
        ann = doc.annotations[m] if doc.annotations is not None else None
        trees.append({
            "root": tree.root_id,
            "weight": tree.weight,
            "nodes": [
                _node_json(tree.nodes[nid], ens.catalog, ann[nid] if ann is not None else None)
                for nid in sorted(tree.nodes)
            ],
        })
    payload = {
        "format_version": doc.format_version,
        "kind": ens.kind.value,
        "missing_policy": ens.missing_policy.value,
        "features": list(ens.catalog.names),
        "trees": trees,
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


class _Ctx:
    """Tracks the JSON path being decoded for error messages."""

    def __init__(self):
        self.path: list[str] = []

    def fail(self, msg: str) -> ParseError:
        where = "".join(self.path) or "<document>"
        return ParseError(f"{where}: {msg}")

    def get(self, obj: dict, key: str, kind, required=True, default=None, nullable=False):
        if not isinstance(obj, dict):
            raise self.fail("expected an object")
        if key not in obj:
            if required:
                raise self.fail(f"missing field {key!r}")
            return default
        value = obj[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if value is None:
            if not nullable:
                raise self.fail(f"field {key!r} must not be null")
            return value
        if isinstance(value, bool) != (kind is bool) or not isinstance(value, kind):
            raise self.fail(f"field {key!r} has wrong type {type(value).__name__}")
        return value


def _parse_predicate(raw, catalog: FeatureCatalog, ctx: _Ctx) -> SplitPredicate | None:
    if raw is None:
        return None
    name = ctx.get(raw, "feature", str)
    if name not in catalog.index:
        raise ctx.fail(f"unknown feature {name!r}")
    try:
        op = Operator(ctx.get(raw, "operator", str))
    except ValueError as exc:
        raise ctx.fail(str(exc)) from exc
    value = raw.get("value")
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ctx.fail("predicate value must be a number or string")
    try:
        return SplitPredicate(catalog.index[name], op, value)
    except ModelInvariantError as exc:
        raise ctx.fail(str(exc)) from exc


def _parse_annotation(raw, ctx: _Ctx) -> NodeAnnotation:
    fields = {}
    for key in _ANNOTATION_KEYS:
        if key == "count":
            fields[key] = ctx.get(raw, key, int, required=False, nullable=True)
        elif key == "fallback":
            fields[key] = bool(ctx.get(raw, key, bool, required=False, default=False))
        else:
            required = key == "bp_score_simple"
            fields[key] = ctx.get(raw, key, float, required=required, nullable=not required)
    return NodeAnnotation(**fields)


def parse_native(document: str) -> NativeModelDocument:
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    ctx = _Ctx()
    version = ctx.get(raw, "format_version", str)
    if version not in SUPPORTED_VERSIONS:
        raise ctx.fail(f"unsupported format_version {version!r}")
    try:
        kind = EnsembleKind(ctx.get(raw, "kind", str))
        policy = MissingPolicy(ctx.get(raw, "missing_policy", str))
    except ValueError as exc:
        raise ctx.fail(str(exc)) from exc
    try:
        catalog = FeatureCatalog(ctx.get(raw, "features", list))
    except ModelInvariantError as exc:
        raise ctx.fail(str(exc)) from exc

    trees = []
    annotations = []
    for m, raw_tree in enumerate(ctx.get(raw, "trees", list)):
        ctx.path = [f"trees[{m}]"]
        root = ctx.get(raw_tree, "root", int)
        weight = ctx.get(raw_tree, "weight", float, required=False, default=1.0)
        if not math.isfinite(weight):
            raise ctx.fail("tree weight must be finite")
        nodes = []
        ann: dict[int, NodeAnnotation] = {}
        for k, raw_node in enumerate(ctx.get(raw_tree, "nodes", list)):
            ctx.path = [f"trees[{m}]", f".nodes[{k}]"]
            nid = ctx.get(raw_node, "id", int)
            children = ctx.get(raw_node, "children", list)
            if not all(isinstance(c, int) and not isinstance(c, bool) for c in children):
                raise ctx.fail("children must be integer ids")
            score = ctx.get(raw_node, "score", float, required=not children)
            nodes.append(TreeNode(
                id=nid,
                predicate=_parse_predicate(ctx.get(raw_node, "predicate", dict, required=False, nullable=True), catalog, ctx),
                children=tuple(children),
                leaf_score=score if not children else None,
                default_child=ctx.get(raw_node, "default_child", int, required=False, nullable=True),
            ))
            raw_ann = ctx.get(raw_node, "annotation", dict, required=False)
            if raw_ann is not None:
                ctx.path.append(".annotation")
                ann[nid] = _parse_annotation(raw_ann, ctx)
        if len({n.id for n in nodes}) != len(nodes):
            raise ctx.fail("duplicate node ids")
        if ann and len(ann) != len(nodes):
            raise ctx.fail("annotations must cover every node of the tree or none")
        trees.append(Tree.from_nodes(nodes, root, weight))
        annotations.append(ann or None)

    ensemble = Ensemble(tuple(trees), catalog, kind, policy)
    violations = validate(ensemble)
    if violations:
        raise ModelInvariantError("; ".join(f"tree {v.tree} node {v.node}: {v.message}" for v in violations))
    if any(a is None for a in annotations):
        if any(a is not None for a in annotations):
            raise ParseError("annotations must be present on every tree or none")
        return NativeModelDocument(ensemble, None, version)
    return NativeModelDocument(ensemble, tuple(annotations), version)

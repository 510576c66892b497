"""PMML tree-ensemble subset: MiningModel/Segmentation of TreeModels with SimplePredicates.

Anything outside that slice raises :class:`UnsupportedFeatureError` naming the
offending element. Scores on internal nodes are ignored; interior scores are
always recomputed from the leaves by :mod:`treecontrib.annotate`.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

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
from ..errors import ModelInvariantError, ParseError, UnsupportedFeatureError

PMML_NS = "http://www.dmg.org/PMML-4_3"
POLICY_EXTENSION = "treecontrib.missing_policy"

_METHODS = {
    "sum": EnsembleKind.GBDT_SUM,
    "weightedSum": EnsembleKind.GBDT_SUM,
    "average": EnsembleKind.RF_AVERAGE,
}
_IGNORED = {"Extension", "ScoreDistribution", "Partition"}
_UNSUPPORTED_PREDICATES = {"CompoundPredicate", "SimpleSetPredicate", "False"}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _children(elem: ET.Element, name: str) -> list[ET.Element]:
    return [c for c in elem if _local(c.tag) == name]


def _child(elem: ET.Element, name: str) -> ET.Element | None:
    found = _children(elem, name)
    return found[0] if found else None


def _catalog(model: ET.Element) -> FeatureCatalog:
    schema = _child(model, "MiningSchema")
    if schema is None:
        raise ParseError(f"{_local(model.tag)} lacks a MiningSchema")
    names = [
        f.get("name")
        for f in _children(schema, "MiningField")
        if f.get("usageType", "active") not in ("target", "predicted")
    ]
    try:
        return FeatureCatalog(names)
    except ModelInvariantError as exc:
        raise ParseError(f"MiningSchema: {exc}") from exc


def _policy(model: ET.Element, tree_models: list[ET.Element]) -> MissingPolicy:
    for ext in _children(model, "Extension"):
        if ext.get("name") == POLICY_EXTENSION:
            try:
                return MissingPolicy(ext.get("value"))
            except ValueError as exc:
                raise ParseError(f"Extension {POLICY_EXTENSION}: {exc}") from exc
    if tree_models and tree_models[0].get("missingValueStrategy") == "defaultChild":
        return MissingPolicy.DEFAULT_CHILD
    return MissingPolicy.ALWAYS_LEFT


class _TreeReader:
    def __init__(self, catalog: FeatureCatalog, tree_no: int):
        self.catalog = catalog
        self.tree_no = tree_no
        self.nodes: list[TreeNode] = []
        self.next_id = 0
        self.explicit_ids: bool | None = None

    def fail(self, msg: str, cls=ParseError):
        return cls(f"tree {self.tree_no}: {msg}")

    def _node_id(self, elem: ET.Element) -> int:
        raw = elem.get("id")
        explicit = raw is not None
        if self.explicit_ids is None:
            self.explicit_ids = explicit
        elif self.explicit_ids != explicit:
            raise self.fail("Node ids must be given on every node or none")
        if not explicit:
            nid = self.next_id
            self.next_id += 1
            return nid
        try:
            nid = int(raw)
        except ValueError:
            raise self.fail(f"Node id {raw!r} is not an integer") from None
        if nid < 0:
            raise self.fail(f"Node id {nid} is negative")
        return nid

    def _predicate_elem(self, elem: ET.Element) -> ET.Element | None:
        for c in elem:
            name = _local(c.tag)
            if name in _UNSUPPORTED_PREDICATES:
                raise self.fail(f"unsupported predicate element <{name}>", UnsupportedFeatureError)
            if name in ("SimplePredicate", "True"):
                return c
        return None

    def _simple(self, elem: ET.Element) -> SplitPredicate:
        field = elem.get("field")
        if field not in self.catalog.index:
            raise self.fail(f"SimplePredicate field {field!r} is not a mining field")
        op_name = elem.get("operator")
        try:
            op = Operator(op_name)
        except ValueError:
            raise self.fail(
                f"unsupported SimplePredicate operator {op_name!r}", UnsupportedFeatureError
            ) from None
        raw = elem.get("value")
        if raw is None:
            raise self.fail(f"SimplePredicate on {field!r} lacks a value")
        if op.is_ordering:
            try:
                value = float(raw)
            except ValueError:
                raise self.fail(f"non-numeric threshold {raw!r} for {op_name}") from None
        else:
            value = raw
        try:
            return SplitPredicate(self.catalog.index[field], op, value)
        except ModelInvariantError as exc:
            raise self.fail(str(exc)) from exc

    def read(self, elem: ET.Element, predicate: SplitPredicate | None) -> int:
        nid = self._node_id(elem)
        for c in elem:
            name = _local(c.tag)
            if name not in _IGNORED and name not in ("Node", "SimplePredicate", "True"):
                raise self.fail(f"unsupported element <{name}> in Node {nid}", UnsupportedFeatureError)
        kids = _children(elem, "Node")
        preds = [self._predicate_elem(k) for k in kids]
        resolved: list[SplitPredicate | None] = [
            self._simple(p) if p is not None and _local(p.tag) == "SimplePredicate" else None for p in preds
        ]
        # A <True/> child is the catch-all sibling of a SimplePredicate child.
        for i, p in enumerate(preds):
            if p is None:
                raise self.fail(f"child of Node {nid} has no predicate")
            if resolved[i] is None:
                others = [r for j, r in enumerate(resolved) if j != i and r is not None]
                if len(kids) != 2 or len(others) != 1:
                    raise self.fail(
                        f"<True/> on a child of Node {nid} needs exactly one SimplePredicate sibling",
                        UnsupportedFeatureError,
                    )
                resolved[i] = others[0].complement()
        child_ids = tuple(self.read(k, r) for k, r in zip(kids, resolved))

        score = None
        if not kids:
            raw = elem.get("score")
            if raw is None:
                raise self.fail(f"leaf Node {nid} has no score attribute")
            try:
                score = float(raw)
            except ValueError:
                raise self.fail(f"leaf Node {nid} score {raw!r} is not numeric") from None
        default = elem.get("defaultChild")
        default_id = None
        if default is not None and kids:
            try:
                default_id = int(default)
            except ValueError:
                raise self.fail(f"defaultChild {default!r} is not an integer") from None
        self.nodes.append(TreeNode(nid, predicate, child_ids, score, default_id))
        return nid


def _read_tree(tree_model: ET.Element, catalog: FeatureCatalog, tree_no: int, weight: float) -> Tree:
    for c in tree_model:
        if _local(c.tag) not in ("MiningSchema", "Node", "Extension", "Output", "Targets", "LocalTransformations", "ModelStats"):
            raise UnsupportedFeatureError(f"tree {tree_no}: unsupported element <{_local(c.tag)}> in TreeModel")
    root = _child(tree_model, "Node")
    if root is None:
        raise ParseError(f"tree {tree_no}: TreeModel has no root Node")
    reader = _TreeReader(catalog, tree_no)
    pred = reader._predicate_elem(root)
    if pred is not None and _local(pred.tag) != "True":
        raise UnsupportedFeatureError(f"tree {tree_no}: root Node predicate must be <True/>")
    root_id = reader.read(root, None)
    ids = [n.id for n in reader.nodes]
    if len(set(ids)) != len(ids):
        raise ParseError(f"tree {tree_no}: duplicate Node ids")
    return Tree.from_nodes(reader.nodes, root_id, weight)


def parse_pmml(document: str) -> Ensemble:
    """Parse a PMML document into an :class:`Ensemble`."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc
    if _local(root.tag) != "PMML":
        raise ParseError(f"root element is <{_local(root.tag)}>, expected <PMML>")
    models = [c for c in root if _local(c.tag) not in ("Header", "DataDictionary", "TransformationDictionary", "Extension", "MiningBuildTask")]
    if len(models) != 1:
        raise UnsupportedFeatureError(f"expected exactly one model element, found {[_local(m.tag) for m in models]}")
    model = models[0]
    name = _local(model.tag)
    catalog = _catalog(model)

    if name == "TreeModel":
        kind = EnsembleKind.GBDT_SUM
        tree_models = [model]
        trees = [_read_tree(model, catalog, 0, 1.0)]
    elif name == "MiningModel":
        seg = _child(model, "Segmentation")
        if seg is None:
            raise UnsupportedFeatureError("MiningModel without Segmentation")
        method = seg.get("multipleModelMethod")
        if method not in _METHODS:
            raise UnsupportedFeatureError(f"Segmentation multipleModelMethod {method!r} is not supported")
        kind = _METHODS[method]
        tree_models, trees = [], []
        for i, segment in enumerate(_children(seg, "Segment")):
            if _child(segment, "True") is None:
                found = [_local(c.tag) for c in segment if _local(c.tag) not in ("TreeModel", "Extension")]
                raise UnsupportedFeatureError(
                    f"Segment {i}: unsupported segment predicate {found}; only <True/> is supported"
                )
            tm = _child(segment, "TreeModel")
            if tm is None:
                inner = [_local(c.tag) for c in segment if _local(c.tag) not in ("True", "Extension")]
                raise UnsupportedFeatureError(f"Segment {i}: unsupported model element {inner}")
            weight = 1.0
            if method == "weightedSum":
                try:
                    weight = float(segment.get("weight", "1"))
                except ValueError:
                    raise ParseError(f"Segment {i}: weight is not numeric") from None
            tree_models.append(tm)
            trees.append(_read_tree(tm, catalog, i, weight))
    else:
        raise UnsupportedFeatureError(f"unsupported model element <{name}>")

    ensemble = Ensemble(tuple(trees), catalog, kind, _policy(model, tree_models))
    violations = validate(ensemble)
    if violations:
        raise ModelInvariantError("; ".join(f"tree {v.tree} node {v.node}: {v.message}" for v in violations))
    return ensemble


def _categorical_features(ensemble: Ensemble) -> set[int]:
    return {
        n.predicate.feature
        for t in ensemble.trees
        for n in t.nodes.values()
        if n.predicate is not None and not n.predicate.operator.is_ordering
    }


def _fmt(value) -> str:
    return repr(float(value)) if not isinstance(value, str) else value


def _write_node(parent: ET.Element, tree: Tree, nid: int, catalog: FeatureCatalog) -> None:
    node = tree.nodes[nid]
    elem = ET.SubElement(parent, "Node", id=str(nid))
    if node.is_leaf:
        elem.set("score", _fmt(node.leaf_score))
    if node.default_child is not None:
        elem.set("defaultChild", str(node.default_child))
    if node.predicate is None:
        ET.SubElement(elem, "True")
    else:
        p = node.predicate
        ET.SubElement(
            elem,
            "SimplePredicate",
            field=catalog.names[p.feature],
            operator=p.operator.value,
            value=_fmt(p.threshold),
        )
    for c in node.children:
        _write_node(elem, tree, c, catalog)


def _target_name(catalog: FeatureCatalog) -> str:
    name = "target"
    while name in catalog.index:
        name = "_" + name
    return name


def _mining_schema(parent: ET.Element, catalog: FeatureCatalog, target: str) -> None:
    schema = ET.SubElement(parent, "MiningSchema")
    for name in catalog.names:
        ET.SubElement(schema, "MiningField", name=name)
    ET.SubElement(schema, "MiningField", name=target, usageType="target")


def serialize_pmml(ensemble: Ensemble) -> str:
    """Write ``ensemble`` as PMML 4.3. Annotations have no PMML home and are not written."""
    catalog = ensemble.catalog
    target = _target_name(catalog)
    categorical = _categorical_features(ensemble)
    root = ET.Element("PMML", xmlns=PMML_NS, version="4.3")
    ET.SubElement(root, "Header", description="tree ensemble")
    dd = ET.SubElement(root, "DataDictionary", numberOfFields=str(len(catalog) + 1))
    for j, name in enumerate(catalog.names):
        if j in categorical:
            ET.SubElement(dd, "DataField", name=name, optype="categorical", dataType="string")
        else:
            ET.SubElement(dd, "DataField", name=name, optype="continuous", dataType="double")
    ET.SubElement(dd, "DataField", name=target, optype="continuous", dataType="double")

    model = ET.SubElement(root, "MiningModel", functionName="regression")
    ET.SubElement(model, "Extension", name=POLICY_EXTENSION, value=ensemble.missing_policy.value)
    _mining_schema(model, catalog, target)
    weighted = any(t.weight != 1.0 for t in ensemble.trees)
    if ensemble.kind is EnsembleKind.RF_AVERAGE:
        method = "average"
    else:
        method = "weightedSum" if weighted else "sum"
    seg = ET.SubElement(model, "Segmentation", multipleModelMethod=method)
    strategy = "defaultChild" if ensemble.missing_policy is MissingPolicy.DEFAULT_CHILD else "none"
    for i, tree in enumerate(ensemble.trees):
        segment = ET.SubElement(seg, "Segment", id=str(i + 1))
        if method == "weightedSum":
            segment.set("weight", _fmt(tree.weight))
        ET.SubElement(segment, "True")
        tm = ET.SubElement(
            segment,
            "TreeModel",
            functionName="regression",
            splitCharacteristic="binarySplit",
            missingValueStrategy=strategy,
        )
        _mining_schema(tm, catalog, target)
        _write_node(tm, tree, tree.root_id, catalog)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"

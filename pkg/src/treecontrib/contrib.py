"""Per-instance feature contributions.

For each tree the instance's root-to-leaf path is traced and every edge's local
increment is added to the split feature of the edge's parent. Per-tree vectors
are summed for GBDT ensembles (scaled by tree weight) and averaged for random
forests. With the baseline reported separately, baseline plus contributions
reconstructs the prediction.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .annotate import AnnotatedEnsemble, Variant
from .ensemble import EnsembleKind, FeatureCatalog, Instance, combine_leaf_scores, trace_path
from .errors import CatalogMismatchError, TreeContribError, with_row
from .ingest.tabular import Dataset


@dataclass(frozen=True)
class ContributionVector:
    values: np.ndarray
    baseline: float
    prediction: float
    variant: Variant

    @property
    def reconstruction_error(self) -> float:
        """|baseline + sum(values) - prediction|."""
        return abs(self.baseline + float(np.sum(self.values)) - self.prediction)

    def top(self, catalog: FeatureCatalog, k: int | None = None) -> list[tuple[str, float]]:
        """(feature, contribution) pairs by descending magnitude, ties in catalog order."""
        order = sorted(range(len(self.values)), key=lambda j: (-abs(self.values[j]), j))
        if k is not None:
            order = order[:k]
        return [(catalog.names[j], float(self.values[j])) for j in order]


@dataclass(frozen=True)
class FcDistribution:
    catalog: FeatureCatalog
    values: np.ndarray  # (n_instances, n_features)

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.values, axis=0)

    def feature_values(self, name: str) -> np.ndarray:
        return self.values[:, self.catalog.index[name]]


def explain_instance(model: AnnotatedEnsemble, instance: Instance, variant: Variant = Variant.WEIGHTED) -> ContributionVector:
    edges = model.edge_increments(variant)
    ensemble = model.ensemble
    width = len(ensemble.catalog)
    total = np.zeros(width)
    leaf_scores = []
    for m, tree in enumerate(ensemble.trees):
        per_tree = np.zeros(width)
        path = trace_path(tree, instance, ensemble.missing_policy, m, n_features=width)
        leaf_scores.append(path.leaf_score)
        tree_edges = edges[m]
        for nid in path.node_ids[1:]:
            feature, li = tree_edges[nid]
            per_tree[feature] += li
        total += tree.weight * per_tree
    if ensemble.kind is EnsembleKind.RF_AVERAGE:
        total /= len(ensemble.trees)
    # Same fold as predict(), reusing the paths traced above.
    prediction = combine_leaf_scores(ensemble, leaf_scores)
    return ContributionVector(total, model.baseline(variant), prediction, variant)


def rf_explain_instance(model: AnnotatedEnsemble, instance: Instance) -> ContributionVector:
    """Label-distribution contributions: positive-fraction changes, averaged over the forest."""
    return explain_instance(model, instance, Variant.LABEL)


def explain_batch(
    model: AnnotatedEnsemble,
    dataset: Dataset,
    variant: Variant = Variant.WEIGHTED,
    threads: int = 1,
) -> tuple[list[ContributionVector], FcDistribution]:
    catalog = model.ensemble.catalog
    if dataset.catalog != catalog:
        raise CatalogMismatchError(
            f"dataset features {list(dataset.catalog.names)} != model features {list(catalog.names)}"
        )
    model.require(variant)

    def one(i: int) -> ContributionVector:
        try:
            return explain_instance(model, dataset.rows[i], variant)
        except TreeContribError as exc:
            raise with_row(exc, i) from exc

    indices = range(len(dataset))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(one, indices))
    else:
        vectors = [one(i) for i in indices]
    return vectors, FcDistribution(catalog, np.array([v.values for v in vectors]).reshape(len(vectors), len(catalog)))


def contributions_csv(vectors: list[ContributionVector], catalog: FeatureCatalog) -> str:
    lines = [",".join(["baseline", "prediction", *catalog.names])]
    for v in vectors:
        lines.append(",".join(repr(float(x)) for x in (v.baseline, v.prediction, *v.values)))
    return "\n".join(lines) + "\n"


def contributions_jsonl(vectors: list[ContributionVector], catalog: FeatureCatalog, top_k: int | None) -> str:
    out = []
    for i, v in enumerate(vectors):
        out.append(json.dumps({
            "row": i,
            "baseline": v.baseline,
            "prediction": v.prediction,
            "top": [[name, value] for name, value in v.top(catalog, top_k)],
        }))
    return "\n".join(out) + "\n"

"""Global feature rankings and the FI / IV / FC-median consistency report.

Split-gain importance
    For every split, ``n_p * between-child variance`` of the count-weighted
    back-propagated node scores, i.e. ``n1*n2/(n1+n2) * (S1 - S2)**2``. For a
    least-squares tree annotated with its training set those scores are the
    node target means, so this is exactly the squared-error reduction of the
    split. Summed over trees (times tree weight squared) and normalized to 1.

Information Value
    ``sum_b (p_b - q_b) * ln(p_b / q_b)`` over bins, where ``p_b`` and ``q_b``
    are the bin's shares of positives and negatives. Numeric features use
    equal-frequency bins by rank (tied values share a bin), MISSING gets its
    own bin, categorical features bin by token. A bin with an empty class
    cell gets 0.5 added to both of its class counts.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .annotate import AnnotatedEnsemble, Variant
from .contrib import FcDistribution, explain_batch
from .ensemble import MISSING, FeatureCatalog
from .errors import DegenerateLabelsError, VariantUnavailableError
from .ingest.tabular import Dataset

DEFAULT_K_SET = (10, 20, 30, 40, 50)


class RankingMethod(enum.Enum):
    GAIN_FI = "GAIN_FI"
    IV = "IV"
    FC_MEDIAN_ABS = "FC_MEDIAN_ABS"


@dataclass(frozen=True)
class FeatureRanking:
    method: RankingMethod
    entries: tuple[tuple[str, float], ...]

    @classmethod
    def from_scores(cls, method: RankingMethod, catalog: FeatureCatalog, scores: Sequence[float]) -> FeatureRanking:
        scores = [float(s) for s in scores]
        if not all(math.isfinite(s) for s in scores):
            raise ValueError(f"{method.value} produced non-finite scores")
        order = sorted(range(len(scores)), key=lambda j: (-scores[j], j))
        return cls(method, tuple((catalog.names[j], scores[j]) for j in order))

    @property
    def features(self) -> list[str]:
        return [name for name, _ in self.entries]

    def top(self, k: int) -> list[str]:
        return self.features[:k]

    def scores_by_feature(self) -> dict[str, float]:
        return dict(self.entries)


def gain_feature_importance(model: AnnotatedEnsemble) -> FeatureRanking:
    if not model.has_counts or Variant.WEIGHTED not in model.variants:
        raise VariantUnavailableError("split-gain importance needs instance counts (annotate with a dataset)")
    catalog = model.ensemble.catalog
    scores = np.zeros(len(catalog))
    for tree, ann in zip(model.ensemble.trees, model.annotations):
        w2 = tree.weight * tree.weight
        for nid in sorted(tree.nodes):
            node = tree.nodes[nid]
            if node.is_leaf:
                continue
            c1, c2 = (ann[c] for c in node.children)
            n = c1.count + c2.count
            if n == 0:
                continue
            diff = c1.bp_score_weighted - c2.bp_score_weighted
            scores[tree.split_feature(nid)] += w2 * c1.count * c2.count / n * diff * diff
    total = scores.sum()
    if total > 0:
        scores = scores / total
    return FeatureRanking.from_scores(RankingMethod.GAIN_FI, catalog, scores)


def _bin_keys(column: Sequence, bins: int) -> list:
    defined = [v for v in column if v is not MISSING]
    if defined and all(not isinstance(v, str) for v in defined):
        values = np.asarray(defined, dtype=float)
        ordered = np.sort(values)
        # Rank of the first equal value, so ties share a bin.
        defined_keys = iter((np.searchsorted(ordered, values, side="left") * bins // len(ordered)).tolist())
        return ["<missing>" if v is MISSING else next(defined_keys) for v in column]
    return ["<missing>" if v is MISSING else str(v) for v in column]


def information_value_from_counts(counts: Iterable[tuple[float, float]]) -> float:
    """IV from per-bin (positive, negative) counts, smoothing empty cells."""
    cells = []
    for pos, neg in counts:
        if pos == 0 or neg == 0:
            pos, neg = pos + 0.5, neg + 0.5
        cells.append((pos, neg))
    total_pos = sum(p for p, _ in cells)
    total_neg = sum(q for _, q in cells)
    iv = 0.0
    for pos, neg in cells:
        p, q = pos / total_pos, neg / total_neg
        iv += (p - q) * math.log(p / q)
    return iv


def information_value(dataset: Dataset, feature: int | str, bins: int = 10) -> float:
    if dataset.labels is None or not dataset.has_binary_labels():
        raise DegenerateLabelsError("information value needs binary labels in {0, 1}")
    labels = dataset.labels
    n_pos = sum(1 for v in labels if v == 1.0)
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabelsError("information value needs both classes present")
    j = dataset.catalog.index[feature] if isinstance(feature, str) else feature
    table: dict = {}
    for key, label in zip(_bin_keys(dataset.column(j), bins), labels):
        pos, neg = table.get(key, (0, 0))
        table[key] = (pos + 1, neg) if label == 1.0 else (pos, neg + 1)
    ordered = sorted(table.items(), key=lambda kv: (isinstance(kv[0], str), str(kv[0]) if isinstance(kv[0], str) else kv[0]))
    return information_value_from_counts(v for _, v in ordered)


def iv_ranking(dataset: Dataset, bins: int = 10) -> FeatureRanking:
    scores = [information_value(dataset, j, bins) for j in range(len(dataset.catalog))]
    return FeatureRanking.from_scores(RankingMethod.IV, dataset.catalog, scores)


def fc_median_ranking(distribution: FcDistribution) -> FeatureRanking:
    if distribution.values.shape[0] == 0:
        raise ValueError("empty contribution distribution")
    return FeatureRanking.from_scores(
        RankingMethod.FC_MEDIAN_ABS, distribution.catalog, np.abs(distribution.medians)
    )


def intersection_size(reference: FeatureRanking, candidate: FeatureRanking, k: int) -> int:
    return len(set(reference.top(k)) & set(candidate.top(k)))


def rank_correlation(a: FeatureRanking, b: FeatureRanking) -> float:
    """Spearman correlation between the two rankings' scores, aligned by feature."""
    sa, sb = a.scores_by_feature(), b.scores_by_feature()
    names = sorted(sa)
    x = [sa[n] for n in names]
    y = [sb[n] for n in names]
    if len(set(x)) < 2 or len(set(y)) < 2:
        return 0.0
    return float(spearmanr(x, y).statistic)


@dataclass(frozen=True)
class ConsistencyReport:
    reference: FeatureRanking
    rankings: dict[str, FeatureRanking]
    intersections: tuple[tuple[int, str, int], ...]
    table: tuple[dict, ...] = field(default=())

    def consistency_csv(self) -> str:
        if not self.table:
            return ""
        header = list(self.table[0])
        lines = [",".join(header)]
        for row in self.table:
            lines.append(",".join("" if row[h] is None else (row[h] if isinstance(row[h], str) else repr(float(row[h]))) for h in header))
        return "\n".join(lines) + "\n"

    def intersections_csv(self) -> str:
        lines = ["k,candidate,size"]
        lines += [f"{k},{name},{size}" for k, name, size in self.intersections]
        return "\n".join(lines) + "\n"


def consistency_report(
    model: AnnotatedEnsemble,
    dataset: Dataset,
    reference: RankingMethod = RankingMethod.IV,
    candidates: Sequence[Variant] = (Variant.SIMPLE, Variant.WEIGHTED),
    k_set: Sequence[int] = DEFAULT_K_SET,
    rf_model: AnnotatedEnsemble | None = None,
    bins: int = 10,
    threads: int = 1,
) -> ConsistencyReport:
    """Rank features by |median contribution| per candidate and compare against a reference.

    Candidates are contribution variants of ``model``; an annotated random
    forest passed as ``rf_model`` adds the label-distribution candidate "RF".
    """
    catalog = dataset.catalog
    fi = gain_feature_importance(model) if model.has_counts else None
    iv = iv_ranking(dataset, bins) if dataset.has_binary_labels() else None
    if reference is RankingMethod.IV:
        if iv is None:
            raise DegenerateLabelsError("IV reference needs binary labels")
        ref = iv
    elif reference is RankingMethod.GAIN_FI:
        if fi is None:
            raise VariantUnavailableError("GAIN_FI reference needs an annotated model with counts")
        ref = fi
    else:
        raise ValueError(f"unsupported reference {reference}")

    medians: dict[str, np.ndarray] = {}
    rankings: dict[str, FeatureRanking] = {}
    runs = [(v.name, model, v) for v in candidates]
    if rf_model is not None:
        runs.append(("RF", rf_model, Variant.LABEL))
    for name, m, variant in runs:
        _, dist = explain_batch(m, dataset, variant, threads)
        medians[name] = dist.medians
        rankings[name] = fc_median_ranking(dist)

    inter = []
    for k in sorted(k_set):
        for name in rankings:
            inter.append((k, name, intersection_size(ref, rankings[name], k)))

    fi_scores = fi.scores_by_feature() if fi is not None else {}
    iv_scores = iv.scores_by_feature() if iv is not None else {}
    table = []
    for j, feat in enumerate(catalog.names):
        row = {"feature": feat, "fi": fi_scores.get(feat), "iv": iv_scores.get(feat)}
        for name in rankings:
            row[f"fc_median_{name.lower()}"] = float(medians[name][j])
        table.append(row)
    all_rankings = dict(rankings)
    if fi is not None:
        all_rankings["GAIN_FI"] = fi
    if iv is not None:
        all_rankings["IV"] = iv
    return ConsistencyReport(ref, all_rankings, tuple(inter), tuple(table))

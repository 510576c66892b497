"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line at the end of the run."""

import csv
import io
import time

import numpy as np
import pytest

from treecontrib.annotate import Variant, annotate
from treecontrib.cli import main
from treecontrib.contrib import explain_batch, explain_instance
from treecontrib.ensemble import EnsembleKind, predict
from treecontrib.ingest import (
    Dataset,
    dump_csv,
    parse_native,
    parse_pmml,
    serialize_native,
    serialize_pmml,
)
from treecontrib.metrics import fc_median_ranking, gain_feature_importance, iv_ranking, rank_correlation
from treecontrib.reference import TrainConfig, fit_gbdt, make_planted_dataset

from conftest import ACCEPTANCE_RESULTS, WORKED_INSTANCE
from oracles import holds, oracle_explain, path_conjunctions, random_ensemble, random_rows

PLANTED_CONFIG = TrainConfig(max_depth=3, n_trees=20, shrinkage=0.3, min_samples_leaf=5)


def record(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS.append((name, bool(ok), detail))
    assert ok, f"{name}: {detail}"


def test_c1_worked_example(worked_ensemble, worked_data):
    start = time.perf_counter()
    model = annotate(worked_ensemble, worked_data)
    ann = model.annotations[0]
    fc = dict(zip(worked_ensemble.catalog.names, explain_instance(model, WORKED_INSTANCE, Variant.WEIGHTED).values))
    fc_simple = dict(zip(worked_ensemble.catalog.names, explain_instance(model, WORKED_INSTANCE, Variant.SIMPLE).values))
    elapsed = time.perf_counter() - start
    checks = [
        abs(ann[6].bp_score_simple - 0.0770) <= 1e-4,
        abs(ann[11].li_simple - 0.0079) <= 2e-4,
    ]
    for values in (fc, fc_simple):
        checks += [
            abs(values["feat5"] - (-0.0201)) <= 1e-4,
            abs(values["feat2"] - (-0.0073)) <= 1e-4,
            abs(values["feat4"] - (-0.0005)) <= 1e-4,
        ]
    detail = (
        f"S(n6)={ann[6].bp_score_simple:.4f} LI(n11)={ann[11].li_simple:.4f} "
        f"FC feat5={fc['feat5']:.4f} feat2={fc['feat2']:.4f} feat4={fc['feat4']:.4f} in {elapsed:.3f}s"
    )
    record("C1 worked example", all(checks) and elapsed < 1.0, detail)


def test_c2_local_accuracy():
    start = time.perf_counter()
    ds, _ = make_planted_dataset(n_rows=2000, n_features=20, n_informative=5, seed=1)
    ens, _ = fit_gbdt(ds, TrainConfig(max_depth=4, n_trees=20, shrinkage=0.3))
    model = annotate(ens, ds)
    worst = 0.0
    for variant in (Variant.SIMPLE, Variant.WEIGHTED):
        vectors, _ = explain_batch(model, ds, variant)
        for row, v in zip(ds.rows, vectors):
            worst = max(worst, abs(v.baseline + float(np.sum(v.values)) - predict(ens, row)))
    elapsed = time.perf_counter() - start
    record("C2 local accuracy", worst <= 1e-9 and elapsed < 10.0,
           f"max |baseline + sum FC - predict| = {worst:.2e} over 2x2000 rows in {elapsed:.2f}s")


def test_c3_ls_special_case():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(500, 5))
    y = X[:, 0] - 2 * (X[:, 1] > 0.3) + np.sin(3 * X[:, 2]) + 0.2 * rng.normal(size=500)
    ds = Dataset.from_arrays(X, y)
    ens, trace = fit_gbdt(ds, TrainConfig(max_depth=3, n_trees=10, shrinkage=1.0))
    model = annotate(ens, ds, tree_targets=trace.residuals)
    node_err = 0.0
    for tree, ann, r in zip(ens.trees, model.annotations, trace.residuals):
        for nid, preds in path_conjunctions(tree).items():
            members = [i for i, row in enumerate(X) if all(holds(p, row) for p in preds)]
            if members:
                node_err = max(node_err, abs(ann[nid].bp_score_weighted - float(np.mean(r[members]))))
    fc_err = 0.0
    for row in ds.rows:
        w = explain_instance(model, row, Variant.WEIGHTED).values
        lab = explain_instance(model, row, Variant.LABEL).values
        fc_err = max(fc_err, float(np.max(np.abs(w - lab))))
    record("C3 LS special case", node_err <= 1e-9 and fc_err <= 1e-9,
           f"max node |S_w - mean residual| = {node_err:.2e}; max |FC_w - FC_label| = {fc_err:.2e}")


def _effective_scores(tree, ann, variant):
    """Node scores with empty-node label means inherited from the parent."""
    out, parents = {}, tree.parents()
    for nid in tree.preorder():
        s = ann[nid].score(variant)
        out[nid] = s if s is not None else out[parents[nid]]
    return out


def test_c4_telescoping():
    rng = np.random.default_rng(404)
    worst, count_ok, edges = 0.0, True, 0
    for _ in range(1000):
        ens = random_ensemble(rng, n_features=3, n_trees=1, max_depth=int(rng.integers(1, 7)))
        n_rows = int(rng.integers(1, 40))
        labels = rng.integers(0, 2, n_rows).astype(float)
        model = annotate(ens, Dataset(ens.catalog, random_rows(rng, n_rows, 3), labels.tolist()))
        tree, ann = ens.trees[0], model.annotations[0]
        for nid, node in tree.nodes.items():
            if node.children and ann[nid].count != sum(ann[c].count for c in node.children):
                count_ok = False
        parents = tree.parents()
        for variant in (Variant.SIMPLE, Variant.WEIGHTED, Variant.LABEL):
            eff = _effective_scores(tree, ann, variant)
            for leaf in (n for n, node in tree.nodes.items() if node.is_leaf):
                path = [leaf]
                while path[-1] != tree.root_id:
                    path.append(parents[path[-1]])
                increments = [ann[n].increment(variant) for n in path[:-1]]
                total = sum(increments)
                n_edges = max(1, len(increments))
                edges += len(increments)
                worst = max(worst, abs(total - (eff[leaf] - eff[tree.root_id])) / n_edges)
    record("C4 telescoping", worst <= 1e-12 and count_ok,
           f"1000 trees, {edges} path edges; max per-edge deviation {worst:.2e}; counts conserved={count_ok}")


def test_c5_oracle_equivalence():
    rng = np.random.default_rng(505)
    mismatches = instances = 0
    for e in range(25):
        kind = EnsembleKind.RF_AVERAGE if e % 5 == 4 else EnsembleKind.GBDT_SUM
        ens = random_ensemble(rng, n_features=4, n_trees=int(rng.integers(1, 6)), max_depth=int(rng.integers(1, 5)),
                              kind=kind, random_weights=kind is EnsembleKind.GBDT_SUM)
        data = Dataset(ens.catalog, random_rows(rng, 50, 4), rng.integers(0, 2, 50).astype(float).tolist())
        model = annotate(ens, data)
        for row in random_rows(rng, 20, 4):
            instances += 1
            for variant in (Variant.SIMPLE, Variant.WEIGHTED, Variant.LABEL):
                fc = explain_instance(model, row, variant)
                values, base = oracle_explain(model, row, variant)
                if not (np.array_equal(fc.values, values) and fc.baseline == base):
                    mismatches += 1
    record("C5 oracle equivalence", mismatches == 0 and instances == 500,
           f"{instances} instances x 3 variants, {mismatches} bitwise mismatches")


@pytest.fixture(scope="module")
def planted_runs():
    """Per seed: planted recall and rank statistics for WEIGHTED and SIMPLE rankings."""
    start = time.perf_counter()
    runs = []
    for seed in range(20):
        ds, informative = make_planted_dataset(seed=seed)
        planted = {ds.catalog.names[j] for j in informative}
        ens, _ = fit_gbdt(ds, PLANTED_CONFIG)
        model = annotate(ens, ds)
        fi = gain_feature_importance(model)
        iv_top = set(iv_ranking(ds).top(10))
        out = {}
        for variant in (Variant.WEIGHTED, Variant.SIMPLE):
            ranking = fc_median_ranking(explain_batch(model, ds, variant)[1])
            top = set(ranking.top(10))
            out[variant] = (len(top & planted), rank_correlation(fi, ranking), len(top & iv_top))
        runs.append(out)
    return runs, time.perf_counter() - start


def test_c6_consistency(planted_runs):
    runs, elapsed = planted_runs
    passes = sum(1 for r in runs if r[Variant.WEIGHTED][1] > 0 and r[Variant.WEIGHTED][0] >= 6)
    recalls = [r[Variant.WEIGHTED][0] for r in runs]
    rhos = [r[Variant.WEIGHTED][1] for r in runs]
    record("C6 FI vs FC-median consistency", passes >= 16 and elapsed < 120.0,
           f"{passes}/20 seeds pass; planted in top-10 min={min(recalls)}; "
           f"spearman min={min(rhos):.3f}; {elapsed:.1f}s")


def test_weighted_recall_not_below_simple(planted_runs):
    runs, _ = planted_runs
    wins = sum(1 for r in runs if r[Variant.WEIGHTED][0] >= r[Variant.SIMPLE][0])
    iv_wins = sum(1 for r in runs if r[Variant.WEIGHTED][2] >= r[Variant.SIMPLE][2])
    assert wins >= 11, f"WEIGHTED planted recall >= SIMPLE in only {wins}/20 seeds"
    assert iv_wins >= 11, f"WEIGHTED IV top-10 overlap >= SIMPLE in only {iv_wins}/20 seeds"


def test_c7_comparison_report(tmp_path):
    ds, _ = make_planted_dataset(n_rows=1500, seed=7)
    data = tmp_path / "train.csv"
    data.write_text(dump_csv(ds.catalog, ds.rows, ds.labels, "y"))
    steps = [
        ["train", data, "--model", "gbdt", "--trees", 10, "--depth", 3, "--shrinkage", 0.3, "-o", tmp_path / "g.json"],
        ["train", data, "--model", "rf", "--trees", 10, "--depth", 4, "--feature-fraction", 0.3, "-o", tmp_path / "r.json"],
        ["annotate", tmp_path / "g.json", data, "-o", tmp_path / "ga.json"],
        ["annotate", tmp_path / "r.json", data, "-o", tmp_path / "ra.json"],
        ["report", tmp_path / "ga.json", data, "--rf-model", tmp_path / "ra.json", "--reference", "iv",
         "--out-dir", tmp_path],
    ]
    codes = [main([str(a) for a in argv]) for argv in steps]
    sizes: dict[str, list[tuple[int, int]]] = {}
    if (tmp_path / "intersections.csv").exists():
        for row in csv.DictReader(io.StringIO((tmp_path / "intersections.csv").read_text())):
            sizes.setdefault(row["candidate"], []).append((int(row["k"]), int(row["size"])))
    bounded = all(0 <= s <= k for pairs in sizes.values() for k, s in pairs)
    monotone = all(
        [s for _, s in sorted(pairs)] == sorted(s for _, s in pairs) for pairs in sizes.values()
    )
    complete = set(sizes) == {"RF", "SIMPLE", "WEIGHTED"} and all(
        [k for k, _ in sorted(p)] == [10, 20, 30, 40, 50] for p in sizes.values()
    )
    summary = " ".join(f"{name}=" + "/".join(str(s) for _, s in sorted(p)) for name, p in sorted(sizes.items()))
    record("C7 comparison report", codes == [0] * 5 and complete and bounded and monotone,
           f"exit codes {codes}; sizes at k=10..50: {summary}")


def test_c8_round_trips(worked_pmml):
    rng = np.random.default_rng(808)
    ds, _ = make_planted_dataset(n_rows=400, n_features=10, n_informative=3, seed=8)
    trained, _ = fit_gbdt(ds, TrainConfig(max_depth=4, n_trees=8, shrinkage=0.37))
    mismatches = 0
    for original in (parse_pmml(worked_pmml), parse_pmml(serialize_pmml(trained))):
        native = parse_native(serialize_native(original)).ensemble
        back = parse_pmml(serialize_pmml(native))
        width = len(original.catalog)
        samples = rng.uniform(-1.0, 12.0, size=(1000, width))
        # Reuse split thresholds so boundary values are exercised.
        thresholds = [n.predicate.threshold for t in original.trees for n in t.nodes.values() if n.predicate]
        mask = rng.random(samples.shape) < 0.2
        samples[mask] = rng.choice(thresholds, size=int(mask.sum()))
        for row in samples:
            row = tuple(float(v) for v in row)
            if not predict(original, row) == predict(native, row) == predict(back, row):
                mismatches += 1
    annotated = annotate(trained, ds)
    text = serialize_native(annotated)
    stable = serialize_native(parse_native(text)) == text
    record("C8 format round trips", mismatches == 0 and stable,
           f"2x1000 instances, {mismatches} prediction mismatches; native byte-stable={stable}")

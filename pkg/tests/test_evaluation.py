import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blotforensics.augment import PostProcessSpec
from blotforensics.detectors import DetectorConfig, IsolationForestDetector
from blotforensics.evaluation import (CrossValidator, FeatureStore, auc, balanced_accuracy,
                                      ingest_external_scores, robustness_grid, roc_points,
                                      run_crossval, single_feature_table, write_roc_csv)
from oracles import pairwise_auc, trapezoid_auc

scores = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=40)


@settings(max_examples=80, deadline=None)
@given(scores, scores)
def test_auc_matches_pairwise_count(r, s):
    assert auc(r, s) == pytest.approx(pairwise_auc(r, s), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(scores, scores)
def test_roc_area_matches_auc(r, s):
    assert trapezoid_auc(roc_points(r, s)) == pytest.approx(auc(r, s), abs=1e-12)


def test_auc_edge_cases():
    assert auc([2, 3], [0, 1]) == 1.0
    assert auc([0, 1], [2, 3]) == 0.0
    assert auc([1, 1, 1], [1, 1]) == 0.5
    with pytest.raises(ValueError):
        auc([], [1.0])


def test_balanced_accuracy_threshold_and_ties():
    assert balanced_accuracy([1, -1], [-1, -1]) == 0.75
    assert balanced_accuracy([0.0], [0.0]) == 0.5  # a zero score counts as synthetic
    assert balanced_accuracy([1, 2], [-1, -2]) == 1.0
    assert balanced_accuracy([1, 2], [1.5, 3], threshold=1.5) == 0.5


def test_roc_points_shape(tmp_path):
    pts = roc_points([3, 2, 1], [0, 2])
    assert pts[0].tolist() == [-np.inf, 0.0, 0.0]
    assert pts[-1, 1] == 1.0 and pts[-1, 2] == 1.0
    assert np.all(np.diff(pts[:, 1]) >= 0) and np.all(np.diff(pts[:, 2]) >= 0)
    write_roc_csv(pts, tmp_path / "roc.csv")
    assert (tmp_path / "roc.csv").read_text().startswith("threshold,fpr,tpr")


def test_crossval_on_smoke(smoke_manifest):
    cv = CrossValidator(smoke_manifest, DetectorConfig("iforest", {"n_trees": 50}), seed=0)
    reports = cv.run(["f_e_d4_H"])
    assert set(reports) == {"pix2pix", "cyclegan", "sg2ada", "ddpm"}
    rep = reports["pix2pix"]
    assert len(rep.folds) == 2
    assert rep.n_real == 20 and rep.n_synthetic == 20
    assert rep.auc == pytest.approx(np.mean([f.auc for f in rep.folds]))
    for f in rep.folds:
        assert f.n_train + f.n_real_test == 20
    assert rep.detector == {"name": "iforest", "params": {"n_trees": 50}}
    assert '"generator": "pix2pix"' in rep.to_json()


def test_models_train_on_other_fold_only(smoke_manifest):
    seen = []

    class Spy(IsolationForestDetector):
        def fit(self, X, y=None):
            seen.append(X.copy())
            return super().fit(X, y)

    cv = CrossValidator(smoke_manifest, lambda seed: Spy(n_trees=5, seed=seed), seed=1)
    cv.run(["f_c_d4_H"])
    store = cv.store.get()
    col = store[:, 0]
    for fold, X in enumerate(seen):
        train_ids = {r.id for r in smoke_manifest.real()
                     if cv.folds.fold_of(r.source_image_id) != fold}
        want = sorted(col[[cv.store.row[i] for i in train_ids]])
        assert sorted(X[:, 0]) == want
    # cached: a second run fits nothing new
    cv.run(["f_c_d4_H"])
    assert len(seen) == 2


def test_pooled_and_seed_reproducibility(smoke_manifest):
    store = FeatureStore(smoke_manifest)
    cfg = DetectorConfig("iforest", {"n_trees": 30})
    a = run_crossval(smoke_manifest, "f_h_d8_V", cfg, seed=2, store=store)
    b = run_crossval(smoke_manifest, "f_h_d8_V", cfg, seed=2, store=store)
    assert {g: r.auc for g, r in a.items()} == {g: r.auc for g, r in b.items()}
    pooled = run_crossval(smoke_manifest, "f_h_d8_V", cfg, seed=2, store=store, pooled=True)
    assert all(r.pooled for r in pooled.values())


def test_feature_store_cache_and_put(smoke_manifest):
    store = FeatureStore(smoke_manifest)
    v = store.get()
    assert v.shape == (len(smoke_manifest), 40)
    assert store.get() is v
    spec = PostProcessSpec("jpeg", 90)
    store.put(spec, np.zeros_like(v))
    assert np.all(store.get(spec) == 0)
    with pytest.raises(ValueError):
        store.put(spec, np.zeros((2, 40)))


def test_single_feature_table_and_grid_shape(smoke_manifest):
    cv = CrossValidator(smoke_manifest, DetectorConfig("iforest", {"n_trees": 20}))
    table = single_feature_table(cv, ["f_e_d4_H", "f_rho_d4_H"])
    assert set(table["ddpm"]) == {"f_e_d4_H", "f_rho_d4_H"}
    grid = robustness_grid(cv, [PostProcessSpec("jpeg", 100)], ["f_e_d4_H"])
    assert [c.key for c in grid.conditions] == ["none", "jpeg:100"]
    assert grid.is_complete()
    text = grid.to_text("clean")
    assert "JPEG-100" in text and "ddpm" in text
    with pytest.raises(ValueError):
        robustness_grid(cv, [], ["f_e_d4_H"], regimes=["mixed"])


def test_ingest_external_scores(smoke_manifest, tmp_path):
    # logits: positive means synthetic
    rows = ["id,logit"]
    for r in smoke_manifest.real():
        rows.append(f"{r.id},-2.0")
    for r in smoke_manifest.synthetic("ddpm"):
        rows.append(f"{r.id},3.0")
    p = tmp_path / "s.csv"
    p.write_text("\n".join(rows) + "\n")
    reports = ingest_external_scores(p, smoke_manifest)
    assert set(reports) == {"ddpm"}
    assert reports["ddpm"].auc == 1.0 and reports["ddpm"].balanced_accuracy == 1.0
    with pytest.raises(ValueError, match="not in manifest"):
        ingest_external_scores({"ghost": 1.0}, smoke_manifest)

import numpy as np
import pytest

from blotforensics.analysis import (BEST_K, average_cooccurrence, combination_search, fit_pca,
                                    pca_projection, rank_features, save_heatmap)
from blotforensics.detectors import DetectorConfig
from blotforensics.evaluation import CrossValidator


def test_average_cooccurrence_is_distribution():
    img = np.random.default_rng(0).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    m = average_cooccurrence(img)
    assert m.shape == (256, 256)
    assert m.sum() == pytest.approx(1.0)


def test_pca_matches_svd():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 500)) @ np.diag(np.linspace(3, 0.1, 500))
    pca = fit_pca(X, 5)
    _, s, vt = np.linalg.svd(X - X.mean(0), full_matrices=False)
    for got, want in zip(pca.components, vt[:5]):
        assert abs(got @ want) == pytest.approx(1.0, abs=1e-8)
    np.testing.assert_allclose(pca.explained_variance, s[:5] ** 2 / 29, rtol=1e-8)
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(5), atol=1e-10)


def test_pca_basis_completion_beyond_rank():
    X = np.zeros((6, 20))
    X[:, 0] = np.arange(6)
    pca = fit_pca(X, 4)
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(4), atol=1e-12)
    assert pca.explained_variance[1:].tolist() == [0, 0, 0]
    with pytest.raises(ValueError):
        fit_pca(X, 7)


def test_pca_projection_order():
    rng = np.random.default_rng(2)
    real, synth = rng.normal(size=(10, 8)), rng.normal(size=(4, 8)) + 5
    pca = pca_projection(real, synth, 2)
    assert pca.projections.shape == (14, 2)
    np.testing.assert_allclose(pca.projections[:10], pca.transform(real))


def test_heatmap(tmp_path):
    save_heatmap(np.arange(6.0).reshape(2, 3), tmp_path / "h.png", cell=4)
    from PIL import Image
    assert Image.open(tmp_path / "h.png").size == (12, 8)


def test_rank_features_ties_by_name():
    table = {"g": {"f_c_d4_H": 0.9, "f_e_d4_H": 0.9, "f_h_d4_H": 0.95, "f_e_d8_H": 0.5}}
    r = rank_features(table, top=3)
    assert r.best["g"] == ["f_h_d4_H", "f_c_d4_H", "f_e_d4_H"]
    assert r.best_per_metric["g"]["f_e"] == ("f_e_d4_H", 0.9)
    assert BEST_K == 8


def test_combination_counts(smoke_manifest):
    cv = CrossValidator(smoke_manifest, DetectorConfig("iforest", {"n_trees": 5}))
    best = {"ddpm": ["f_c_d4_H", "f_d_d4_H", "f_e_d4_H", "f_h_d4_H", "f_rho_d4_H"]}
    out = combination_search(cv, best, sizes=(2, 3))
    assert out["ddpm"][2].n_evaluated == 10
    assert out["ddpm"][3].n_evaluated == 10
    assert len(out["ddpm"][2].best_auc_subset) == 2
    with pytest.raises(ValueError):
        combination_search(cv, best, sizes=(6,))

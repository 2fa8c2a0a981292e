import math

import numpy as np
import pytest

from anvil.baselines import (DEGENERATE_DISTANCE, EUCLIDEAN, PEARSON, AdTrainConfig, KnnConfig,
                             adjacent_rps, adtrain_train, distances, ffdnn_predict, knn_fit,
                             knn_predict, pearson, pearson_matrix)
from anvil.errors import ConfigError, DegenerateInputError
from anvil.fingerprint import ApRegistry, FingerprintDatabase
from anvil.nn import OptimizerConfig
from anvil.radio_sim import DeviceProfile, PathLossParams, generate_dataset, make_floorplan

from helpers import random_db, separable_six


def test_pearson_self_and_anti():
    a = np.array([0.1, 0.5, 0.2, 0.9])
    assert pearson(a, a) == pytest.approx(1.0, abs=1e-15)
    assert pearson(a, -a + 3.0) == pytest.approx(-1.0, abs=1e-15)


def test_pearson_small_oracle():
    # deviations [-1, 0, 1] and [-4/3, -1/3, 5/3]: cross sum 3, squared sums 2 and 14/3
    expected = 3 / math.sqrt(2 * 14 / 3)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(expected, abs=1e-15)
    assert pearson([1, 2, 3], [1, 2, 4]) == pytest.approx(0.98198050606196571570, abs=1e-15)


def test_pearson_degenerate():
    with pytest.raises(DegenerateInputError):
        pearson([0.3, 0.3, 0.3], [0.1, 0.2, 0.3])
    d = distances(np.array([[0.5, 0.5, 0.5]]), np.array([[0.1, 0.2, 0.3]]), PEARSON)
    assert d[0, 0] == DEGENERATE_DISTANCE


def test_pearson_matrix_matches_scalar(rng):
    Q, K = rng.random((4, 9)), rng.random((6, 9))
    r = pearson_matrix(Q, K)
    for i in range(4):
        for j in range(6):
            assert r[i, j] == pytest.approx(pearson(Q[i], K[j]), abs=1e-14)


def test_euclidean_distances(rng):
    Q, K = rng.random((5, 7)), rng.random((8, 7))
    ref = np.sqrt(((Q[:, None, :] - K[None, :, :]) ** 2).sum(axis=2))
    assert np.allclose(distances(Q, K, EUCLIDEAN), ref, atol=1e-12)


def test_k1_exact_match_both_metrics(rng):
    db = random_db(rng, n_rp=8, per_rp=1, d_ap=12)
    for metric in (EUCLIDEAN, PEARSON):
        for i in range(len(db)):
            rp, xy = knn_predict(db, db.X[i], KnnConfig(k=1, metric=metric))
            assert rp == db.rp_ids[i] and xy == tuple(db.coords[i])


def test_k2_midpoint():
    reg = ApRegistry(("a", "b", "c"))
    X = np.array([[0.5, 0.2, 0.0], [0.5, 0.3, 0.0], [0.0, 0.0, 0.9]])
    db = FingerprintDatabase(reg, X, [0, 1, 2], ("d",) * 3, [[0, 0], [0, 2], [9, 9]])
    rp, xy = knn_predict(db, np.array([0.5, 0.25, 0.0]), KnnConfig(k=2))
    assert xy == (0.0, 1.0)
    assert rp == 0          # (0,1) is equidistant from RPs 0 and 1; lowest id wins


def test_pearson_prediction_affine_invariant(rng):
    db = random_db(rng, n_rp=20, per_rp=3, d_ap=15)
    model = knn_fit(db, KnnConfig(metric=PEARSON))
    Q = rng.random((100, 15))
    rp_a, xy_a = model.predict_many(Q)
    rp_b, xy_b = model.predict_many(0.8 * Q + 0.05)
    assert np.array_equal(rp_a, rp_b) and np.array_equal(xy_a, xy_b)


def test_euclidean_sensitive_to_offset(rng):
    db = random_db(rng, n_rp=10, per_rp=1, d_ap=15)
    q = db.X[0]
    shifted = np.where(q > 0, q + 0.06, q)
    d0 = distances(q, db.X, EUCLIDEAN)
    d1 = distances(shifted, db.X, EUCLIDEAN)
    assert np.all(d1 != d0)
    p0 = distances(q, db.X, PEARSON)
    p1 = distances(q + 0.06, db.X, PEARSON)
    assert np.max(np.abs(p1 - p0)) < 1e-12


def test_knn_config_validation():
    with pytest.raises(ConfigError):
        KnnConfig(k=0)
    with pytest.raises(ConfigError):
        KnnConfig(metric="cosine")


def test_adjacent_rps():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 1.0]])
    adj = adjacent_rps(coords)
    assert [a.tolist() for a in adj] == [[1], [0, 2], [1, 3], [2]]


QUICK = OptimizerConfig(epochs=8, batch_size=16)


def test_adtrain_deterministic(rng):
    db = random_db(rng, n_rp=6, per_rp=4, d_ap=10)
    cfg = AdTrainConfig(dense=(16,), optimizer=QUICK)
    a, ha = adtrain_train(db, cfg, 3)
    b, hb = adtrain_train(db, cfg, 3)
    assert ha == hb and all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_zero_noise_adtrain_is_plain_ffdnn(rng):
    db = random_db(rng, n_rp=6, per_rp=4, d_ap=10)
    a, ha = adtrain_train(db, AdTrainConfig(dense=(16,), input_noise_sigma=0.0, label_noise_p=0.0,
                                            optimizer=QUICK), 2)
    b, hb = adtrain_train(db, AdTrainConfig.plain(dense=(16,), optimizer=QUICK), 2)
    assert ha == hb and all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_ffdnn_probabilities_and_ties(rng):
    db = random_db(rng, n_rp=6, per_rp=2, d_ap=10)
    m, _ = adtrain_train(db, AdTrainConfig(dense=(8,), optimizer=OptimizerConfig(epochs=2)), 0)
    p = m.probabilities(rng.random((20, 10)))
    assert np.max(np.abs(p.sum(axis=1) - 1)) < 1e-12
    last = max(k for k in m.params if k.startswith("dense.W"))
    m.params[last][:] = 0.0
    m.params[last.replace("W", "b")][:] = 0.0
    assert ffdnn_predict(m, db.X[5])[0] == 0


def test_adtrain_accuracy_on_homogeneous_set():
    spec = make_floorplan("h20", 20, 40, seed=3)
    db = generate_dataset(spec, PathLossParams(shadow_sigma_db=0.0),
                          [DeviceProfile.identity("ref")], 8, 0)["ref"]
    # Bounds pinned from pilot runs (seeds 0 to 2 peaked at 0.60 to 0.70).
    model, (losses, accs) = adtrain_train(db, AdTrainConfig(optimizer=OptimizerConfig(epochs=300)), 0)
    assert len(losses) <= 300
    assert max(accs) >= 0.55
    rp, _ = model.predict_many(db.X)
    assert np.mean(rp == db.rp_ids) >= 0.3


def test_trained_adtrain_returns_own_rp_for_training_queries():
    db = separable_six()
    opt = OptimizerConfig(epochs=300, batch_size=8, patience=300)
    model, _ = adtrain_train(db, AdTrainConfig(optimizer=opt), 0)
    assert np.array_equal(model.predict_many(db.X)[0], db.rp_ids)

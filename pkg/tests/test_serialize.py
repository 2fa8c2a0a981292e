import json

import numpy as np
import pytest

from anvil.attention import AnvilConfig, predict_many, train
from anvil.baselines import AdTrainConfig, KnnConfig, adtrain_train, knn_fit
from anvil.errors import DataError, SchemaError
from anvil.fingerprint import save_database, split_indices
from anvil.nn import OptimizerConfig
from anvil.serialize import load_model, save_model

from helpers import random_db

SHORT = OptimizerConfig(epochs=3, batch_size=8)


def test_anvil_roundtrip(tmp_path, rng):
    db = random_db(rng, n_rp=4, per_rp=3, d_ap=6)
    m, _ = train(db, AnvilConfig(nh=2, hs=3, dense=(5,), optimizer=SHORT), 0)
    path = save_model(m, tmp_path / "m.json")
    back = load_model(path)
    assert back.config == m.config
    assert all(np.array_equal(back.params[k], m.params[k]) for k in m.params)
    assert np.array_equal(back.keys, m.keys) and np.array_equal(back.values, m.values)
    Q = rng.random((5, 6))
    assert np.array_equal(predict_many(back, Q)[1], predict_many(m, Q)[1])
    assert save_model(back, tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_float32_anvil_roundtrip(tmp_path, rng):
    db = random_db(rng, n_rp=4, per_rp=3, d_ap=6)
    m, _ = train(db, AnvilConfig(nh=2, hs=3, dense=(5,), optimizer=SHORT, dtype="float32"), 0)
    back = load_model(save_model(m, tmp_path / "m.json"))
    assert back.params["mh.Wo"].dtype == np.float32
    assert all(np.array_equal(back.params[k], m.params[k]) for k in m.params)


def test_ffdnn_roundtrip(tmp_path, rng):
    db = random_db(rng, n_rp=4, per_rp=3, d_ap=6)
    m, _ = adtrain_train(db, AdTrainConfig(dense=(5,), optimizer=SHORT), 0)
    back = load_model(save_model(m, tmp_path / "f.json"))
    Q = rng.random((5, 6))
    assert np.array_equal(back.probabilities(Q), m.probabilities(Q))


def test_knn_is_stored_as_data_reference(tmp_path, rng):
    db = random_db(rng, n_rp=4, per_rp=5, d_ap=6)
    csv = save_database(db, tmp_path / "d.csv")
    rows, _ = split_indices(db, 3, 2, 0)
    m = knn_fit(db.subset(rows), KnnConfig(k=2))
    with pytest.raises(DataError):
        save_model(m, tmp_path / "k.json")
    path = save_model(m, tmp_path / "k.json", data_ref=(csv, rows))
    doc = json.loads(path.read_text())
    assert doc["framework"] == "knn" and "tensors" not in doc
    back = load_model(path)
    Q = rng.random((4, 6))
    assert np.array_equal(back.predict_many(Q)[1], m.predict_many(Q)[1])


def test_rejects_foreign_or_tampered_files(tmp_path, rng):
    bad = tmp_path / "x.json"
    bad.write_text('{"hello": 1}')
    with pytest.raises(SchemaError):
        load_model(bad)
    db = random_db(rng, n_rp=3, per_rp=2, d_ap=4)
    m, _ = adtrain_train(db, AdTrainConfig(dense=(3,), optimizer=SHORT), 0)
    path = save_model(m, tmp_path / "f.json")
    doc = json.loads(path.read_text())
    doc["registry"]["ap_ids"][0] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_model(path)
    with pytest.raises(DataError):
        load_model(tmp_path / "missing.json")

import numpy as np
import pytest

from anvil import evaluation
from anvil.baselines import KnnConfig, knn_fit
from anvil.errors import CapacityError, ConfigError, DataError, SchemaError
from anvil.evaluation import (ABLATION_FRAMEWORKS, EvalConfig, Framework, ablate_fast,
                              cross_device_matrix, emit_report, evaluate_pair, localization_error,
                              make_framework, read_matrix_csv)
from anvil.fast import FastConfig
from anvil.fingerprint import ApRegistry, FingerprintDatabase
from anvil.nn import OptimizerConfig
from anvil.radio_sim import DeviceProfile, PathLossParams, generate_dataset, make_floorplan

from helpers import random_db

TINY = EvalConfig.from_dict({
    "anvil": {"nh": 2, "hs": 4, "dense": [8], "optimizer": {"epochs": 3, "batch_size": 16}},
    "adtrain": {"dense": [8], "optimizer": {"epochs": 3, "batch_size": 16}},
})
QUIET = PathLossParams(shadow_sigma_db=0.0)


def test_localization_error():
    assert localization_error((0, 0), (3, 4)) == 5.0
    assert localization_error((1.5, 2.0), (1.5, 2.0)) == 0.0
    a, b = (0.3, -2.0), (7.1, 4.4)
    assert localization_error(a, b) == localization_error(b, a)


def noiseless_pair(n_rp=10, n_ap=15):
    spec = make_floorplan("nl", n_rp, n_ap, seed=1)
    dbs = generate_dataset(spec, QUIET, [DeviceProfile.identity("A"), DeviceProfile.identity("B")], 10, 0)
    return evaluation.split_devices(dbs, 8, 2, 0)


def noisy_pair():
    spec = make_floorplan("ny", 10, 15, seed=1)
    profiles = [DeviceProfile("A", noise_sigma_db=1.0), DeviceProfile("B", offset_db=-4, noise_sigma_db=2.0)]
    return evaluation.split_devices(generate_dataset(spec, PathLossParams(), profiles, 10, 0), 8, 2, 0)


def test_k1_noiseless_same_device_is_exact():
    ds = noiseless_pair()
    fw = Framework("k1", lambda db, seed: knn_fit(db, KnnConfig(k=1)))
    res = evaluate_pair(fw, ds["A"][0], ds["A"][1])
    assert res.mean_m == 0.0 and res.std_m == 0.0


def test_identity_pair_equals_same_device_cell():
    ds = noiseless_pair()
    fw = make_framework("knn-euclid")
    cross = evaluate_pair(fw, ds["A"][0], ds["B"][1])
    same = evaluate_pair(fw, ds["B"][0], ds["B"][1])
    assert cross == same


def test_empty_test_set_rejected(rng):
    db = random_db(rng)
    with pytest.raises(CapacityError):
        evaluate_pair(make_framework("knn-euclid"), db, db.subset([]))


def test_registry_mismatch_rejected(rng):
    a = random_db(rng)
    b = a.realign(ApRegistry(tuple(reversed(a.registry.ap_ids))))
    with pytest.raises(SchemaError):
        evaluate_pair(make_framework("knn-euclid"), a, b)


def test_unknown_framework():
    with pytest.raises(ConfigError):
        make_framework("sae")


def test_nofast_differs_only_in_probabilities():
    cfg = EvalConfig()
    nofast = cfg.anvil.fast.without_fast()
    assert (nofast.p_dropout, nofast.p_brightness, nofast.p_contrast) == (0, 0, 0)
    assert nofast.noise_sigma == cfg.anvil.fast.noise_sigma
    assert nofast.contrast_range == cfg.anvil.fast.contrast_range


def test_matrix_cardinality_and_determinism():
    ds = noiseless_pair()
    m1 = cross_device_matrix(["knn-euclid", "anvil"], ds, seed=3, cfg=TINY)
    m2 = cross_device_matrix(["knn-euclid", "anvil"], ds, seed=3, cfg=TINY)
    assert len(m1.cells) == 2 * 2 * 2
    assert all(c.mean_m >= 0 and c.std_m >= 0 for c in m1.cells.values())
    assert evaluation.matrix_csv(m1) == evaluation.matrix_csv(m2)


def test_matrix_needs_two_devices(rng):
    db = random_db(rng)
    with pytest.raises(DataError):
        cross_device_matrix(["knn-euclid"], {"A": (db, db)})


def test_one_training_per_offline_device():
    ds = noiseless_pair()
    calls = []

    def fit(db, seed):
        calls.append(db.device_ids[0])
        return knn_fit(db)

    cross_device_matrix([Framework("count", fit)], ds, seed=0)
    assert sorted(calls) == ["A", "B"]


def test_heterogeneity_hurts_euclidean_knn():
    spec = make_floorplan("het", 20, 40, seed=0)
    profiles = [DeviceProfile("base", noise_sigma_db=1.0),
                DeviceProfile("hot", offset_db=10.0, gain=1.3, dropout_p=0.05, noise_sigma_db=1.0)]
    ds = evaluation.split_devices(generate_dataset(spec, PathLossParams(), profiles, 10, 0), 8, 2, 0)
    m = cross_device_matrix(["knn-euclid"], ds, seed=0)
    assert m.cross_device_mean("knn-euclid") > m.same_device_mean("knn-euclid")


def test_summary_two_pass_stats():
    ds = noiseless_pair()
    m = cross_device_matrix(["knn-euclid"], ds, seed=0)
    row = m.summary().rows[0]
    vals = m.means("knn-euclid").ravel()
    assert row.mean_m == pytest.approx(vals.mean()) and row.std_m == pytest.approx(vals.std())
    assert row.n_cells == 4


def test_ablation_shape():
    plans = {"p1": noiseless_pair(6, 8), "p2": noiseless_pair(5, 9)}
    summary = ablate_fast(plans, seed=0, cfg=TINY)
    assert len(summary.rows) == 4 * 2
    assert [r.framework for r in summary.rows[:4]] == list(ABLATION_FRAMEWORKS)


def test_ffdnn_fast_swaps_noise_for_fast():
    cfg = EvalConfig()
    fw = make_framework("ffdnn-fast", cfg)
    assert fw.name == "ffdnn-fast"


def test_csv_roundtrip_and_markdown(tmp_path):
    ds = noisy_pair()
    m = cross_device_matrix(["knn-euclid", "knn-pearson"], ds, seed=0)
    path = emit_report(m, tmp_path / "m.csv", "csv")
    back = read_matrix_csv(path)[0]
    assert back.devices == m.devices and back.frameworks == m.frameworks
    assert back.cells == m.cells
    assert emit_report(back, tmp_path / "again.csv", "csv").read_bytes() == path.read_bytes()
    md = emit_report(m, tmp_path / "m.md", "md").read_text()
    body_rows = [ln for ln in md.splitlines() if ln.startswith("| A") or ln.startswith("| B")]
    cells = sum(len(r.strip("|").split("|")) - 1 for r in body_rows)
    assert cells == len(m.frameworks) * len(m.devices) ** 2
    assert "(min)" in md and "(max)" in md


def test_empty_report_is_an_error(tmp_path):
    with pytest.raises(DataError):
        emit_report([], tmp_path / "x.csv")
    with pytest.raises(DataError):
        emit_report(evaluation.Summary([]), tmp_path / "y.csv")
    assert not (tmp_path / "x.csv").exists()


def test_config_parsing():
    cfg = EvalConfig.from_dict({"knn": {"k": 5}, "split": {"n_train": 7, "n_test": 3}})
    assert cfg.knn.k == 5 and (cfg.n_train, cfg.n_test) == (7, 3)
    exp = EvalConfig.from_dict({"experiment": True})
    assert exp == evaluation.experiment_config()
    with pytest.raises(ConfigError):
        EvalConfig.from_dict({"bogus": {}})
    assert EvalConfig().with_seed(4).anvil.seed == 4

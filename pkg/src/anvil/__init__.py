"""Device-invariant WiFi fingerprint localization with multi-head attention."""

from .attention import AnvilConfig, AttentionModel, count_params, count_params_formula, predict, train
from .baselines import AdTrainConfig, KnnConfig, adtrain_train, knn_fit, knn_predict, pearson
from .evaluation import EvalConfig, ablate_fast, cross_device_matrix, localization_error
from .fast import FastConfig, fast_apply
from .fingerprint import ApRegistry, Fingerprint, FingerprintDatabase, align_to_registry, normalize_rssi
from .radio_sim import DeviceProfile, PathLossParams, generate_dataset, make_floorplan

__version__ = "0.1.0"

__all__ = [
    "AdTrainConfig", "AnvilConfig", "ApRegistry", "AttentionModel", "DeviceProfile", "EvalConfig",
    "FastConfig", "Fingerprint", "FingerprintDatabase", "KnnConfig", "PathLossParams",
    "ablate_fast", "adtrain_train", "align_to_registry", "count_params", "count_params_formula",
    "cross_device_matrix", "fast_apply", "generate_dataset", "knn_fit", "knn_predict",
    "localization_error", "make_floorplan", "normalize_rssi", "pearson", "predict", "train",
]

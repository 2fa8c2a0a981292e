"""Cross-device evaluation: offline x online error matrices, summaries, FASt ablation.

Every framework is trained once per offline device and then queried with the
held-out fingerprints of every online device.  Errors are 2-D Euclidean
distances in meters between the predicted and the true RP coordinates.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import attention, baselines
from ._seeding import derive_rng
from .attention import AnvilConfig
from .baselines import AdTrainConfig, KnnConfig
from .errors import CapacityError, ConfigError, DataError, SchemaError
from .fingerprint import FingerprintDatabase, load_database, split_per_rp
from .nn import OptimizerConfig

log = logging.getLogger(__name__)

FRAMEWORKS = ("anvil", "anvil-nofast", "knn-euclid", "knn-pearson", "adtrain", "ffdnn", "ffdnn-fast")
ABLATION_FRAMEWORKS = ("anvil", "anvil-nofast", "ffdnn", "ffdnn-fast")
MATRIX_HEADER = ["floorplan", "framework", "offline_device", "online_device", "mean_m", "std_m", "n_queries"]
SUMMARY_HEADER = ["floorplan", "framework", "mean_m", "std_m", "n_cells"]


def localization_error(pred, truth) -> float:
    return float(np.hypot(pred[0] - truth[0], pred[1] - truth[1]))


def localization_errors(pred_xy, truth_xy) -> np.ndarray:
    d = np.asarray(pred_xy, dtype=float) - np.asarray(truth_xy, dtype=float)
    return np.hypot(d[:, 0], d[:, 1])


@dataclass(frozen=True)
class EvalConfig:
    """Hyper-parameters for every framework plus the per-RP split sizes."""

    anvil: AnvilConfig = field(default_factory=AnvilConfig)
    knn: KnnConfig = field(default_factory=KnnConfig)
    adtrain: AdTrainConfig = field(default_factory=AdTrainConfig)
    n_train: int = 8
    n_test: int = 2

    @classmethod
    def from_dict(cls, doc, base: "EvalConfig | None" = None) -> "EvalConfig":
        """Parse a config document; absent blocks are taken from ``base``.

        ``{"experiment": true}`` selects :func:`experiment_config` as the base.
        """
        doc = dict(doc or {})
        if doc.pop("experiment", False):
            base = experiment_config()
        base = cls() if base is None else base
        kw = {"anvil": base.anvil, "knn": base.knn, "adtrain": base.adtrain,
              "n_train": base.n_train, "n_test": base.n_test}
        if "anvil" in doc:
            kw["anvil"] = AnvilConfig.from_dict(doc.pop("anvil"))
        if "knn" in doc:
            try:
                kw["knn"] = KnnConfig(k=int(doc.pop("knn").get("k", 3)))
            except (TypeError, AttributeError) as exc:
                raise ConfigError(f"bad knn config: {exc}") from None
        if "adtrain" in doc:
            kw["adtrain"] = AdTrainConfig.from_dict(doc.pop("adtrain"))
        split = doc.pop("split", {})
        kw["n_train"] = int(split.get("n_train", kw["n_train"]))
        kw["n_test"] = int(split.get("n_test", kw["n_test"]))
        if doc:
            raise ConfigError(f"unknown config blocks: {sorted(doc)}")
        return cls(**kw)

    def with_seed(self, seed) -> "EvalConfig":
        return replace(self, anvil=replace(self.anvil, seed=seed), adtrain=replace(self.adtrain, seed=seed))


# Desk-scale training schedule used by the benchmark experiments.  The
# library defaults (300 epochs, batch 32) stay available for single runs.
EXPERIMENT_OPTIMIZER = OptimizerConfig(lr=3e-3, batch_size=128, epochs=60, patience=15)


def experiment_config() -> EvalConfig:
    """Shorter training for the 4-floorplan x 6-device suite on one CPU."""
    return EvalConfig(anvil=AnvilConfig(optimizer=EXPERIMENT_OPTIMIZER, dtype="float32"),
                      adtrain=AdTrainConfig(optimizer=EXPERIMENT_OPTIMIZER))


@dataclass(frozen=True)
class Framework:
    name: str
    fit: Callable

    def __call__(self, db, seed):
        return self.fit(db, seed)


def make_framework(name: str, cfg: EvalConfig | None = None) -> Framework:
    """Framework ``name`` whose ``fit(db, seed)`` returns an object with ``predict_many``."""
    cfg = EvalConfig() if cfg is None else cfg
    if name == "anvil":
        return Framework(name, lambda db, seed: attention.train(db, cfg.anvil, seed)[0])
    if name == "anvil-nofast":
        nofast = replace(cfg.anvil, fast=cfg.anvil.fast.without_fast())
        return Framework(name, lambda db, seed: attention.train(db, nofast, seed)[0])
    if name == "knn-euclid":
        kc = KnnConfig(cfg.knn.k, baselines.EUCLIDEAN)
        return Framework(name, lambda db, seed: baselines.knn_fit(db, kc))
    if name == "knn-pearson":
        kc = KnnConfig(cfg.knn.k, baselines.PEARSON)
        return Framework(name, lambda db, seed: baselines.knn_fit(db, kc))
    if name == "adtrain":
        return Framework(name, lambda db, seed: baselines.adtrain_train(db, cfg.adtrain, seed)[0])
    if name == "ffdnn":
        plain = replace(cfg.adtrain, input_noise_sigma=0.0, label_noise_p=0.0, fast=None)
        return Framework(name, lambda db, seed: baselines.adtrain_train(db, plain, seed)[0])
    if name == "ffdnn-fast":
        # FASt takes the place of the plain input noise; labels stay clean
        fasted = replace(cfg.adtrain, input_noise_sigma=0.0, label_noise_p=0.0,
                         fast=replace(cfg.anvil.fast, noise_sigma=0.0))
        return Framework(name, lambda db, seed: baselines.adtrain_train(db, fasted, seed)[0])
    raise ConfigError(f"unknown framework {name!r}; choose from {', '.join(FRAMEWORKS)}")


def job_seed(seed, *keys) -> int:
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))


@dataclass(frozen=True)
class CellResult:
    mean_m: float
    std_m: float
    n_queries: int


def evaluate_model(model, test_db: FingerprintDatabase) -> CellResult:
    if len(test_db) == 0:
        raise CapacityError("test database is empty")
    if model.registry.ap_ids != test_db.registry.ap_ids:
        raise SchemaError("model and test data use different AP registries")
    _, xy = model.predict_many(test_db.X)
    err = localization_errors(xy, test_db.coords)
    return CellResult(float(np.mean(err)), float(np.std(err)), int(err.size))


def evaluate_pair(framework: Framework, train_db, test_db, seed=0) -> CellResult:
    """Fit on the offline device, score on the online device."""
    if train_db.registry.ap_ids != test_db.registry.ap_ids:
        raise SchemaError("offline and online datasets use different AP registries")
    if len(test_db) == 0:
        raise CapacityError("test database is empty")
    return evaluate_model(framework(train_db, seed), test_db)


@dataclass
class EvalMatrix:
    floorplan_id: str
    frameworks: list
    devices: list
    cells: dict  # (framework, offline, online) -> CellResult

    def means(self, framework) -> np.ndarray:
        return np.array([[self.cells[framework, a, b].mean_m for b in self.devices] for a in self.devices])

    def same_device_mean(self, framework) -> float:
        return float(np.mean(np.diag(self.means(framework))))

    def cross_device_mean(self, framework) -> float:
        m = self.means(framework)
        return float(np.mean(m[~np.eye(len(self.devices), dtype=bool)]))

    def summary(self) -> "Summary":
        rows = []
        for fw in self.frameworks:
            vals = self.means(fw).ravel()
            rows.append(SummaryRow(self.floorplan_id, fw, float(np.mean(vals)), float(np.std(vals)), vals.size))
        return Summary(rows)


@dataclass(frozen=True)
class SummaryRow:
    floorplan: str
    framework: str
    mean_m: float
    std_m: float
    n_cells: int


@dataclass
class Summary:
    rows: list

    def __add__(self, other):
        return Summary(self.rows + other.rows)

    def get(self, floorplan, framework) -> SummaryRow:
        for r in self.rows:
            if r.floorplan == floorplan and r.framework == framework:
                return r
        raise KeyError((floorplan, framework))


def split_devices(dbs: dict, n_train=8, n_test=2, seed=0) -> dict:
    """Per-device ``(train, test)`` splits with a device-specific shuffle."""
    return {dev: split_per_rp(db, n_train, n_test, job_seed(seed, "split", dev)) for dev, db in dbs.items()}


def cross_device_matrix(frameworks, datasets: dict, seed=0, floorplan_id=None,
                        cfg: EvalConfig | None = None) -> EvalMatrix:
    """Fill every framework x offline x online cell.

    ``frameworks`` holds names or :class:`Framework` objects; ``datasets`` maps
    device id to ``(train_db, test_db)``.  Each (framework, offline device)
    model is trained once.
    """
    frameworks = [make_framework(f, cfg) if isinstance(f, str) else f for f in frameworks]
    devices = list(datasets)
    if not frameworks:
        raise ConfigError("need at least one framework")
    if len(devices) < 2:
        raise DataError("need at least two devices")
    if floorplan_id is None:
        floorplan_id = datasets[devices[0]][0].floorplan_id
    cells = {}
    for fw in frameworks:
        for off in devices:
            train_db = datasets[off][0]
            model = fw(train_db, job_seed(seed, fw.name, floorplan_id, off))
            for on in devices:
                test_db = datasets[on][1]
                if train_db.registry.ap_ids != test_db.registry.ap_ids:
                    raise SchemaError(f"{off} and {on} use different AP registries")
                cells[fw.name, off, on] = evaluate_model(model, test_db)
            log.info("%s %s trained on %s: row mean %.3f m", floorplan_id, fw.name, off,
                     np.mean([cells[fw.name, off, on].mean_m for on in devices]))
    return EvalMatrix(floorplan_id, [f.name for f in frameworks], devices, cells)


def ablate_fast(floorplans: dict, seed=0, cfg: EvalConfig | None = None) -> Summary:
    """With/without-FASt comparison, averaged over all offline x online pairs.

    ``floorplans`` maps floorplan id to a ``{device: (train, test)}`` dict.
    """
    summary = Summary([])
    for fid, datasets in floorplans.items():
        m = cross_device_matrix(ABLATION_FRAMEWORKS, datasets, seed, fid, cfg)
        summary = summary + m.summary()
    return summary


# ---------------------------------------------------------------------------
# data directories
# ---------------------------------------------------------------------------

def load_floorplan_dir(path) -> dict:
    """``{device_id: FingerprintDatabase}`` for every ``*.csv`` in ``path``."""
    path = Path(path)
    files = sorted(path.glob("*.csv"))
    if not files:
        raise DataError(f"no dataset CSV files in {path}")
    return {f.stem: load_database(f) for f in files}


def load_suite_dir(path) -> dict:
    """``{floorplan_id: {device_id: db}}`` from a ``synth`` output directory."""
    path = Path(path)
    if not path.is_dir():
        raise DataError(f"{path} is not a directory")
    subdirs = sorted(p for p in path.iterdir() if p.is_dir() and any(p.glob("*.csv")))
    if not subdirs:
        return {path.name: load_floorplan_dir(path)}
    return {p.name: load_floorplan_dir(p) for p in subdirs}


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _f(v):
    return repr(float(v))


def _as_list(obj):
    return list(obj) if isinstance(obj, (list, tuple)) else [obj]


def matrix_csv(matrices) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATRIX_HEADER)
    for m in _as_list(matrices):
        for fw in m.frameworks:
            for a in m.devices:
                for b in m.devices:
                    c = m.cells[fw, a, b]
                    w.writerow([m.floorplan_id, fw, a, b, _f(c.mean_m), _f(c.std_m), c.n_queries])
    return buf.getvalue()


def summary_csv(summary: Summary) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in summary.rows:
        w.writerow([r.floorplan, r.framework, _f(r.mean_m), _f(r.std_m), r.n_cells])
    return buf.getvalue()


def read_matrix_csv(path) -> list:
    """Inverse of the matrix CSV writer; one :class:`EvalMatrix` per floorplan."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != MATRIX_HEADER:
            raise SchemaError(f"{path}: not a matrix report")
        out = {}
        for row in reader:
            fp, fw, a, b, mean, std, n = row
            m = out.setdefault(fp, EvalMatrix(fp, [], [], {}))
            if fw not in m.frameworks:
                m.frameworks.append(fw)
            for d in (a, b):
                if d not in m.devices:
                    m.devices.append(d)
            m.cells[fw, a, b] = CellResult(float(mean), float(std), int(n))
    return list(out.values())


def _annotate(value, lo, hi):
    text = f"{value:.2f}"
    if value == lo:
        return f"**{text}** (min)"
    if value == hi:
        return f"{text} (max)"
    return text


def matrix_markdown(matrices) -> str:
    """One table per framework; min/max are marked per floorplan across frameworks."""
    lines = []
    for m in _as_list(matrices):
        allvals = [c.mean_m for c in m.cells.values()]
        lo, hi = min(allvals), max(allvals)
        lines.append(f"## {m.floorplan_id}")
        lines.append("")
        for fw in m.frameworks:
            lines.append(f"### {fw} (rows: offline device, columns: online device; mean error in m)")
            lines.append("")
            lines.append("| offline \\ online | " + " | ".join(m.devices) + " |")
            lines.append("|---" * (len(m.devices) + 1) + "|")
            for a in m.devices:
                cells = [_annotate(m.cells[fw, a, b].mean_m, lo, hi) for b in m.devices]
                lines.append(f"| {a} | " + " | ".join(cells) + " |")
            lines.append("")
    return "\n".join(lines)


def summary_markdown(summary: Summary) -> str:
    lines = ["| floorplan | framework | mean (m) | std (m) | cells |", "|---|---|---|---|---|"]
    for r in summary.rows:
        lines.append(f"| {r.floorplan} | {r.framework} | {r.mean_m:.3f} | {r.std_m:.3f} | {r.n_cells} |")
    return "\n".join(lines) + "\n"


def emit_report(obj, path, fmt="csv") -> Path:
    """Write a matrix (or list of matrices) or a :class:`Summary` as CSV or markdown."""
    path = Path(path)
    if fmt not in ("csv", "md"):
        raise ConfigError(f"unknown report format {fmt!r}")
    if isinstance(obj, Summary):
        if not obj.rows:
            raise DataError("refusing to write an empty summary")
        text = summary_csv(obj) if fmt == "csv" else summary_markdown(obj)
    else:
        mats = _as_list(obj)
        if not mats or not any(m.cells for m in mats):
            raise DataError("refusing to write an empty matrix")
        text = matrix_csv(mats) if fmt == "csv" else matrix_markdown(mats)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path

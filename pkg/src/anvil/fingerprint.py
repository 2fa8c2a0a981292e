"""Fingerprint data model: AP registry, normalization, one-hot labels, CSV I/O.

Raw RSSI lives in dBm on [-100, 0] where -100 means "not heard".  Normalized
RSSI is ``(v + 100) / 100`` on [0, 1].  A :class:`FingerprintDatabase` keeps
its fingerprints as one normalized ``(N, d)`` matrix; per-row
:class:`Fingerprint` objects are materialized on demand.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, DataError, DomainError, MalformedScanError, SchemaError

RSSI_MIN = -100.0
RSSI_MAX = 0.0


def _frozen(arr, dtype=None):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ApRegistry:
    """Fixed, ordered set of AP identifiers defining the fingerprint columns."""

    ap_ids: tuple
    index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = tuple(str(a) for a in self.ap_ids)
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(a for a in ids if a in seen or seen.add(a))
            raise SchemaError(f"duplicate AP identifier in registry: {dup!r}")
        object.__setattr__(self, "ap_ids", ids)
        object.__setattr__(self, "index", {a: i for i, a in enumerate(ids)})

    def __len__(self):
        return len(self.ap_ids)

    def digest(self) -> str:
        """SHA-256 over the ordered identifiers; used to tag model artifacts."""
        h = hashlib.sha256()
        for a in self.ap_ids:
            h.update(a.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    @classmethod
    def from_scans(cls, scans: Iterable[Iterable[tuple]]) -> "ApRegistry":
        """Registry of every AP seen in offline scans, in first-seen order."""
        ids: dict = {}
        for scan in scans:
            for ap_id, _ in scan:
                ids.setdefault(str(ap_id), None)
        return cls(tuple(ids))


@dataclass(frozen=True)
class Fingerprint:
    rssi: np.ndarray
    device_id: str
    rp_id: int | None = None
    timestamp: int | None = None
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rssi", _frozen(self.rssi, float))
        _check_range(self.rssi, self.normalized)


@dataclass(frozen=True)
class ReferencePoint:
    rp_id: int
    x_m: float
    y_m: float


def _check_range(values, normalized):
    lo, hi = (0.0, 1.0) if normalized else (RSSI_MIN, RSSI_MAX)
    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~((values >= lo) & (values <= hi)))
    if bad.size:
        i = int(bad[0])
        form = "normalized" if normalized else "raw"
        raise DomainError(f"{form} RSSI at AP index {i} is {values.flat[i]!r}, outside [{lo}, {hi}]")


def normalize_rssi(raw) -> np.ndarray:
    """Vectorized ``(v + 100) / 100`` with range checking."""
    raw = np.asarray(raw, dtype=float)
    _check_range(raw, normalized=False)
    return (raw - RSSI_MIN) / 100.0


def denormalize_rssi(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    _check_range(values, normalized=True)
    return values * 100.0 + RSSI_MIN


def normalize(fp: Fingerprint) -> Fingerprint:
    if fp.normalized:
        raise DomainError("fingerprint is already normalized")
    return Fingerprint(normalize_rssi(fp.rssi), fp.device_id, fp.rp_id, fp.timestamp, normalized=True)


def align_to_registry(scan: Iterable[tuple], registry: ApRegistry, device_id: str = "",
                      rp_id: int | None = None, timestamp: int | None = None):
    """Project a raw ``[(ap_id, dBm), ...]`` scan onto the registry columns.

    APs missing from the scan read -100.  APs unknown to the registry are
    dropped.  Returns ``(fingerprint, n_discarded)``.
    """
    rssi = np.full(len(registry), RSSI_MIN)
    seen = set()
    discarded = 0
    for ap_id, value in scan:
        ap_id = str(ap_id)
        if ap_id in seen:
            raise MalformedScanError(f"AP {ap_id!r} appears more than once in scan")
        seen.add(ap_id)
        value = float(value)
        if not RSSI_MIN <= value <= RSSI_MAX:
            raise DomainError(f"RSSI {value!r} for AP {ap_id!r} outside [-100, 0]")
        col = registry.index.get(ap_id)
        if col is None:
            discarded += 1
        else:
            rssi[col] = value
    return Fingerprint(rssi, device_id, rp_id, timestamp), discarded


def one_hot(rp_id: int, n_rp: int) -> np.ndarray:
    if not 0 <= rp_id < n_rp:
        raise IndexError(f"rp_id {rp_id} out of range for {n_rp} reference points")
    v = np.zeros(n_rp)
    v[rp_id] = 1.0
    return v


def one_hot_matrix(rp_ids, n_rp: int) -> np.ndarray:
    rp_ids = np.asarray(rp_ids, dtype=int)
    if rp_ids.size and (rp_ids.min() < 0 or rp_ids.max() >= n_rp):
        raise IndexError(f"rp_id out of range for {n_rp} reference points")
    out = np.zeros((rp_ids.size, n_rp))
    out[np.arange(rp_ids.size), rp_ids] = 1.0
    return out


@dataclass(frozen=True, eq=False)
class FingerprintDatabase:
    """Offline key/value store.

    ``X`` holds normalized fingerprints row-wise, ``rp_ids`` the dense RP
    index of each row, ``rp_coords`` the ``(n_rp, 2)`` coordinates in meters
    indexed by RP id.
    """

    registry: ApRegistry
    X: np.ndarray
    rp_ids: np.ndarray
    device_ids: tuple
    rp_coords: np.ndarray
    floorplan_id: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            X = X.reshape(-1, len(self.registry))
        if X.shape[1] != len(self.registry):
            raise SchemaError(f"fingerprints have {X.shape[1]} columns, registry has {len(self.registry)}")
        _check_range(X, normalized=True)
        rp_ids = np.asarray(self.rp_ids, dtype=np.int64).reshape(-1)
        coords = np.asarray(self.rp_coords, dtype=float).reshape(-1, 2)
        if rp_ids.size != X.shape[0]:
            raise SchemaError("rp_ids length does not match number of fingerprints")
        if rp_ids.size and (rp_ids.min() < 0 or rp_ids.max() >= coords.shape[0]):
            raise SchemaError("rp_id without coordinates")
        device_ids = tuple(str(d) for d in self.device_ids)
        if len(device_ids) != X.shape[0]:
            raise SchemaError("device_ids length does not match number of fingerprints")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "rp_ids", _frozen(rp_ids))
        object.__setattr__(self, "rp_coords", _frozen(coords))
        object.__setattr__(self, "device_ids", device_ids)

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_rp(self) -> int:
        return self.rp_coords.shape[0]

    @property
    def d_ap(self) -> int:
        return len(self.registry)

    @property
    def labels(self) -> np.ndarray:
        return one_hot_matrix(self.rp_ids, self.n_rp)

    @property
    def coords(self) -> np.ndarray:
        """Coordinates of each row's RP, shape ``(N, 2)``."""
        return self.rp_coords[self.rp_ids]

    @property
    def fingerprints(self) -> list:
        return [Fingerprint(x, d, int(r), normalized=True)
                for x, d, r in zip(self.X, self.device_ids, self.rp_ids)]

    @property
    def reference_points(self) -> list:
        return [ReferencePoint(i, float(x), float(y)) for i, (x, y) in enumerate(self.rp_coords)]

    def subset(self, rows) -> "FingerprintDatabase":
        rows = np.asarray(rows, dtype=int)
        return FingerprintDatabase(self.registry, self.X[rows], self.rp_ids[rows],
                                   tuple(self.device_ids[i] for i in rows), self.rp_coords,
                                   self.floorplan_id)

    def equals(self, other: "FingerprintDatabase") -> bool:
        return (self.registry.ap_ids == other.registry.ap_ids
                and self.floorplan_id == other.floorplan_id
                and self.device_ids == other.device_ids
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.rp_ids, other.rp_ids)
                and np.array_equal(self.rp_coords, other.rp_coords))

    @classmethod
    def from_raw(cls, registry, raw_rssi, rp_ids, device_ids, rp_coords, floorplan_id=""):
        raw_rssi = np.asarray(raw_rssi, dtype=float).reshape(-1, len(registry))
        if isinstance(device_ids, str):
            device_ids = (device_ids,) * raw_rssi.shape[0]
        return cls(registry, normalize_rssi(raw_rssi), rp_ids, device_ids, rp_coords, floorplan_id)

    @classmethod
    def from_fingerprints(cls, registry, fingerprints: Sequence[Fingerprint], rp_coords,
                          floorplan_id=""):
        if any(not fp.normalized for fp in fingerprints):
            raise DomainError("database rows must be normalized fingerprints")
        X = np.array([fp.rssi for fp in fingerprints]).reshape(len(fingerprints), len(registry))
        return cls(registry, X, [fp.rp_id for fp in fingerprints],
                   [fp.device_id for fp in fingerprints], rp_coords, floorplan_id)

    def realign(self, registry: ApRegistry) -> "FingerprintDatabase":
        """Re-express rows over another registry (missing APs -> 0, unknown dropped)."""
        if registry.ap_ids == self.registry.ap_ids:
            return self
        X = np.zeros((len(self), len(registry)))
        for j, ap_id in enumerate(self.registry.ap_ids):
            col = registry.index.get(ap_id)
            if col is not None:
                X[:, col] = self.X[:, j]
        return FingerprintDatabase(registry, X, self.rp_ids, self.device_ids, self.rp_coords,
                                   self.floorplan_id)


def split_indices(db: FingerprintDatabase, n_train: int, n_test: int, seed):
    """Row indices of :func:`split_per_rp`."""
    rng = np.random.default_rng(seed)
    train_rows, test_rows = [], []
    for rp in np.unique(db.rp_ids):
        rows = np.flatnonzero(db.rp_ids == rp)
        if rows.size < n_train + n_test:
            raise CapacityError(f"RP {rp} has {rows.size} fingerprints, need {n_train + n_test}")
        rows = rows[rng.permutation(rows.size)]
        train_rows.extend(rows[:n_train])
        test_rows.extend(rows[n_train:n_train + n_test])
    return np.array(train_rows, dtype=int), np.array(test_rows, dtype=int)


def split_per_rp(db: FingerprintDatabase, n_train: int, n_test: int, seed):
    """Seeded per-RP split into disjoint train/test databases."""
    train_rows, test_rows = split_indices(db, n_train, n_test, seed)
    return db.subset(train_rows), db.subset(test_rows)


# ---------------------------------------------------------------------------
# CSV + sidecar JSON
# ---------------------------------------------------------------------------

def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def _fmt_coord(v):
    return repr(float(v))


def save_database(db: FingerprintDatabase, path) -> Path:
    """Write ``path`` (CSV, integer dBm) and its ``.json`` sidecar."""
    path = Path(path)
    raw = np.rint(db.X * 100.0 + RSSI_MIN).astype(int)
    if not np.allclose(raw, db.X * 100.0 + RSSI_MIN, rtol=0, atol=1e-9):
        raise DataError("database holds non-integer dBm values; CSV schema requires integers")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["device_id", "rp_id", "x_m", "y_m"] + [f"ap_{j}" for j in range(db.d_ap)])
        for i in range(len(db)):
            rp = int(db.rp_ids[i])
            x, y = db.rp_coords[rp]
            w.writerow([db.device_ids[i], rp, _fmt_coord(x), _fmt_coord(y)] + raw[i].tolist())
    sidecar = {
        "floorplan_id": db.floorplan_id,
        "aps": {str(j): a for j, a in enumerate(db.registry.ap_ids)},
        "rp_coords": {str(r): [float(x), float(y)] for r, (x, y) in enumerate(db.rp_coords)},
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    return path


def read_sidecar(path):
    path = Path(path)
    side = _sidecar_path(path)
    try:
        with open(side, encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"missing sidecar {side}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"unreadable sidecar {side}: {exc}") from None
    aps = meta.get("aps", {})
    registry = ApRegistry(tuple(aps[str(j)] for j in range(len(aps))))
    rp_map = {int(k): tuple(map(float, v)) for k, v in meta.get("rp_coords", {}).items()}
    return registry, rp_map, meta.get("floorplan_id", "")


def _read_rows(path, d_ap):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["device_id", "rp_id", "x_m", "y_m"] + [f"ap_{j}" for j in range(d_ap)]
        if header != expected:
            raise SchemaError(f"{path}: header does not match sidecar registry of {d_ap} APs")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise SchemaError(f"{path}:{lineno}: expected {len(expected)} cells, got {len(row)}")
            if any(c == "" for c in row[4:]):
                raise SchemaError(f"{path}:{lineno}: blank RSSI cell (missing APs must read -100)")
            rows.append(row)
    return rows


def load_database(path) -> FingerprintDatabase:
    """Inverse of :func:`save_database`; sparse RP ids are remapped to 0..n_rp-1."""
    path = Path(path)
    registry, rp_map, floorplan_id = read_sidecar(path)
    rows = _read_rows(path, len(registry))
    for row in rows:
        if row[1] == "":
            raise SchemaError(f"{path}: database rows need an rp_id")
        rp_map.setdefault(int(row[1]), (float(row[2]), float(row[3])))
    order = sorted(rp_map)
    remap = {r: i for i, r in enumerate(order)}
    coords = np.array([rp_map[r] for r in order]).reshape(-1, 2)
    raw = np.array([[int(c) for c in row[4:]] for row in rows], dtype=float).reshape(-1, len(registry))
    return FingerprintDatabase.from_raw(
        registry, raw, [remap[int(row[1])] for row in rows], tuple(row[0] for row in rows),
        coords, floorplan_id)


def load_queries(path, registry: ApRegistry | None = None):
    """Read an online query CSV (``rp_id``/coordinates may be blank).

    Returns ``(X_normalized, device_ids, rp_ids_or_None, coords_or_nan)``.
    When ``registry`` is given, columns are re-aligned by AP identifier using
    the file's sidecar, so online-only APs are discarded and missing ones read
    -100.
    """
    path = Path(path)
    file_registry, _, _ = read_sidecar(path)
    rows = _read_rows(path, len(file_registry))
    raw = np.array([[int(c) for c in row[4:]] for row in rows], dtype=float).reshape(-1, len(file_registry))
    if registry is not None and registry.ap_ids != file_registry.ap_ids:
        aligned = np.full((raw.shape[0], len(registry)), RSSI_MIN)
        for j, ap_id in enumerate(file_registry.ap_ids):
            col = registry.index.get(ap_id)
            if col is not None:
                aligned[:, col] = raw[:, j]
        raw = aligned
    rp_ids = [None if row[1] == "" else int(row[1]) for row in rows]
    coords = np.array([[float(row[2]) if row[2] else np.nan, float(row[3]) if row[3] else np.nan]
                       for row in rows]).reshape(-1, 2)
    return normalize_rssi(raw), [row[0] for row in rows], rp_ids, coords

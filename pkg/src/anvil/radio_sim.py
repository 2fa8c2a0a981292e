"""Synthetic floorplans, log-distance radio maps and heterogeneous devices.

A device is modelled as an affine distortion of the true RSSI above the
-100 dBm floor (``offset_db`` shifts, ``gain`` stretches), plus per-reading
Gaussian noise and random loss of visible APs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import derive_rng
from .errors import ConfigError
from .fingerprint import RSSI_MAX, RSSI_MIN, ApRegistry, FingerprintDatabase, save_database

CONTRAST_PIVOT_DBM = RSSI_MIN


@dataclass(frozen=True)
class PathLossParams:
    p0_dbm: float = -30.0
    n_exp: float = 2.5
    d0_m: float = 1.0
    shadow_sigma_db: float = 2.0
    visibility_floor_dbm: float = -95.0

    def __post_init__(self):
        if not self.d0_m > 0:
            raise ConfigError("d0_m must be positive")
        if not self.shadow_sigma_db >= 0:
            raise ConfigError("shadow_sigma_db must be non-negative")
        if not RSSI_MIN < self.visibility_floor_dbm < RSSI_MAX:
            raise ConfigError("visibility_floor_dbm must lie in (-100, 0)")


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    offset_db: float = 0.0
    gain: float = 1.0
    dropout_p: float = 0.0
    noise_sigma_db: float = 0.0

    def __post_init__(self):
        if not self.gain > 0:
            raise ConfigError(f"{self.device_id}: gain must be positive")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ConfigError(f"{self.device_id}: dropout_p must lie in [0, 1]")
        if not self.noise_sigma_db >= 0:
            raise ConfigError(f"{self.device_id}: noise_sigma_db must be non-negative")

    @classmethod
    def identity(cls, device_id="ref"):
        return cls(device_id)


@dataclass(frozen=True)
class FloorplanSpec:
    """RPs sit every ``rp_spacing_m`` along the ``path_shape`` polyline."""

    floorplan_id: str
    n_rp: int
    path_shape: tuple
    ap_positions: tuple
    rp_spacing_m: float = 1.0
    seed: int = 0

    def __post_init__(self):
        path = np.asarray(self.path_shape, dtype=float).reshape(-1, 2)
        aps = np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)
        if self.n_rp < 2:
            raise ConfigError("a floorplan needs at least 2 reference points")
        if aps.shape[0] < 1:
            raise ConfigError("a floorplan needs at least 1 AP")
        if not (np.all(np.isfinite(path)) and np.all(np.isfinite(aps))):
            raise ConfigError("floorplan positions must be finite")
        if not self.rp_spacing_m > 0:
            raise ConfigError("rp_spacing_m must be positive")
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        if seg.sum() + 1e-9 < (self.n_rp - 1) * self.rp_spacing_m:
            raise ConfigError(f"{self.floorplan_id}: path of {seg.sum():.1f} m too short for "
                              f"{self.n_rp} RPs at {self.rp_spacing_m} m")
        object.__setattr__(self, "path_shape", tuple(map(tuple, path.tolist())))
        object.__setattr__(self, "ap_positions", tuple(map(tuple, aps.tolist())))

    @property
    def n_ap(self) -> int:
        return len(self.ap_positions)

    def rp_positions(self) -> np.ndarray:
        path = np.asarray(self.path_shape)
        seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = np.arange(self.n_rp) * self.rp_spacing_m
        out = np.empty((self.n_rp, 2))
        for i, si in enumerate(s):
            k = min(np.searchsorted(cum, si, side="right") - 1, len(seg) - 1)
            t = 0.0 if seg[k] == 0 else (si - cum[k]) / seg[k]
            out[i] = path[k] + t * (path[k + 1] - path[k])
        return out

    def registry(self) -> ApRegistry:
        """Deterministic locally-administered MAC-style identifiers."""
        rng = derive_rng(self.seed, self.floorplan_id, "mac")
        octets = rng.integers(0, 256, size=(self.n_ap, 4))
        return ApRegistry(tuple(
            "02:%02x:%02x:%02x:%02x:%02x" % (j % 256, *o) for j, o in enumerate(octets)))


def make_floorplan(floorplan_id: str, n_rp: int, n_ap: int, seed: int = 0,
                   rp_spacing_m: float = 1.0, ap_spread_m: float = 700.0,
                   near_fraction: float = 0.4, near_offset_m: float = 12.0) -> FloorplanSpec:
    """Random corridor-like path with APs scattered around it.

    ``near_fraction`` of the APs sit within ``near_offset_m`` of the path; the rest are
    spread up to ``ap_spread_m`` away so that a share of them falls below the
    visibility floor.
    """
    rng = derive_rng(seed, floorplan_id, "layout")
    length = (n_rp - 1) * rp_spacing_m
    # three legs with right-angle turns
    cuts = np.sort(rng.uniform(0.25, 0.75, size=2)) * length
    # turns sit on RPs so neighbours stay exactly one spacing apart
    cuts = np.clip(np.round(cuts / rp_spacing_m), 1, max(n_rp - 2, 1)) * rp_spacing_m
    legs = np.diff(np.concatenate([[0.0], cuts, [length + 1e-6]]))
    heading = 0.0
    pts = [np.zeros(2)]
    for leg in legs:
        pts.append(pts[-1] + leg * np.array([np.cos(heading), np.sin(heading)]))
        heading += rng.choice([-np.pi / 2, np.pi / 2])
    path = np.array(pts)

    n_near = max(1, int(round(near_fraction * n_ap)))
    anchor = rng.integers(0, len(path) - 1, size=n_near)
    t = rng.uniform(0, 1, size=(n_near, 1))
    on_path = path[anchor] + t * (path[anchor + 1] - path[anchor])
    near = on_path + rng.uniform(-near_offset_m, near_offset_m, size=(n_near, 2))
    centre = path.mean(axis=0)
    r = rng.uniform(15, ap_spread_m, size=n_ap - n_near)
    theta = rng.uniform(0, 2 * np.pi, size=n_ap - n_near)
    far = centre + np.c_[r * np.cos(theta), r * np.sin(theta)]
    aps = np.vstack([near, far])[rng.permutation(n_ap)]
    return FloorplanSpec(floorplan_id, n_rp, tuple(map(tuple, path)), tuple(map(tuple, aps)),
                         rp_spacing_m, seed)


def ground_truth_map(spec: FloorplanSpec, pl: PathLossParams) -> np.ndarray:
    """Noise-free ``(n_rp, n_ap)`` RSSI in dBm."""
    rps = spec.rp_positions()
    aps = np.asarray(spec.ap_positions)
    dist = np.linalg.norm(rps[:, None, :] - aps[None, :, :], axis=2)
    rssi = pl.p0_dbm - 10.0 * pl.n_exp * np.log10(np.maximum(dist, pl.d0_m) / pl.d0_m)
    rssi = np.clip(rssi, RSSI_MIN, RSSI_MAX)
    rssi[rssi < pl.visibility_floor_dbm] = RSSI_MIN
    return rssi


def apply_device(truth_row, profile: DeviceProfile, pl: PathLossParams, rng) -> np.ndarray:
    """One raw reading of ``truth_row`` as perceived by ``profile``.

    Works row-wise on 2-D input too.  Per-reading noise combines the device's
    ``noise_sigma_db`` with the environment's ``pl.shadow_sigma_db``.
    """
    truth = np.asarray(truth_row, dtype=float)
    visible = truth > RSSI_MIN
    sigma = float(np.hypot(profile.noise_sigma_db, pl.shadow_sigma_db))
    noise = rng.normal(0.0, sigma, size=truth.shape) if sigma > 0 else 0.0
    drop = rng.random(truth.shape) < profile.dropout_p if profile.dropout_p > 0 else False
    out = CONTRAST_PIVOT_DBM + profile.gain * (truth - CONTRAST_PIVOT_DBM) + profile.offset_db + noise
    out = np.clip(out, RSSI_MIN, RSSI_MAX)
    out = np.where(visible & ~drop, out, RSSI_MIN)
    return out


def generate_dataset(spec: FloorplanSpec, pl: PathLossParams, profiles, per_rp: int = 10,
                     seed: int = 0) -> dict:
    """``{device_id: FingerprintDatabase}`` with ``per_rp`` readings per RP.

    Readings are rounded to whole dBm, as phones report them.  Each device
    draws from its own derived stream, so the result for one device does not
    depend on which other devices are generated.
    """
    if per_rp < 1:
        raise ConfigError("per_rp must be >= 1")
    truth = ground_truth_map(spec, pl)
    registry = spec.registry()
    coords = spec.rp_positions()
    rp_ids = np.repeat(np.arange(spec.n_rp), per_rp)
    out = {}
    for profile in profiles:
        rng = derive_rng(seed, spec.floorplan_id, profile.device_id)
        raw = np.rint(apply_device(truth[rp_ids], profile, pl, rng))
        out[profile.device_id] = FingerprintDatabase.from_raw(
            registry, raw, rp_ids, profile.device_id, coords, spec.floorplan_id)
    return out


# Simulator knobs chosen to mimic the qualitative spread between phones:
# shifted levels, stretched dynamics, lost APs, and unequal jitter.
DEFAULT_DEVICES = (
    DeviceProfile("S7", offset_db=0.0, gain=1.00, dropout_p=0.02, noise_sigma_db=1.5),
    DeviceProfile("BLU", offset_db=-6.0, gain=0.85, dropout_p=0.08, noise_sigma_db=3.0),
    DeviceProfile("HTC", offset_db=2.0, gain=1.10, dropout_p=0.03, noise_sigma_db=1.0),
    DeviceProfile("LG", offset_db=6.0, gain=1.20, dropout_p=0.00, noise_sigma_db=2.5),
    DeviceProfile("MOTO", offset_db=-3.0, gain=0.95, dropout_p=0.05, noise_sigma_db=1.5),
    DeviceProfile("OP3", offset_db=-2.0, gain=0.90, dropout_p=0.04, noise_sigma_db=1.0),
)

# (floorplan_id, n_rp, n_ap)
DEFAULT_FLOORPLANS = (
    ("classroom", 62, 81),
    ("auditorium", 70, 130),
    ("office", 66, 180),
    ("library", 78, 300),
)


def default_suite(seed: int = 0):
    return [make_floorplan(name, n_rp, n_ap, seed=seed) for name, n_rp, n_ap in DEFAULT_FLOORPLANS]


@dataclass
class SynthConfig:
    """Parsed form of the ``synth`` JSON document."""

    floorplans: list = field(default_factory=list)
    path_loss: PathLossParams = field(default_factory=PathLossParams)
    devices: tuple = DEFAULT_DEVICES
    per_rp: int = 10
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict, seed: int | None = None) -> "SynthConfig":
        try:
            seed = int(doc.get("seed", 0) if seed is None else seed)
            pl = PathLossParams(**doc.get("path_loss", {}))
            devices = tuple(DeviceProfile(**d) for d in doc["devices"]) if "devices" in doc else DEFAULT_DEVICES
            plans = []
            for fp in doc.get("floorplans", []):
                fp = dict(fp)
                if "path_shape" in fp:
                    plans.append(FloorplanSpec(
                        fp["floorplan_id"], int(fp["n_rp"]), fp["path_shape"], fp["ap_positions"],
                        float(fp.get("rp_spacing_m", 1.0)), int(fp.get("seed", seed))))
                else:
                    plans.append(make_floorplan(
                        fp["floorplan_id"], int(fp["n_rp"]), int(fp["n_ap"]), seed=int(fp.get("seed", seed)),
                        rp_spacing_m=float(fp.get("rp_spacing_m", 1.0)),
                        ap_spread_m=float(fp.get("ap_spread_m", 700.0)),
                        near_fraction=float(fp.get("near_fraction", 0.4)),
                        near_offset_m=float(fp.get("near_offset_m", 12.0))))
            if not plans:
                plans = default_suite(seed)
            per_rp = int(doc.get("per_rp", 10))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad synth config: {exc}") from None
        if len({d.device_id for d in devices}) != len(devices):
            raise ConfigError("device ids must be unique")
        return cls(plans, pl, devices, per_rp, seed)


def write_suite(cfg: SynthConfig, out_dir) -> list:
    """Generate every floorplan x device dataset under ``out_dir/<floorplan>/<device>.csv``."""
    out_dir = Path(out_dir)
    written = []
    manifest = {"seed": cfg.seed, "per_rp": cfg.per_rp, "path_loss": asdict(cfg.path_loss),
                "devices": [asdict(d) for d in cfg.devices], "floorplans": []}
    for spec in cfg.floorplans:
        dbs = generate_dataset(spec, cfg.path_loss, cfg.devices, cfg.per_rp, cfg.seed)
        for device_id, db in dbs.items():
            written.append(save_database(db, out_dir / spec.floorplan_id / f"{device_id}.csv"))
        manifest["floorplans"].append({"floorplan_id": spec.floorplan_id, "n_rp": spec.n_rp,
                                       "n_ap": spec.n_ap, "rp_spacing_m": spec.rp_spacing_m,
                                       "path_shape": [list(p) for p in spec.path_shape],
                                       "ap_positions": [list(p) for p in spec.ap_positions],
                                       "seed": spec.seed})
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    return written

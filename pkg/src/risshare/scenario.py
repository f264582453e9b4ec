"""Experiment configuration: geometry, radio constants, weights and model catalogs.

A scenario is a single JSON document (see ``docs/scenario_schema.md``).  It is
loaded into an immutable :class:`ScenarioConfig`; every invariant is checked on
construction so a config object that exists is a valid one.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
SEED_ENV_VAR = "RISSHARE_SEED"

Vec3 = tuple[float, float, float]


class ScenarioError(ValueError):
    """Base class for configuration problems."""


class ConfigParseError(ScenarioError):
    pass


class ConfigValidationError(ScenarioError):
    pass


_SIZE_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)\s*$")
# decimal prefixes; "B" is bytes, "b"/"bit" is bits
_SIZE_UNITS = {
    "": 1, "b": 1, "bit": 1, "bits": 1,
    "B": 8, "KB": 8e3, "kB": 8e3, "K": 8e3, "MB": 8e6, "M": 8e6, "GB": 8e9, "G": 8e9,
    "Kb": 1e3, "kb": 1e3, "Mb": 1e6, "Gb": 1e9,
}


def parse_size_bits(value) -> float:
    """Convert a model size to bits.

    Numbers are taken as bits.  Strings carry an explicit unit suffix:
    ``"280KB"`` and ``"280K"`` are kilobytes, ``"2.3 MB"`` megabytes,
    ``"18.4Mb"`` megabits.  Prefixes are decimal.
    """
    if isinstance(value, bool):
        raise ConfigValidationError(f"invalid model size {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    m = _SIZE_RE.match(str(value))
    if not m or m.group(2) not in _SIZE_UNITS:
        raise ConfigValidationError(f"invalid model size {value!r}")
    return float(m.group(1)) * _SIZE_UNITS[m.group(2)]


@dataclass(frozen=True)
class ModelEntry:
    index: int
    size_bits: float
    kd_flops: float
    label: str = ""


@dataclass(frozen=True)
class ModelCatalog:
    """Candidate models of one car, ordered by index 1..I with growing size."""

    entries: tuple[ModelEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ConfigValidationError("model catalog is empty")
        for pos, e in enumerate(self.entries, start=1):
            if e.index != pos:
                raise ConfigValidationError(
                    f"catalog indices must be contiguous 1..I, got {e.index} at position {pos}")
            if not (e.size_bits >= 0 and math.isfinite(e.size_bits)):
                raise ConfigValidationError(f"model {pos}: size must be finite and >= 0")
            if not (e.kd_flops >= 0 and math.isfinite(e.kd_flops)):
                raise ConfigValidationError(f"model {pos}: kd_flops must be finite and >= 0")
        sizes = [e.size_bits for e in self.entries]
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ConfigValidationError("catalog size_bits must be strictly increasing in index")

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, index: int) -> ModelEntry:
        if not 1 <= index <= len(self.entries):
            raise IndexError(f"model index {index} outside 1..{len(self.entries)}")
        return self.entries[index - 1]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([e.size_bits for e in self.entries])

    @property
    def flops(self) -> np.ndarray:
        return np.array([e.kd_flops for e in self.entries])

    @classmethod
    def from_list(cls, items: Iterable[dict]) -> "ModelCatalog":
        entries = []
        for i, item in enumerate(items, start=1):
            if "size_bits" in item:
                size = parse_size_bits(item["size_bits"])
            elif "size" in item:
                size = parse_size_bits(item["size"])
            else:
                raise ConfigValidationError(f"model {i}: missing 'size' or 'size_bits'")
            entries.append(ModelEntry(
                index=int(item.get("index", i)),
                size_bits=size,
                kd_flops=float(item.get("kd_flops", 0.0)),
                label=str(item.get("label", f"Model {i}")),
            ))
        return cls(tuple(entries))

    def to_list(self) -> list[dict]:
        return [{"index": e.index, "label": e.label, "size_bits": e.size_bits,
                 "kd_flops": e.kd_flops} for e in self.entries]


def _vec3(p) -> Vec3:
    t = tuple(float(x) for x in p)
    if len(t) != 3:
        raise ConfigValidationError(f"position {p!r} is not a 3D coordinate")
    return t


def _count(k) -> int:
    if isinstance(k, bool) or not float(k).is_integer():
        raise ConfigValidationError(f"element count {k!r} is not an integer")
    return int(k)


def _per_tx(value, m: int, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * m
    vals = tuple(float(v) for v in value)
    if len(vals) != m:
        raise ConfigValidationError(f"{name} needs one value per transmitter ({m}), got {len(vals)}")
    return vals


@dataclass(frozen=True)
class ScenarioConfig:
    tx_positions: tuple[Vec3, ...]
    rx_position: Vec3
    ris_positions: tuple[Vec3, ...]
    elements_per_ris: tuple[int, ...]
    catalogs: tuple[ModelCatalog, ...]
    receiver_catalog: ModelCatalog
    weights: tuple[float, ...]
    rician_factor_h: float = 1.0
    rician_factor_g: float = 1.0
    bandwidth_hz: tuple[float, ...] = ()
    tx_power_w: tuple[float, ...] = ()
    noise_power_w: float = 10 ** (-94 / 10) / 1000
    path_loss_exponent: float = 2.0
    reference_loss_db: float = 30.0
    carrier_freq_hz: float = 28e9
    t_max_s: float = 1.0
    compute_freq_flops: float = 1e12
    seed: int = 0

    def __post_init__(self):
        m = len(self.tx_positions)
        if m < 1:
            raise ConfigValidationError("need at least one local car (M >= 1)")
        if len(self.catalogs) != m:
            raise ConfigValidationError(
                f"len(catalogs)={len(self.catalogs)} must equal number of local cars M={m}")
        n = len(self.ris_positions)
        if n < 1:
            raise ConfigValidationError("need at least one RIS (N >= 1)")
        if len(self.elements_per_ris) != n:
            raise ConfigValidationError(
                f"len(elements_per_ris)={len(self.elements_per_ris)} must equal number of RISs N={n}")
        if any(int(k) != k or k < 1 for k in self.elements_per_ris):
            raise ConfigValidationError("elements_per_ris must be positive integers")
        if len(self.bandwidth_hz) != m or len(self.tx_power_w) != m:
            raise ConfigValidationError("bandwidth_hz and tx_power_w need one entry per local car")
        for name in ("bandwidth_hz", "tx_power_w"):
            if any(not (v > 0 and math.isfinite(v)) for v in getattr(self, name)):
                raise ConfigValidationError(f"{name} must be strictly positive")
        for name in ("noise_power_w", "t_max_s", "compute_freq_flops", "carrier_freq_hz"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigValidationError(f"{name} must be strictly positive")
        for name in ("rician_factor_h", "rician_factor_g"):
            if not getattr(self, name) >= 0:
                raise ConfigValidationError(f"{name} must be >= 0")
        if not self.path_loss_exponent >= 2:
            raise ConfigValidationError("path_loss_exponent must be >= 2")
        if not math.isfinite(self.reference_loss_db):
            raise ConfigValidationError("reference_loss_db must be finite")
        if len(self.weights) != m + 2:
            raise ConfigValidationError(f"weights must have M+2={m + 2} entries, got {len(self.weights)}")
        if any(not (w >= 0 and math.isfinite(w)) for w in self.weights):
            raise ConfigValidationError("weights must be nonnegative")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ConfigValidationError("seed must be an unsigned integer")

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_ris(self) -> int:
        return len(self.ris_positions)

    @property
    def wavelength_m(self) -> float:
        return 299_792_458.0 / self.carrier_freq_hz

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # -- (de)serialization -------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tx_positions": [list(p) for p in self.tx_positions],
            "rx_position": list(self.rx_position),
            "ris_positions": [list(p) for p in self.ris_positions],
            "elements_per_ris": list(self.elements_per_ris),
            "rician_factor_h": self.rician_factor_h,
            "rician_factor_g": self.rician_factor_g,
            "bandwidth_hz": list(self.bandwidth_hz),
            "tx_power_w": list(self.tx_power_w),
            "noise_power_w": self.noise_power_w,
            "path_loss_exponent": self.path_loss_exponent,
            "reference_loss_db": self.reference_loss_db,
            "carrier_freq_hz": self.carrier_freq_hz,
            "weights": list(self.weights),
            "t_max_s": self.t_max_s,
            "compute_freq_flops": self.compute_freq_flops,
            "catalogs": {
                "local": [c.to_list() for c in self.catalogs],
                "receiver": self.receiver_catalog.to_list(),
            },
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigParseError("scenario document must be a JSON object")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigValidationError(f"unsupported schema_version {version!r}")
        try:
            tx = tuple(_vec3(p) for p in d["tx_positions"])
            m = len(tx)
            if m < 1:
                raise ConfigValidationError("need at least one local car (M >= 1)")
            cats = d["catalogs"]
            kwargs = dict(
                tx_positions=tx,
                rx_position=_vec3(d["rx_position"]),
                ris_positions=tuple(_vec3(p) for p in d["ris_positions"]),
                elements_per_ris=tuple(_count(k) for k in d["elements_per_ris"]),
                catalogs=tuple(ModelCatalog.from_list(c) for c in cats["local"]),
                receiver_catalog=ModelCatalog.from_list(cats["receiver"]),
                weights=tuple(float(w) for w in d["weights"]),
                bandwidth_hz=_per_tx(d["bandwidth_hz"], m, "bandwidth_hz"),
                tx_power_w=_per_tx(d["tx_power_w"], m, "tx_power_w"),
            )
        except KeyError as exc:
            raise ConfigValidationError(f"missing required field {exc.args[0]!r}") from None
        except (TypeError, AttributeError) as exc:
            raise ConfigValidationError(f"malformed field: {exc}") from None
        for key in ("rician_factor_h", "rician_factor_g", "noise_power_w", "path_loss_exponent",
                    "reference_loss_db", "carrier_freq_hz", "t_max_s", "compute_freq_flops"):
            if key in d:
                kwargs[key] = float(d[key])
        if "seed" in d:
            seed = d["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int):
                raise ConfigValidationError("seed must be an unsigned integer")
            kwargs["seed"] = seed
        return cls(**kwargs)


def load_scenario(path, *, env: dict | None = None) -> ScenarioConfig:
    """Read and validate a scenario file.

    If the ``RISSHARE_SEED`` environment variable is set it replaces the seed
    stored in the file; nothing else can be overridden from the environment.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    cfg = ScenarioConfig.from_dict(doc)
    env = os.environ if env is None else env
    if env.get(SEED_ENV_VAR):
        try:
            seed = int(env[SEED_ENV_VAR])
        except ValueError:
            raise ConfigValidationError(f"{SEED_ENV_VAR} must be an unsigned integer") from None
        cfg = cfg.replace(seed=seed)
    return cfg


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def default_scenario() -> ScenarioConfig:
    """The bundled 2-car, 3-RIS, 64-element scenario."""
    text = resources.files("risshare.data").joinpath("default_scenario.json").read_text()
    return ScenarioConfig.from_dict(json.loads(text))


# -- geometry ------------------------------------------------------------------


def _dist(a: Sequence[float], b: Sequence[float]) -> float:
    return math.dist(a, b)


def segment_distances(cfg: ScenarioConfig) -> list[list[float]]:
    """Per-transmitter hop lengths: Tx->RIS1, RIS_i->RIS_{i+1}, RIS_N->Rx."""
    chain = [_dist(a, b) for a, b in zip(cfg.ris_positions, cfg.ris_positions[1:])]
    last = _dist(cfg.ris_positions[-1], cfg.rx_position)
    out = []
    for m, tx in enumerate(cfg.tx_positions):
        d = [_dist(tx, cfg.ris_positions[0]), *chain, last]
        if min(d) <= 0:
            raise ConfigValidationError(f"transmitter {m}: coincident nodes give a zero-length segment")
        out.append(d)
    return out


def path_loss_amplitude(d: float, cfg: ScenarioConfig) -> float:
    """Amplitude factor sqrt(PL0 * d**-alpha) of a log-distance path loss."""
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return 10 ** (-cfg.reference_loss_db / 20) * d ** (-cfg.path_loss_exponent / 2)


def chain_geometry(n_ris: int, *, radius_m: float = 30.0, vertical_m: float = 20.0,
                   azimuth_deg: float = 0.0, altitude_m: float = 50.0,
                   tx_spacing_m: float = 10.0, n_tx: int = 2):
    """Positions for a stacked multi-hop layout.

    Cars sit around the origin at ``altitude_m`` spread along y.  RIS 1 is on a
    circle of ``radius_m`` around them at ``azimuth_deg`` from the forward (+x)
    axis; every further RIS is stacked ``vertical_m`` above the previous one.
    The receiver is ``2 * radius_m`` ahead of the cars at the height of the
    last RIS.
    """
    if n_ris < 1:
        raise ValueError("n_ris must be >= 1")
    offsets = (np.arange(n_tx) - (n_tx - 1) / 2) * tx_spacing_m
    tx = tuple((0.0, float(y), altitude_m) for y in offsets)
    phi = math.radians(azimuth_deg)
    x0, y0 = radius_m * math.cos(phi), radius_m * math.sin(phi)
    ris = tuple((x0, y0, altitude_m + k * vertical_m) for k in range(n_ris))
    rx = (2 * radius_m, 0.0, altitude_m + (n_ris - 1) * vertical_m)
    return tx, ris, rx


def with_chain(cfg: ScenarioConfig, n_ris: int, elements: int | None = None, **geometry) -> ScenarioConfig:
    """Copy of ``cfg`` re-laid out as an ``n_ris`` chain (see :func:`chain_geometry`)."""
    tx, ris, rx = chain_geometry(n_ris, n_tx=cfg.n_tx, **geometry)
    k = elements if elements is not None else cfg.elements_per_ris[0]
    return cfg.replace(tx_positions=tx, ris_positions=ris, rx_position=rx,
                       elements_per_ris=(int(k),) * n_ris)

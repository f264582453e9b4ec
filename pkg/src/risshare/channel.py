"""Rician channel sampling, cascaded multi-hop gain and link rate.

Signal flow for car ``m`` through ``N`` surfaces::

    y = H_N Θ_N H_{N-1} Θ_{N-1} ... H_1 Θ_1 g_m

with ``g_m`` of length ``N_1``, ``H_i`` of shape ``N_{i+1} x N_i`` and the last
hop ``H_N`` a single row (one receive antenna).  ``Θ_i`` is the unit-modulus
diagonal ``diag(exp(1j * theta_i))``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .scenario import ScenarioConfig, path_loss_amplitude

TWO_PI = 2 * np.pi


def wrap_phase(theta) -> np.ndarray:
    """Map angles into [0, 2π)."""
    t = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    t[t >= TWO_PI] = 0.0  # np.mod(-tiny, 2π) rounds to 2π
    return t


@dataclass
class PhasePlan:
    """One phase vector per surface, each entry in [0, 2π)."""

    thetas: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.thetas = tuple(np.asarray(t, dtype=float) for t in self.thetas)
        for i, t in enumerate(self.thetas):
            if t.ndim != 1:
                raise ValueError(f"phase vector {i} must be one-dimensional")
            if not np.all((t >= 0) & (t < TWO_PI)):
                raise ValueError(f"phase vector {i} has entries outside [0, 2π)")

    @classmethod
    def from_angles(cls, thetas: Sequence) -> "PhasePlan":
        return cls(tuple(wrap_phase(t) for t in thetas))

    @classmethod
    def zeros(cls, sizes: Sequence[int]) -> "PhasePlan":
        return cls(tuple(np.zeros(k) for k in sizes))

    @classmethod
    def random(cls, sizes: Sequence[int], rng: np.random.Generator) -> "PhasePlan":
        return cls(tuple(wrap_phase(rng.uniform(0.0, TWO_PI, k)) for k in sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.thetas)

    def with_hop(self, n: int, theta) -> "PhasePlan":
        """Copy with surface ``n`` (0-based) replaced."""
        thetas = list(self.thetas)
        thetas[n] = wrap_phase(theta)
        return PhasePlan(tuple(thetas))

    def phasors(self, n: int) -> np.ndarray:
        return np.exp(1j * self.thetas[n])

    def to_list(self) -> list[list[float]]:
        return [t.tolist() for t in self.thetas]


@dataclass
class ChannelSet:
    """One realization of every link.

    ``g`` has shape ``(M, N_1)``: row ``m`` is the car-``m`` to first-surface
    vector.  ``hops[i]`` is ``H_{i+1}`` in the module docstring notation.
    """

    g: np.ndarray
    hops: tuple[np.ndarray, ...]
    seed: int | None = None

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=complex))
        self.hops = tuple(np.atleast_2d(np.asarray(h, dtype=complex)) for h in self.hops)
        if not self.hops:
            raise ValueError("channel set needs at least one hop")
        n_in = self.g.shape[1]
        for i, h in enumerate(self.hops):
            if h.shape[1] != n_in:
                raise ValueError(f"hop {i} expects {h.shape[1]} inputs, chain provides {n_in}")
            n_in = h.shape[0]
        if n_in != 1:
            raise ValueError("final hop must have a single output row")

    @property
    def n_tx(self) -> int:
        return self.g.shape[0]

    @property
    def elements(self) -> tuple[int, ...]:
        return tuple(h.shape[1] for h in self.hops)

    def __eq__(self, other):
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (self.seed == other.seed and np.array_equal(self.g, other.g)
                and len(self.hops) == len(other.hops)
                and all(np.array_equal(a, b) for a, b in zip(self.hops, other.hops)))


# -- sampling ------------------------------------------------------------------


def panel_offsets(n_elements: int, spacing: float) -> np.ndarray:
    """Element coordinates of a near-square panel in the y-z plane, centered."""
    rows = math.ceil(math.sqrt(n_elements))
    cols = math.ceil(n_elements / rows)
    iy, iz = np.meshgrid(np.arange(cols), np.arange(rows), indexing="xy")
    iy, iz = iy.ravel()[:n_elements], iz.ravel()[:n_elements]
    pos = np.zeros((n_elements, 3))
    pos[:, 1] = (iy - (cols - 1) / 2) * spacing
    pos[:, 2] = (iz - (rows - 1) / 2) * spacing
    return pos


def los_matrix(src, dst, src_offsets, dst_offsets, wavelength) -> np.ndarray:
    """Far-field line-of-sight matrix (dst elements x src elements), unit modulus."""
    delta = np.asarray(dst, float) - np.asarray(src, float)
    d = np.linalg.norm(delta)
    u = delta / d
    k0 = TWO_PI / wavelength
    depart = src_offsets @ u
    arrive = dst_offsets @ u
    return np.exp(-1j * k0 * (d - depart[None, :] + arrive[:, None]))


def rician(los: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    if math.isinf(beta):
        return los.copy()
    nlos = (rng.standard_normal(los.shape) + 1j * rng.standard_normal(los.shape)) / np.sqrt(2)
    return np.sqrt(beta / (beta + 1)) * los + np.sqrt(1 / (beta + 1)) * nlos


def segment_streams(seed: int, count: int) -> list[np.random.Generator]:
    """Independent Philox streams, one per link segment."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def sample_channels(cfg: ScenarioConfig, seed: int | None = None) -> ChannelSet:
    """Draw every car-RIS, RIS-RIS and RIS-receiver link of ``cfg``.

    Each segment has its own counter-based stream, so a given link's draw does
    not depend on how many other links the scenario has before it.
    """
    seed = cfg.seed if seed is None else seed
    lam = cfg.wavelength_m
    offsets = [panel_offsets(k, lam / 2) for k in cfg.elements_per_ris]
    single = np.zeros((1, 3))
    streams = segment_streams(seed, cfg.n_tx + cfg.n_ris)

    ris = cfg.ris_positions
    g = []
    for m, tx in enumerate(cfg.tx_positions):
        los = los_matrix(tx, ris[0], single, offsets[0], lam)[:, 0]
        amp = path_loss_amplitude(math.dist(tx, ris[0]), cfg)
        g.append(amp * rician(los, cfg.rician_factor_g, streams[m]))

    hops = []
    for i in range(cfg.n_ris):
        last = i == cfg.n_ris - 1
        dst = cfg.rx_position if last else ris[i + 1]
        dst_off = single if last else offsets[i + 1]
        los = los_matrix(ris[i], dst, offsets[i], dst_off, lam)
        amp = path_loss_amplitude(math.dist(ris[i], dst), cfg)
        hops.append(amp * rician(los, cfg.rician_factor_h, streams[cfg.n_tx + i]))
    return ChannelSet(np.array(g), tuple(hops), seed)


# -- evaluation ----------------------------------------------------------------


def _check_plan(ch: ChannelSet, plan: PhasePlan):
    if plan.sizes != ch.elements:
        raise ValueError(f"phase plan sizes {plan.sizes} do not match channel {ch.elements}")


def cascade_gains(ch: ChannelSet, plan: PhasePlan) -> np.ndarray:
    """End-to-end complex gain of every car, shape ``(M,)``."""
    _check_plan(ch, plan)
    x = ch.g.T
    for i, h in enumerate(ch.hops):
        x = h @ (plan.phasors(i)[:, None] * x)
    return x[0]


def cascade_gain(ch: ChannelSet, plan: PhasePlan, m: int) -> complex:
    _check_plan(ch, plan)
    x = ch.g[m]
    for i, h in enumerate(ch.hops):
        x = h @ (plan.phasors(i) * x)
    return complex(x[0])


def rate(gain, cfg: ScenarioConfig, m: int):
    """Shannon rate B log2(1 + |gain|² P / σ²) in bit/s."""
    snr = np.abs(gain) ** 2 * cfg.tx_power_w[m] / cfg.noise_power_w
    return cfg.bandwidth_hz[m] * np.log1p(snr) / np.log(2)


def rates(ch: ChannelSet, plan: PhasePlan, cfg: ScenarioConfig) -> np.ndarray:
    gains = cascade_gains(ch, plan)
    return np.array([rate(gains[m], cfg, m) for m in range(len(gains))])


def transmit_delay(size_bits: float, rate_bps: float) -> float:
    """Seconds to push ``size_bits`` at ``rate_bps``; ``inf`` marks a blocked link."""
    if size_bits == 0:
        return 0.0
    if rate_bps <= 0:
        return math.inf
    return size_bits / rate_bps


# -- fixtures on disk -------------------------------------------------------------
#
# JSON: {"format": "risshare.channelset", "version": 1, "seed": int|null,
#        "g": {"shape": [M, N1], "data": [...]}, "hops": [{"shape": [r, c], "data": [...]}, ...]}
# Binary: magic b"RISCHAN1", int64 seed (-1 for none), uint64 array count, then per
#         array uint64 rows, uint64 cols, rows*cols*2 float64.  All little endian.
# In both, "data" is the row-major array with real and imaginary parts interleaved.

_MAGIC = b"RISCHAN1"


def _interleave(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.complex128).view(np.float64).ravel()


def _deinterleave(data, shape) -> np.ndarray:
    flat = np.asarray(data, dtype="<f8")
    if flat.size != 2 * shape[0] * shape[1]:
        raise ValueError("array payload does not match its shape")
    return flat.view(np.complex128).reshape(shape).copy()


def save_channels(ch: ChannelSet, path) -> None:
    """Write ``ch`` as JSON (``.json`` suffix) or the flat binary layout."""
    path = Path(path)
    arrays = [ch.g, *ch.hops]
    if path.suffix == ".json":
        doc = {
            "format": "risshare.channelset", "version": 1, "seed": ch.seed,
            "g": {"shape": list(ch.g.shape), "data": _interleave(ch.g).tolist()},
            "hops": [{"shape": list(h.shape), "data": _interleave(h).tolist()} for h in ch.hops],
        }
        path.write_text(json.dumps(doc))
        return
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<qQ", -1 if ch.seed is None else ch.seed, len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<QQ", *a.shape))
            fh.write(_interleave(a).astype("<f8").tobytes())


def load_channels(path) -> ChannelSet:
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if doc.get("format") != "risshare.channelset":
            raise ValueError(f"{path}: not a channel set file")
        g = _deinterleave(doc["g"]["data"], doc["g"]["shape"])
        hops = tuple(_deinterleave(h["data"], h["shape"]) for h in doc["hops"])
        return ChannelSet(g, hops, doc.get("seed"))
    buf = path.read_bytes()
    if buf[:8] != _MAGIC:
        raise ValueError(f"{path}: bad magic")
    seed, count = struct.unpack_from("<qQ", buf, 8)
    off = 24
    arrays = []
    for _ in range(count):
        rows, cols = struct.unpack_from("<QQ", buf, off)
        off += 16
        n = rows * cols * 2
        arrays.append(_deinterleave(np.frombuffer(buf, "<f8", n, off), (rows, cols)))
        off += 8 * n
    return ChannelSet(arrays[0], tuple(arrays[1:]), None if seed < 0 else seed)

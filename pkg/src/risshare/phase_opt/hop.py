"""Single-surface subproblem of the block coordinate descent.

With every surface but ``n`` held fixed, car ``m``'s gain is linear in the
phasors of surface ``n``::

    gain_m = sum_i exp(1j * theta_i) * a_m[i]  =  v^H a_m,   v = exp(-1j * theta)

where ``a_m = diag(h_n) u_{m,n}``, ``u_{m,n}`` is the signal arriving at surface
``n`` and ``h_n`` the row mapping surface ``n``'s output to the receiver.

All hop indices in this package are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..channel import ChannelSet, PhasePlan, TWO_PI, cascade_gains, wrap_phase
from ..scenario import ScenarioConfig


class DegenerateHopError(ValueError):
    """Every a-vector is zero; no phase choice changes the objective."""


@dataclass
class HopProblem:
    a: np.ndarray          # (M, N_n) complex, one row per car
    zetas: np.ndarray      # (M,) positive weights
    hop_index: int

    def __post_init__(self):
        self.a = np.atleast_2d(np.asarray(self.a, dtype=complex))
        self.zetas = np.asarray(self.zetas, dtype=float).reshape(-1)
        if self.zetas.shape[0] != self.a.shape[0]:
            raise ValueError("need one zeta per a-vector")
        if not np.all(self.zetas > 0) or not np.all(np.isfinite(self.zetas)):
            raise ValueError("zetas must be finite and > 0")

    @property
    def n_tx(self) -> int:
        return self.a.shape[0]

    @property
    def n_elements(self) -> int:
        return self.a.shape[1]

    @property
    def zero_rows(self) -> np.ndarray:
        return ~np.any(self.a != 0, axis=1)

    @property
    def degenerate(self) -> bool:
        """Some car's a-vector is zero, so the max-min value is 0 whatever the phases."""
        return bool(self.zero_rows.any())

    def gains(self, theta) -> np.ndarray:
        """Complex gains; ``theta`` of shape (N_n,) or (P, N_n) for a batch."""
        return np.exp(1j * np.asarray(theta)) @ self.a.T

    def value(self, theta):
        """min_m zeta_m |gain_m|^2 (vectorized over a leading batch axis)."""
        return np.min(self.zetas * np.abs(self.gains(theta)) ** 2, axis=-1)

    def value_of_v(self, v) -> float:
        """Objective for a unit-modulus vector in ``v^H a`` form."""
        return float(np.min(self.zetas * np.abs(self.a @ np.conj(v)) ** 2))

    def alignment_value(self) -> float:
        """zeta_1 (sum_i |a_1i|)^2, the exact optimum when M = 1."""
        if self.n_tx != 1:
            raise ValueError("alignment optimum is only exact for a single car")
        return float(self.zetas[0] * np.sum(np.abs(self.a[0])) ** 2)


def incoming(ch: ChannelSet, plan: PhasePlan, n: int) -> np.ndarray:
    """Signals reaching surface ``n``, shape (N_n, M)."""
    x = ch.g.T
    for i in range(n):
        x = ch.hops[i] @ (plan.phasors(i)[:, None] * x)
    return x


def outgoing(ch: ChannelSet, plan: PhasePlan, n: int) -> np.ndarray:
    """Row ``h_n`` from surface ``n`` (pre-phase) to the receiver, shape (N_n,)."""
    r = ch.hops[-1][0]
    for i in range(len(ch.hops) - 2, n - 1, -1):
        r = (r * plan.phasors(i + 1)) @ ch.hops[i]
    return r


def build_hop_problem(ch: ChannelSet, plan: PhasePlan, n: int, zetas) -> HopProblem:
    if plan.sizes != ch.elements:
        raise ValueError(f"phase plan sizes {plan.sizes} do not match channel {ch.elements}")
    if not 0 <= n < len(ch.hops):
        raise ValueError(f"hop index {n} outside 0..{len(ch.hops) - 1}")
    zetas = np.asarray(zetas, dtype=float).reshape(-1)
    if zetas.shape[0] != ch.n_tx:
        raise ValueError(f"need {ch.n_tx} zetas, got {zetas.shape[0]}")
    u = incoming(ch, plan, n)
    h = outgoing(ch, plan, n)
    return HopProblem(a=(h[:, None] * u).T, zetas=zetas, hop_index=n)


def theta_from_v(v) -> np.ndarray:
    """Phase shifts realizing unit-modulus ``v`` in ``v^H a`` form."""
    return wrap_phase(-np.angle(v))


def fast_hop(problem: HopProblem, beta_a: float = 1.0) -> np.ndarray:
    """Closed-form phases from the weighted sum of per-car aligned directions.

    Each car's a-vector is normalized elementwise by ``zeta_m |a_m|^beta_a``
    and the phases of the sum are used.  For a single car this is exact
    co-phasing, which maximizes ``|v^H a|``.
    """
    a = problem.a
    if not np.any(a != 0):
        raise DegenerateHopError("all a-vectors are zero")
    mag = np.abs(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mag > 0, a / (problem.zetas[:, None] * mag ** beta_a), 0)
    v = np.exp(1j * np.angle(terms.sum(axis=0)))
    return theta_from_v(v)


def random_hop(problem: HopProblem, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return wrap_phase(rng.uniform(0.0, TWO_PI, problem.n_elements))


def objective(ch: ChannelSet, plan: PhasePlan, zetas) -> float:
    """Full-chain max-min objective min_m zeta_m |gain_m|^2."""
    return float(np.min(np.asarray(zetas) * np.abs(cascade_gains(ch, plan)) ** 2))


def kd_time(catalog, index: int, f_a: float) -> float:
    """KD integration time F(i)/f_A."""
    return catalog[index].kd_flops / f_a


def compute_zetas(cfg: ScenarioConfig, i_local, i_rx: int) -> np.ndarray:
    """Gain weights turning the delay budget into a channel-gain threshold.

    Raises ``ValueError`` when the KD time alone exhausts the budget.
    """
    budget = cfg.t_max_s - kd_time(cfg.receiver_catalog, i_rx, cfg.compute_freq_flops)
    if budget <= 0:
        raise ValueError(
            f"delay constraint infeasible: KD time of receiver model {i_rx} "
            f">= t_max ({cfg.t_max_s} s)")
    out = np.empty(cfg.n_tx)
    for m, i in enumerate(i_local):
        size = cfg.catalogs[m][i].size_bits
        expo = size / (cfg.bandwidth_hz[m] * budget)
        denom = cfg.noise_power_w * math.expm1(expo * math.log(2)) if expo < 1000 else math.inf
        if denom == 0:
            raise ValueError(f"car {m}: zero-size model gives an unbounded gain weight")
        out[m] = cfg.tx_power_w[m] / denom
        if not out[m] > 0:
            raise ValueError(f"car {m}: model {i} cannot meet the delay budget at any rate")
    return out

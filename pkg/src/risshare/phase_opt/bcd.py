"""Block coordinate descent over surfaces with a pluggable per-surface solver."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..channel import ChannelSet, PhasePlan, cascade_gains, rate
from ..scenario import ScenarioConfig
from .ga import GaParams, ga_hop
from .hop import build_hop_problem, fast_hop, objective
from .sdp import sdr_hop

METHODS = ("sdr", "fast", "ga", "random")
TRACE_COLUMNS = ("outer_iter", "hop", "method", "objective", "min_rate_bps", "wall_ms")


@dataclass
class TraceRow:
    outer_iter: int     # 1-based
    hop: int            # 1-based
    method: str
    objective: float
    min_rate_bps: float
    wall_ms: float = 0.0

    def as_tuple(self):
        return (self.outer_iter, self.hop, self.method, self.objective, self.min_rate_bps, self.wall_ms)


@dataclass
class BcdResult:
    plan: PhasePlan
    objective: float
    trace: list[TraceRow] = field(default_factory=list)
    degenerate_hops: list[int] = field(default_factory=list)   # 0-based

    def write_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.trace:
                w.writerow([r.outer_iter, r.hop, r.method, repr(r.objective),
                            repr(r.min_rate_bps), f"{r.wall_ms:.3f}"])


def min_rate(ch: ChannelSet, plan: PhasePlan, cfg: ScenarioConfig) -> float:
    gains = cascade_gains(ch, plan)
    return float(min(rate(g, cfg, m) for m, g in enumerate(gains)))


def _hop_seed(seed, k, n):
    base = [int(x) for x in seed] if isinstance(seed, (tuple, list)) else [int(seed)]
    return np.random.SeedSequence([*base, k, n])


def check_zetas(zetas, n_tx: int) -> np.ndarray:
    zetas = np.asarray(zetas, dtype=float).reshape(-1)
    if zetas.shape[0] != n_tx:
        raise ValueError(f"need {n_tx} zetas, got {zetas.shape[0]}")
    if not np.all(np.isfinite(zetas) & (zetas > 0)):
        raise ValueError("delay constraint infeasible: every zeta must be finite and > 0 "
                         "(KD time must stay below t_max)")
    return zetas


def bcd_optimize(ch: ChannelSet, cfg: ScenarioConfig, zetas, method: str = "sdr", k_max: int = 5,
                 plan: PhasePlan | None = None, seed=0, trials: int = 200, beta_a: float = 1.0,
                 ga_params: GaParams | None = None, timing: bool = False) -> BcdResult:
    """Sweep surfaces 1..N for ``k_max`` outer iterations.

    A surface's phases are replaced only when the per-surface solution does
    not lower ``min_m zeta_m |gain_m|^2`` (exact comparison), so the trace is
    nondecreasing.  ``random`` draws one uniform plan and holds it, giving a
    flat trace.  A surface is skipped when no other surface has changed
    since its last solve, because its subproblem is then identical.  One
    trace row is recorded per surface visit.  ``wall_ms`` is
    filled only when ``timing`` is set so that traces stay reproducible.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    zetas = check_zetas(zetas, ch.n_tx)
    if plan is None:
        plan = PhasePlan.zeros(ch.elements)
    n_hops = len(ch.hops)

    if method == "random":
        plan = PhasePlan.random(ch.elements, np.random.default_rng(_hop_seed(seed, 0, 0)))

    obj = objective(ch, plan, zetas)
    trace, degenerate = [], set()
    step, changed_at, solved_at = 0, [0] * n_hops, [None] * n_hops
    for k in range(1, k_max + 1):
        for n in range(n_hops):
            step += 1
            t0 = time.perf_counter()
            stale = solved_at[n] is None or any(
                changed_at[j] > solved_at[n] for j in range(n_hops) if j != n)
            if method != "random" and stale:
                solved_at[n] = step
                prob = build_hop_problem(ch, plan, n, zetas)
                if prob.degenerate:
                    degenerate.add(n)
                else:
                    hs = _hop_seed(seed, k, n)
                    if method == "sdr":
                        theta = sdr_hop(prob, trials=trials, seed=hs).extracted_phases
                    elif method == "fast":
                        theta = fast_hop(prob, beta_a)
                    else:
                        theta = ga_hop(prob, ga_params, seed=hs, init=plan.thetas[n])
                    cand = plan.with_hop(n, theta)
                    cand_obj = objective(ch, cand, zetas)
                    if cand_obj >= obj:
                        plan, obj = cand, cand_obj
                        changed_at[n] = step
            wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
            trace.append(TraceRow(k, n + 1, method, obj, min_rate(ch, plan, cfg), wall))
    return BcdResult(plan, obj, trace, sorted(degenerate))

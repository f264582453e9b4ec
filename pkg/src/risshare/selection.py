"""Model selection under the delay budget and the alternation with phase optimization.

The joint reward of a selection ``(i_1..i_M, i_A)`` is::

    sum_m w_m i_m + w_{M+1} i_A - w_{M+2} max_m S_m(i_m) / R_m

subject to ``max_m S_m(i_m) / R_m + F(i_A) / f_A <= t_max``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .channel import PhasePlan, rates as link_rates, sample_channels, transmit_delay
from .phase_opt.bcd import bcd_optimize
from .phase_opt.ga import GaParams
from .phase_opt.hop import compute_zetas, kd_time
from .scenario import ModelCatalog, ScenarioConfig

__all__ = ["Selection", "MrmpRecord", "MrmpReport", "kd_time", "select_models",
           "enumerate_models", "objective", "mrmp", "smallest_selection"]


@dataclass(frozen=True)
class Selection:
    i_local: tuple[int, ...]          # 1-based index per local car
    i_rx: int                         # 1-based receiver index
    feasible: bool
    delay_s: float                    # max_m S_m(i_m) / R_m
    kd_time_s: float
    sizes_bits: tuple[float, ...] = ()
    reason: str = ""

    @property
    def total_time_s(self) -> float:
        return self.delay_s + self.kd_time_s

    def to_dict(self) -> dict:
        d = asdict(self)
        d["i_local"] = list(self.i_local)
        d["sizes_bits"] = list(self.sizes_bits)
        return d


def _delay(sizes, rates) -> float:
    return float(max(transmit_delay(float(s), float(r)) for s, r in zip(sizes, rates)))


def _split(catalogs: Sequence[ModelCatalog]):
    if len(catalogs) < 2:
        raise ValueError("need one catalog per local car plus one for the receiver")
    return list(catalogs[:-1]), catalogs[-1]


def _check_inputs(rates, local, weights):
    rates = np.asarray(rates, dtype=float).reshape(-1)
    if rates.shape[0] != len(local):
        raise ValueError(f"got {rates.shape[0]} rates for {len(local)} cars")
    if np.any(rates < 0) or np.any(np.isnan(rates)):
        raise ValueError("rates must be >= 0")
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(local) + 2,) or np.any(weights < 0):
        raise ValueError(f"need {len(local) + 2} nonnegative weights")
    return rates, weights


def _make(i_local, i_rx, rates, local, rx, t_max, f_a, reason="") -> Selection:
    sizes = tuple(c[i].size_bits for c, i in zip(local, i_local))
    delay = _delay(sizes, rates)
    kd = float(kd_time(rx, i_rx, f_a))
    feasible = delay + kd <= t_max
    return Selection(tuple(int(i) for i in i_local), int(i_rx), bool(feasible), delay, kd,
                     sizes, "" if feasible else reason or "delay budget exceeded")


def reward(i_local, i_rx, weights) -> float:
    """Index part of the joint reward (no delay term)."""
    return float(sum(w * i for w, i in zip(weights[:-2], i_local)) + weights[-2] * i_rx)


def select_models(rates, catalogs: Sequence[ModelCatalog], weights, t_max: float,
                  f_a: float) -> Selection:
    """Exact maximizer of the index reward under the delay budget.

    ``catalogs`` lists the local cars' catalogs followed by the receiver's.
    For every receiver index (largest first) each car independently takes the
    largest model whose delay fits the remaining budget.  The reward is
    separable and the cars only share the budget, so this is exact.  Ties
    go to the larger receiver index.
    """
    local, rx = _split(catalogs)
    rates, weights = _check_inputs(rates, local, weights)
    best, best_val = None, -math.inf
    for i_a in range(len(rx), 0, -1):
        kd = kd_time(rx, i_a, f_a)
        picks = []
        for c, r in zip(local, rates):
            ok = [i for i in range(1, len(c) + 1) if transmit_delay(c[i].size_bits, r) + kd <= t_max]
            if not ok:
                break
            picks.append(ok[-1])
        else:
            val = reward(picks, i_a, weights)
            if val > best_val:
                best, best_val = (picks, i_a), val
    if best is None:
        return _make([1] * len(local), 1, rates, local, rx, t_max, f_a,
                     reason="smallest models exceed the delay budget")
    return _make(best[0], best[1], rates, local, rx, t_max, f_a)


def enumerate_models(rates, catalogs: Sequence[ModelCatalog], weights, t_max: float,
                     f_a: float) -> Selection:
    """Exhaustive search over every combination (reference for :func:`select_models`).

    Among equal rewards the lexicographically largest ``(i_A, i_1, .., i_M)``
    wins, matching the tie rule of the separable solver.
    """
    local, rx = _split(catalogs)
    rates, weights = _check_inputs(rates, local, weights)
    best, best_key = None, None
    for combo in itertools.product(*(range(1, len(c) + 1) for c in local)):
        sizes = [c[i].size_bits for c, i in zip(local, combo)]
        delay = _delay(sizes, rates)
        for i_a in range(1, len(rx) + 1):
            if delay + kd_time(rx, i_a, f_a) <= t_max:
                key = (reward(combo, i_a, weights), i_a, *combo)
                if best_key is None or key > best_key:
                    best, best_key = (combo, i_a), key
    if best is None:
        return _make([1] * len(local), 1, rates, local, rx, t_max, f_a,
                     reason="smallest models exceed the delay budget")
    return _make(best[0], best[1], rates, local, rx, t_max, f_a)


def objective(selection: Selection, rates, weights) -> float:
    """Joint reward including the delay penalty, recomputed at ``rates``."""
    if not selection.feasible:
        raise ValueError(f"objective undefined for an infeasible selection: {selection.reason}")
    weights = np.asarray(weights, dtype=float)
    delay = _delay(selection.sizes_bits, np.asarray(rates, dtype=float).reshape(-1))
    return float(reward(selection.i_local, selection.i_rx, weights) - weights[-1] * delay)


def smallest_selection(cfg: ScenarioConfig, rates) -> Selection:
    return _make([1] * cfg.n_tx, 1, np.asarray(rates, float), cfg.catalogs, cfg.receiver_catalog,
                 cfg.t_max_s, cfg.compute_freq_flops)


# -- alternation -----------------------------------------------------------------


@dataclass
class MrmpRecord:
    iteration: int
    objective: float | None        # None when the iterate is infeasible
    best_objective: float | None
    selection: Selection
    min_rate_bps: float
    delay_s: float


@dataclass
class MrmpReport:
    method: str
    seed: int
    records: list[MrmpRecord]
    plan: PhasePlan
    selection: Selection
    best_iteration: int
    feasible: bool
    objective: float | None
    rates_bps: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method, "seed": self.seed, "feasible": self.feasible,
            "objective": self.objective, "best_iteration": self.best_iteration,
            "selection": self.selection.to_dict(), "rates_bps": list(self.rates_bps),
            "plan": self.plan.to_list(),
            "records": [{"iteration": r.iteration, "objective": r.objective,
                         "best_objective": r.best_objective, "min_rate_bps": r.min_rate_bps,
                         "delay_s": r.delay_s, "selection": r.selection.to_dict()}
                        for r in self.records],
        }

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "objective", "best_objective", "feasible", "i_local", "i_rx",
                        "min_rate_bps", "delay_s"])
            for r in self.records:
                w.writerow([r.iteration, "" if r.objective is None else repr(r.objective),
                            "" if r.best_objective is None else repr(r.best_objective),
                            int(r.selection.feasible), " ".join(map(str, r.selection.i_local)),
                            r.selection.i_rx, repr(r.min_rate_bps), repr(r.delay_s)])


def mrmp(cfg: ScenarioConfig, method: str = "sdr", k_max: int = 5, seed: int | None = None,
         trials: int = 200, beta_a: float = 1.0, ga_params: GaParams | None = None,
         channels=None) -> MrmpReport:
    """Alternate one BCD pass with exact model selection for ``k_max`` rounds.

    Starts from the smallest models and a uniformly random plan.  The gain
    weights of each pass come from the current selection; when a round's
    selection is infeasible the smallest models are used instead, and when
    even their KD time exhausts the budget the pass maximizes the plain
    minimum gain.  The
    report carries the best feasible iterate and the full per-round record.
    """
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    seed = cfg.seed if seed is None else seed
    ch = channels if channels is not None else sample_channels(cfg, seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    plan = PhasePlan.random(ch.elements, rng)
    catalogs = list(cfg.catalogs) + [cfg.receiver_catalog]
    weights = np.asarray(cfg.weights)

    def evaluate(k, sel, r, best):
        val = objective(sel, r, weights) if sel.feasible else None
        if val is not None and (best is None or val > best[0]):
            best = (val, k, sel, plan, r)
        rec = MrmpRecord(k, val, None if best is None else best[0], sel,
                         float(np.min(r)), sel.delay_s)
        return rec, best

    r = link_rates(ch, plan, cfg)
    sel = smallest_selection(cfg, r)
    rec, best = evaluate(0, sel, r, None)
    records = [rec]
    for k in range(1, k_max + 1):
        basis = sel if sel.feasible else smallest_selection(cfg, r)
        try:
            zetas = compute_zetas(cfg, basis.i_local, basis.i_rx)
        except ValueError:
            zetas = np.ones(cfg.n_tx)   # no gain threshold exists; fall back to plain max-min rate
        # the random baseline keeps one draw for the whole run
        round_seed = (int(seed), 0 if method == "random" else k)
        res = bcd_optimize(ch, cfg, zetas, method, k_max=1, plan=plan, seed=round_seed,
                           trials=trials, beta_a=beta_a, ga_params=ga_params)
        plan = res.plan
        r = link_rates(ch, plan, cfg)
        sel = select_models(r, catalogs, weights, cfg.t_max_s, cfg.compute_freq_flops)
        rec, best = evaluate(k, sel, r, best)
        records.append(rec)

    if best is None:
        return MrmpReport(method, int(seed), records, plan, sel, k_max, False, None,
                          [float(x) for x in r])
    val, k_best, sel_best, plan_best, r_best = best
    return MrmpReport(method, int(seed), records, plan_best, sel_best, k_best, True, val,
                      [float(x) for x in r_best])

"""Parameter sweeps over geometry, hop count, element count and methods.

Every sweep produces a :class:`ResultTable` with one ``run`` row per
(grid point, method, seed) followed by ``mean`` and ``std`` rows per
(grid point, method).  Rows are sorted, so the table depends only on the
spec and the base scenario, never on worker scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..channel import PhasePlan, sample_channels
from ..phase_opt import METHODS, bcd_optimize, compute_zetas
from ..scenario import ScenarioConfig, with_chain
from ..selection import mrmp

KINDS = ("hops", "elements", "azimuth", "vdist", "iterations", "reward", "selection", "kd")
KD_METHODS = ("plain", "kd")
COLUMNS = ("kind", "point", "method", "stat", "seed", "feasible", "min_rate_bps", "objective",
           "i_local", "i_rx")

DEFAULT_GRIDS = {
    "hops": [1, 2, 3, 4, 5],
    "elements": [36, 49, 64, 81],
    "azimuth": [0, 15, 30, 45, 60],
    "vdist": [15, 20, 25, 30],
    "iterations": [1, 2, 3, 4, 5],
    "reward": [1, 2, 3],
    "selection": [1, 2, 3],
    "kd": [1, 4, 8, 15],
}


@dataclass(frozen=True)
class SweepSpec:
    kind: str
    grid: tuple = ()
    methods: tuple[str, ...] | None = None     # None: every method valid for the kind
    seeds: int = 50
    k_max: int = 3
    trials: int = 200
    workers: int = 1
    kd_steps: int = 500

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; expected one of {KINDS}")
        grid = tuple(self.grid) if self.grid else tuple(DEFAULT_GRIDS[self.kind])
        object.__setattr__(self, "grid", grid)
        allowed = KD_METHODS if self.kind == "kd" else METHODS
        object.__setattr__(self, "methods", allowed if self.methods is None else tuple(self.methods))
        if not self.methods:
            raise ValueError("sweep needs at least one method")
        bad = [m for m in self.methods if m not in allowed]
        if bad:
            raise ValueError(f"methods {bad} not valid for a {self.kind} sweep; use {allowed}")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.kind in ("hops", "elements", "reward", "selection", "iterations"):
            if any(int(g) != g or g < 1 for g in grid):
                raise ValueError(f"{self.kind} grid needs positive integers")
        if self.kind == "kd" and any(g <= 0 for g in grid):
            raise ValueError("kd grid holds temperatures, which must be > 0")


@dataclass
class ResultTable:
    kind: str
    rows: list[dict] = field(default_factory=list)
    columns: tuple[str, ...] = COLUMNS

    def runs(self, point=None, method=None) -> list[dict]:
        return [r for r in self.rows if r["stat"] == "run"
                and (point is None or r["point"] == point)
                and (method is None or r["method"] == method)]

    def stat(self, point, method, stat="mean", column="min_rate_bps"):
        for r in self.rows:
            if r["stat"] == stat and r["point"] == point and r["method"] == method:
                return r[column]
        raise KeyError((point, method, stat))

    @property
    def all_infeasible(self) -> bool:
        runs = self.runs()
        return bool(runs) and not any(r["feasible"] for r in runs)


def _row(kind, point, method, seed, feasible, rate, obj, i_local=None, i_rx=None, stat="run"):
    return {"kind": kind, "point": point, "method": method, "stat": stat, "seed": seed,
            "feasible": bool(feasible), "min_rate_bps": None if rate is None else float(rate),
            "objective": None if obj is None else float(obj),
            "i_local": None if i_local is None else " ".join(str(i) for i in i_local),
            "i_rx": i_rx}


def _cfg_for(kind, point, base: ScenarioConfig) -> ScenarioConfig:
    if kind in ("hops", "reward", "selection"):
        return with_chain(base, int(point))
    if kind == "elements":
        return base.replace(elements_per_ris=(int(point),) * base.n_ris)
    if kind == "azimuth":
        return with_chain(base, base.n_ris, azimuth_deg=float(point))
    if kind == "vdist":
        return with_chain(base, base.n_ris, vertical_m=float(point))
    return base


def _bcd_job(kind, point, method, seed, spec: SweepSpec, base: ScenarioConfig, k_max):
    cfg = _cfg_for(kind, point, base)
    ch = sample_channels(cfg, seed)
    plan = PhasePlan.random(ch.elements, np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])))
    try:
        zetas = compute_zetas(cfg, [1] * cfg.n_tx, 1)
    except ValueError:
        return [(point, _row(kind, point, method, seed, False, None, None))]
    res = bcd_optimize(ch, cfg, zetas, method, k_max=k_max, plan=plan, seed=seed, trials=spec.trials)
    if kind != "iterations":
        return [(point, _row(kind, point, method, seed, True, res.trace[-1].min_rate_bps, res.objective))]
    n_hops = len(ch.hops)
    out = []
    for k in spec.grid:
        last = res.trace[int(k) * n_hops - 1]
        out.append((k, _row(kind, k, method, seed, True, last.min_rate_bps, last.objective)))
    return out


def _mrmp_job(kind, point, method, seed, spec: SweepSpec, base: ScenarioConfig):
    cfg = _cfg_for(kind, point, base)
    rep = mrmp(cfg, method, k_max=spec.k_max, seed=seed, trials=spec.trials)
    rate = min(rep.rates_bps) if rep.rates_bps else None
    return [(point, _row(kind, point, method, seed, rep.feasible, rate, rep.objective,
                         rep.selection.i_local, rep.selection.i_rx))]


def _kd_job(kind, point, method, seed, spec: SweepSpec, base):
    from ..kd import kd_demo   # the sandbox is only needed for kd sweeps
    res = kd_demo(seed, tau=float(point), steps=spec.kd_steps)
    acc = res["kd_acc"] if method == "kd" else res["plain_acc"]
    return [(point, _row(kind, point, method, seed, True, None, acc))]


def _run_job(args):
    kind, point, method, seed, spec, base = args
    if kind == "kd":
        return _kd_job(kind, point, method, seed, spec, base)
    if kind in ("reward", "selection"):
        return _mrmp_job(kind, point, method, seed, spec, base)
    k_max = int(max(spec.grid)) if kind == "iterations" else spec.k_max
    return _bcd_job(kind, point, method, seed, spec, base, k_max)


def _aggregate(kind, point, method, runs):
    out = []
    for stat in ("mean", "std"):
        vals = {}
        for col in ("min_rate_bps", "objective"):
            xs = [r[col] for r in runs if r[col] is not None]
            if not xs:
                vals[col] = None
            elif stat == "mean":
                vals[col] = float(np.mean(xs))
            else:
                vals[col] = float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0
        feasible = sum(r["feasible"] for r in runs) == len(runs)
        out.append(_row(kind, point, method, None, feasible, vals["min_rate_bps"],
                        vals["objective"], stat=stat))
    return out


def seed_list(base: ScenarioConfig, count: int) -> list[int]:
    return [base.seed + i for i in range(count)]


def run_sweep(spec: SweepSpec, base: ScenarioConfig) -> ResultTable:
    seeds = seed_list(base, spec.seeds)
    points = spec.grid if spec.kind != "iterations" else (None,)
    jobs = [(spec.kind, p, m, s, spec, base) for p in points for m in spec.methods for s in seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]

    rows = [row for res in results for _, row in res]
    method_rank = {m: i for i, m in enumerate(spec.methods)}
    point_rank = {p: i for i, p in enumerate(spec.grid)}
    rows.sort(key=lambda r: (point_rank[r["point"]], method_rank[r["method"]], r["seed"]))

    table = []
    for p in spec.grid:
        for m in spec.methods:
            runs = [r for r in rows if r["point"] == p and r["method"] == m]
            table.extend(runs)
            table.extend(_aggregate(spec.kind, p, m, runs))
    return ResultTable(spec.kind, table)


def selection_grid(table: ResultTable) -> list[dict]:
    """Most frequent chosen models per (method, point) for a selection sweep."""
    out = []
    for m in dict.fromkeys(r["method"] for r in table.runs()):
        for p in dict.fromkeys(r["point"] for r in table.runs(method=m)):
            runs = [r for r in table.runs(p, m) if r["feasible"]]
            if not runs:
                out.append({"method": m, "point": p, "i_local": None, "i_rx": None, "share": 0.0})
                continue
            keys = [(r["i_local"], r["i_rx"]) for r in runs]
            best = max(dict.fromkeys(keys), key=keys.count)
            out.append({"method": m, "point": p, "i_local": best[0], "i_rx": best[1],
                        "share": keys.count(best) / len(table.runs(p, m))})
    return out


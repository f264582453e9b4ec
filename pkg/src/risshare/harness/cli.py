"""Command line entry point.

Exit status: 0 on success, 2 for invalid input or configuration, 3 when the
run completed but nothing it produced is feasible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..channel import PhasePlan, cascade_gains, rates, sample_channels, save_channels
from ..phase_opt import METHODS, TRACE_COLUMNS, bcd_optimize, compute_zetas
from ..scenario import SEED_ENV_VAR, ScenarioError, default_scenario, load_scenario
from ..selection import mrmp, select_models
from .report import encode, emit_report, write_text
from .sweep import KINDS, SweepSpec, run_sweep

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3


class Infeasible(Exception):
    """Raised after output is written when the run found nothing feasible."""


def _scenario(args):
    if args.scenario:
        cfg = load_scenario(args.scenario)
    else:
        cfg = default_scenario()
        env = os.environ.get(SEED_ENV_VAR)
        if env:
            try:
                cfg = cfg.replace(seed=int(env))
            except ValueError:
                raise ScenarioError(f"{SEED_ENV_VAR} must be an unsigned integer") from None
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _initial_plan(ch, seed):
    return PhasePlan.random(ch.elements, np.random.default_rng(np.random.SeedSequence([seed, 0x5EED])))


def _emit(args, columns, rows, kind):
    write_text(encode(columns, rows, args.format, kind), args.out)


def cmd_simulate(args, cfg):
    ch = sample_channels(cfg)
    if args.channels_out:
        save_channels(ch, args.channels_out)
    plan = _initial_plan(ch, cfg.seed) if args.plan == "random" else PhasePlan.zeros(ch.elements)
    g = cascade_gains(ch, plan)
    r = rates(ch, plan, cfg)
    rows = [{"car": m + 1, "gain_re": float(g[m].real), "gain_im": float(g[m].imag),
             "gain_abs2": float(abs(g[m]) ** 2), "rate_bps": float(r[m])} for m in range(cfg.n_tx)]
    _emit(args, ("car", "gain_re", "gain_im", "gain_abs2", "rate_bps"), rows, "simulate")


def _optimize(args, cfg, i_local=None, i_rx=1):
    ch = sample_channels(cfg)
    zetas = compute_zetas(cfg, i_local or [1] * cfg.n_tx, i_rx)
    res = bcd_optimize(ch, cfg, zetas, args.method, k_max=args.kmax, plan=_initial_plan(ch, cfg.seed),
                       seed=cfg.seed, trials=args.trials, beta_a=args.beta_a, timing=args.timing)
    return ch, res


def cmd_optimize(args, cfg):
    ch, res = _optimize(args, cfg)
    if args.format == "json":
        doc = {"method": args.method, "seed": cfg.seed, "objective": res.objective,
               "rates_bps": rates(ch, res.plan, cfg).tolist(), "plan": res.plan.to_list(),
               "degenerate_hops": [h + 1 for h in res.degenerate_hops],
               "trace": [dict(zip(TRACE_COLUMNS, r.as_tuple())) for r in res.trace]}
        write_text(json.dumps(doc, indent=1) + "\n", args.out)
    else:
        rows = [dict(zip(TRACE_COLUMNS, r.as_tuple())) for r in res.trace]
        _emit(args, TRACE_COLUMNS, rows, "optimize")


def cmd_select(args, cfg):
    if args.rates:
        r = np.asarray(args.rates, dtype=float)
        if r.shape[0] != cfg.n_tx:
            raise ValueError(f"--rates needs {cfg.n_tx} values, got {r.shape[0]}")
    else:
        ch, res = _optimize(args, cfg)
        r = rates(ch, res.plan, cfg)
    sel = select_models(r, list(cfg.catalogs) + [cfg.receiver_catalog], cfg.weights,
                        cfg.t_max_s, cfg.compute_freq_flops)
    row = {"feasible": sel.feasible, "i_local": " ".join(map(str, sel.i_local)), "i_rx": sel.i_rx,
           "delay_s": sel.delay_s if np.isfinite(sel.delay_s) else None,
           "kd_time_s": sel.kd_time_s, "rates_bps": " ".join(repr(float(x)) for x in r),
           "reason": sel.reason}
    _emit(args, tuple(row), [row], "select")
    if not sel.feasible:
        raise Infeasible(sel.reason)


def cmd_mrmp(args, cfg):
    rep = mrmp(cfg, args.method, k_max=args.kmax, trials=args.trials, beta_a=args.beta_a)
    if args.format == "json":
        doc = rep.to_dict()
        write_text(json.dumps(_finite(doc), indent=1, sort_keys=True) + "\n", args.out)
    else:
        rows = [{"iteration": r.iteration, "objective": r.objective, "best_objective": r.best_objective,
                 "feasible": r.selection.feasible, "i_local": " ".join(map(str, r.selection.i_local)),
                 "i_rx": r.selection.i_rx, "min_rate_bps": r.min_rate_bps,
                 "delay_s": r.delay_s if np.isfinite(r.delay_s) else None} for r in rep.records]
        _emit(args, tuple(rows[0]), rows, "mrmp")
    if not rep.feasible:
        raise Infeasible("no feasible iterate")


def _finite(x):
    if isinstance(x, float):
        return x if np.isfinite(x) else None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def cmd_sweep(args, cfg):
    spec = SweepSpec(kind=args.kind, grid=tuple(args.grid or ()), methods=args.methods,
                     seeds=args.seeds, k_max=args.kmax, trials=args.trials, workers=args.workers)
    table = run_sweep(spec, cfg)
    emit_report(table, args.out, args.format)
    if table.all_infeasible:
        raise Infeasible("every sweep point is infeasible")


def cmd_kd_demo(args, cfg):
    from ..kd import kd_demo
    rows = []
    for s in range(cfg.seed, cfg.seed + args.seeds):
        res = kd_demo(s, tuple(args.weights), args.tau, args.steps)
        for name in ("plain", "kd"):
            for epoch, loss, acc in res[name].trace:
                rows.append({"run": name, "seed": s, "epoch": epoch, "train_loss": loss,
                             "test_acc": acc})
    _emit(args, ("run", "seed", "epoch", "train_loss", "test_acc"), rows, "kd-demo")


def _grid_value(text):
    v = float(text)
    return int(v) if v.is_integer() else v


def _global_flags(parser, suppress: bool):
    def d(value):
        return argparse.SUPPRESS if suppress else value
    parser.add_argument("--scenario", default=d(None), help="scenario JSON (default: bundled scenario)")
    parser.add_argument("--seed", type=int, default=d(None),
                        help=f"override the scenario seed (also {SEED_ENV_VAR})")
    parser.add_argument("--out", default=d(None), help="output file (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=d("csv"))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risshare", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    # the same flags after the subcommand; SUPPRESS keeps them from resetting earlier values
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    def solver(kmax):
        # built per subcommand: parent actions are shared, so defaults must not be patched
        s = argparse.ArgumentParser(add_help=False)
        s.add_argument("--method", choices=METHODS, default="sdr")
        s.add_argument("--kmax", type=int, default=kmax, help=f"outer iterations (default {kmax})")
        s.add_argument("--trials", type=int, default=200, help="randomization trials for sdr")
        s.add_argument("--beta-a", type=float, default=1.0, help="magnitude exponent of the fast rule")
        s.add_argument("--timing", action="store_true", help="record wall time in traces")
        return s

    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="sample channels and evaluate rates")
    s.add_argument("--plan", choices=("random", "zeros"), default="random")
    s.add_argument("--channels-out", help="also save the channel set (.json or binary)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("optimize", parents=[common, solver(3)], help="BCD phase optimization")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("select", parents=[common, solver(3)], help="model selection at given rates")
    s.add_argument("--rates", type=float, nargs="+", help="per-car rates in bit/s")
    s.set_defaults(func=cmd_select)

    s = sub.add_parser("mrmp", parents=[common, solver(5)], help="joint phase and model optimization")
    s.set_defaults(func=cmd_mrmp)

    s = sub.add_parser("sweep", parents=[common], help="parameter sweep to CSV/JSON")
    s.add_argument("--kind", choices=KINDS, required=True)
    s.add_argument("--grid", type=_grid_value, nargs="+")
    s.add_argument("--methods", nargs="+", default=None)
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--kmax", type=int, default=3)
    s.add_argument("--trials", type=int, default=200)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("kd-demo", parents=[common], help="distillation sandbox accuracy traces")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--steps", type=int, default=500)
    s.add_argument("--tau", type=float, default=4.0)
    s.add_argument("--weights", type=float, nargs="+", default=[0.25, 0.25])
    s.set_defaults(func=cmd_kd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _scenario(args)
        args.func(args, cfg)
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ScenarioError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

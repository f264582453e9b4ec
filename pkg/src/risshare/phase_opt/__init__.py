"""Per-surface phase solvers and the block coordinate descent driver."""

from .bcd import METHODS, TRACE_COLUMNS, BcdResult, TraceRow, bcd_optimize, min_rate
from .ga import GaParams, ga_hop
from .hop import (DegenerateHopError, HopProblem, build_hop_problem, compute_zetas, fast_hop,
                  kd_time, objective, random_hop, theta_from_v)
from .sdp import SdpConvergenceError, SdpSolution, extract_rank_one, sdp_maxmin, sdr_hop

__all__ = [
    "METHODS", "TRACE_COLUMNS", "BcdResult", "TraceRow", "bcd_optimize", "min_rate",
    "GaParams", "ga_hop", "DegenerateHopError", "HopProblem", "build_hop_problem",
    "compute_zetas", "fast_hop", "kd_time", "objective", "random_hop", "theta_from_v",
    "SdpConvergenceError", "SdpSolution", "extract_rank_one", "sdp_maxmin", "sdr_hop",
]

import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import alignment_optimum, grid_maxmin
from risshare.channel import ChannelSet, PhasePlan, TWO_PI, cascade_gain, cascade_gains, sample_channels
from risshare.phase_opt import (TRACE_COLUMNS, DegenerateHopError, GaParams, HopProblem,
                                SdpConvergenceError, SdpSolution, bcd_optimize, build_hop_problem,
                                compute_zetas, extract_rank_one, fast_hop, ga_hop, objective,
                                random_hop, sdp_maxmin, sdr_hop, theta_from_v)
from risshare.scenario import default_scenario, with_chain


def cgauss(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_chain(rng, sizes, m=2):
    outs = list(sizes[1:]) + [1]
    return ChannelSet(cgauss(rng, m, sizes[0]), tuple(cgauss(rng, o, i) for i, o in zip(sizes, outs)))


def problem(rng, m, n, zeta_spread=0.0):
    z = 10 ** rng.uniform(-zeta_spread, zeta_spread, m) if zeta_spread else np.ones(m)
    return HopProblem(cgauss(rng, m, n), z, 0)


def check_sdp_feasible(V):
    assert np.max(np.abs(np.diag(V) - 1)) <= 1e-6
    assert np.linalg.eigvalsh((V + V.conj().T) / 2)[0] >= -1e-6


# -- hop construction ------------------------------------------------------------


def test_single_hop_a_vector(rng):
    ch = random_chain(rng, (5,))
    prob = build_hop_problem(ch, PhasePlan.zeros([5]), 0, [1.0, 1.0])
    assert np.allclose(prob.a, ch.hops[0][0] * ch.g, rtol=0, atol=0)


@given(st.integers(0, 2**31), st.integers(0, 2))
def test_hop_consistency_with_cascade(seed, n):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, (4, 3, 5))
    plan = PhasePlan.random(ch.elements, rng)
    prob = build_hop_problem(ch, plan, n, [1.0, 2.0])
    v = np.exp(1j * rng.uniform(0, TWO_PI, ch.elements[n]))
    full = cascade_gains(ch, plan.with_hop(n, theta_from_v(v)))
    assert np.allclose(prob.a @ v.conj(), full, rtol=1e-12, atol=0)


def test_zero_car_is_degenerate(rng):
    ch = random_chain(rng, (3, 3))
    ch = ChannelSet(np.vstack([ch.g[0], np.zeros(3)]), ch.hops)
    prob = build_hop_problem(ch, PhasePlan.zeros(ch.elements), 1, [1, 1])
    assert prob.degenerate and prob.zero_rows.tolist() == [False, True]


def test_build_errors(rng):
    ch = random_chain(rng, (3, 3))
    with pytest.raises(ValueError):
        build_hop_problem(ch, PhasePlan.zeros([3, 4]), 0, [1, 1])
    with pytest.raises(ValueError):
        build_hop_problem(ch, PhasePlan.zeros([3, 3]), 2, [1, 1])
    with pytest.raises(ValueError):
        build_hop_problem(ch, PhasePlan.zeros([3, 3]), 0, [1])


# -- SDP relaxation ----------------------------------------------------------------


def test_scalar_problem():
    prob = HopProblem(np.array([[2 - 1j]]), [3.0], 0)
    sol = sdp_maxmin(prob)
    assert sol.V.shape == (1, 1) and sol.V[0, 0] == 1
    assert sol.upper_bound == pytest.approx(15.0)


@pytest.mark.parametrize("n", [2, 5, 16, 64])
def test_single_car_tight(rng, n):
    prob = problem(rng, 1, n)
    opt = alignment_optimum(prob.a[0], prob.zetas[0])
    sol = sdp_maxmin(prob, tol=1e-9)
    check_sdp_feasible(sol.V)
    assert sol.upper_bound >= opt * (1 - 1e-9)
    assert sol.upper_bound == pytest.approx(opt, rel=1e-6)
    ext = extract_rank_one(sol, prob, trials=50, seed=0)
    assert ext.achieved_value == pytest.approx(opt, rel=1e-6)


def test_bound_dominates_grid(rng):
    for _ in range(5):
        prob = problem(rng, 2, 3, zeta_spread=0.5)
        sol = sdp_maxmin(prob)
        assert sol.upper_bound >= grid_maxmin(prob.a, prob.zetas)


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(1, 3), st.integers(1, 3))
def test_sdp_invariants(seed, m, n):
    rng = np.random.default_rng(seed)
    prob = problem(rng, m, n + 1, zeta_spread=1.0)
    sol = sdr_hop(prob, trials=30, seed=seed)
    check_sdp_feasible(sol.V)
    assert np.allclose(np.abs(np.exp(1j * sol.extracted_phases)), 1.0)
    assert sol.achieved_value <= sol.upper_bound * (1 + 1e-9) + 1e-12
    assert sol.upper_bound >= grid_maxmin(prob.a, prob.zetas, levels=16)


@pytest.mark.parametrize("m,n", [(2, 16), (3, 16), (2, 64), (3, 64)])
def test_sdp_converges_on_larger_instances(rng, m, n):
    for _ in range(3):
        prob = problem(rng, m, n, zeta_spread=1.0)
        sol = sdp_maxmin(prob)
        check_sdp_feasible(sol.V)
        assert sol.certified_gap <= 1e-7 + 1e-12 * n * n


def test_nonconvergence_carries_best(rng):
    prob = problem(rng, 3, 8)
    with pytest.raises(SdpConvergenceError) as info:
        sdp_maxmin(prob, max_iter=2)
    best = info.value.best
    check_sdp_feasible(best.V)
    assert best.upper_bound >= best.relaxed_value


def test_degenerate_sdp(rng):
    a = cgauss(rng, 2, 4)
    a[1] = 0
    sol = sdp_maxmin(HopProblem(a, [1, 1], 0))
    assert sol.upper_bound == 0


def test_rank_one_extraction_recovers_vector(rng):
    prob = problem(rng, 2, 6)
    v = np.exp(1j * rng.uniform(0, TWO_PI, 6))
    value = prob.value_of_v(v)
    sol = SdpSolution(V=np.outer(v, v.conj()), upper_bound=value, relaxed_value=value)
    out = extract_rank_one(sol, prob, trials=5, seed=1)
    # numerically tiny eigenvalues perturb random draws at the sqrt(eps) level
    assert out.achieved_value >= value * (1 - 1e-12)
    assert out.achieved_value == pytest.approx(value, rel=1e-6)
    got = np.exp(-1j * out.extracted_phases)
    ratio = got / v
    assert np.allclose(ratio, ratio[0], atol=1e-6)


def test_more_trials_never_worse(rng):
    for k in range(5):
        prob = problem(rng, 3, 8)
        sol = sdp_maxmin(prob)
        one = extract_rank_one(sol, prob, trials=1, seed=k)
        many = extract_rank_one(sol, prob, trials=200, seed=k)
        assert many.achieved_value >= one.achieved_value


def test_extraction_close_to_grid_optimum():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        prob = problem(rng, 2, 4)
        sol = extract_rank_one(sdp_maxmin(prob), prob, trials=500, seed=seed)
        hits += sol.achieved_value >= 0.95 * grid_maxmin(prob.a, prob.zetas)
    assert hits >= 95


# -- closed form, GA, random ---------------------------------------------------------


def test_fast_alignment_example():
    prob = HopProblem(np.array([[1, 1j, -1]]), [1.0], 0)
    theta = fast_hop(prob)
    v = np.exp(-1j * theta)
    assert np.allclose(np.mod(np.angle(v), TWO_PI), [0, np.pi / 2, np.pi], atol=1e-12)
    assert abs(prob.gains(theta)[0]) == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("n", [3, 16, 64])
def test_fast_matches_sdp_single_car(rng, n):
    prob = problem(rng, 1, n)
    assert prob.value(fast_hop(prob)) == pytest.approx(sdp_maxmin(prob, tol=1e-9).upper_bound, rel=1e-6)


def test_fast_coincident_cars(rng):
    a = cgauss(rng, 1, 7)
    single = fast_hop(HopProblem(a, [2.0], 0))
    double = fast_hop(HopProblem(np.vstack([a, a]), [2.0, 0.5], 0))
    assert np.allclose(single, double, atol=1e-12)


def test_fast_all_zero():
    with pytest.raises(DegenerateHopError):
        fast_hop(HopProblem(np.zeros((2, 3)), [1, 1], 0))


def test_ga_near_alignment_optimum():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        prob = problem(rng, 1, 4)
        theta = ga_hop(prob, seed=seed)
        assert prob.value(theta) >= 0.98 * alignment_optimum(prob.a[0])


def test_ga_beats_random():
    wins = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        prob = problem(rng, 2, 8)
        wins += prob.value(ga_hop(prob, GaParams(generations=50), seed=seed)) >= prob.value(random_hop(prob, seed))
    assert wins >= 95


def test_ga_deterministic_and_warm_start(rng):
    prob = problem(rng, 2, 6)
    assert np.array_equal(ga_hop(prob, seed=4), ga_hop(prob, seed=4))
    start = fast_hop(prob)
    out = ga_hop(prob, GaParams(generations=3), seed=0, init=start)
    assert prob.value(out) >= prob.value(start)


def test_ga_params_validation():
    with pytest.raises(ValueError):
        GaParams(population=1)
    with pytest.raises(ValueError):
        GaParams(elite=64)


def test_random_hop_range(rng):
    t = random_hop(problem(rng, 1, 50), seed=3)
    assert np.all((t >= 0) & (t < TWO_PI))


# -- block coordinate descent ---------------------------------------------------------


def small_setup(n_ris=3, elements=8, seed=0):
    cfg = with_chain(default_scenario(), n_ris, elements=elements)
    ch = sample_channels(cfg, seed)
    plan = PhasePlan.random(ch.elements, np.random.default_rng(seed))
    return cfg, ch, plan, compute_zetas(cfg, [1, 1], 1)


def test_single_surface_trace():
    cfg, ch, plan, z = small_setup(n_ris=1)
    res = bcd_optimize(ch, cfg, z, "sdr", k_max=4, plan=plan)
    assert len(res.trace) == 4
    assert len({r.objective for r in res.trace}) == 1


@pytest.mark.parametrize("method", ["sdr", "fast", "ga"])
def test_trace_monotone(method):
    for seed in range(50 if method != "ga" else 15):
        cfg, ch, plan, z = small_setup(seed=seed)
        res = bcd_optimize(ch, cfg, z, method, k_max=3, plan=plan, seed=seed,
                           ga_params=GaParams(generations=30), trials=30)
        objs = [objective(ch, plan, z)] + [r.objective for r in res.trace]
        assert all(b >= a for a, b in zip(objs, objs[1:]))
        assert res.objective == objs[-1] == objective(ch, res.plan, z)


def test_random_method_flat():
    cfg, ch, plan, z = small_setup()
    res = bcd_optimize(ch, cfg, z, "random", k_max=3, seed=2)
    assert len({r.objective for r in res.trace}) == 1
    again = bcd_optimize(ch, cfg, z, "random", k_max=3, seed=2)
    assert res.plan.to_list() == again.plan.to_list()


def test_infeasible_zetas_named():
    cfg = default_scenario().replace(compute_freq_flops=1e10)   # Pointnet KD alone takes 10 s
    with pytest.raises(ValueError, match="delay constraint"):
        compute_zetas(cfg, [1, 1], 4)
    _, ch, _, _ = small_setup()
    with pytest.raises(ValueError, match="delay constraint"):
        bcd_optimize(ch, cfg, [np.inf, 1.0], "fast", 1)


def test_degenerate_hop_keeps_plan(rng):
    cfg, ch, plan, z = small_setup(n_ris=2)
    ch = ChannelSet(np.vstack([ch.g[0], np.zeros_like(ch.g[1])]), ch.hops)
    res = bcd_optimize(ch, cfg, z, "sdr", k_max=1, plan=plan)
    assert res.degenerate_hops == [0, 1]
    assert res.plan.to_list() == plan.to_list()
    assert res.objective == 0


def test_trace_csv(tmp_path):
    cfg, ch, plan, z = small_setup()
    res = bcd_optimize(ch, cfg, z, "fast", k_max=2, plan=plan)
    p = tmp_path / "trace.csv"
    res.write_trace_csv(p)
    rows = list(csv.reader(p.open()))
    assert tuple(rows[0]) == TRACE_COLUMNS and len(rows) == 1 + 2 * 3
    assert float(rows[-1][3]) == res.objective


def test_bad_method():
    cfg, ch, plan, z = small_setup()
    with pytest.raises(ValueError):
        bcd_optimize(ch, cfg, z, "annealing", 1)
    with pytest.raises(ValueError):
        bcd_optimize(ch, cfg, z, "sdr", 0)

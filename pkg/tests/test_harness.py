import json
import math

import pytest

from risshare.harness.cli import EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, main
from risshare.harness.report import decode, emit_report
from risshare.harness.sweep import ResultTable, SweepSpec, run_sweep, selection_grid
from risshare.scenario import default_scenario, save_scenario, with_chain


def small_base(elements=8):
    return default_scenario().replace(elements_per_ris=(elements,) * 3)


def test_spec_validation():
    with pytest.raises(ValueError, match="at least one method"):
        SweepSpec("hops", methods=())
    with pytest.raises(ValueError):
        SweepSpec("orbit")
    with pytest.raises(ValueError):
        SweepSpec("hops", methods=("sdr", "anneal"))
    with pytest.raises(ValueError):
        SweepSpec("kd", methods=("sdr",))
    with pytest.raises(ValueError):
        SweepSpec("hops", seeds=0)
    with pytest.raises(ValueError):
        SweepSpec("elements", grid=(0, 4))
    assert SweepSpec("elements").grid == (36, 49, 64, 81)


def test_sweep_rows_and_aggregates():
    spec = SweepSpec("hops", grid=(1, 2), methods=("fast", "random"), seeds=3, k_max=1)
    t = run_sweep(spec, small_base())
    assert len(t.rows) == 2 * 2 * (3 + 2)
    keys = [(r["point"], r["method"], r["stat"]) for r in t.rows]
    assert keys[:5] == [(1, "fast", "run")] * 3 + [(1, "fast", "mean"), (1, "fast", "std")]
    runs = [r["min_rate_bps"] for r in t.runs(2, "fast")]
    assert t.stat(2, "fast") == pytest.approx(sum(runs) / 3)
    assert [r["seed"] for r in t.runs(1, "random")] == [0, 1, 2]


def test_sweep_deterministic_and_parallel(tmp_path):
    spec = SweepSpec("elements", grid=(4, 9), methods=("sdr", "fast"), seeds=2, k_max=1, trials=20)
    a = emit_report(run_sweep(spec, small_base()), tmp_path / "a.csv")
    b = emit_report(run_sweep(spec, small_base()), tmp_path / "b.csv")
    par = SweepSpec("elements", grid=(4, 9), methods=("sdr", "fast"), seeds=2, k_max=1, trials=20,
                    workers=2)
    c = emit_report(run_sweep(par, small_base()), tmp_path / "c.csv")
    assert a == b == c
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_iterations_sweep_uses_one_run():
    spec = SweepSpec("iterations", grid=(1, 2, 3), methods=("fast",), seeds=2)
    t = run_sweep(spec, small_base())
    vals = [t.stat(k, "fast") for k in (1, 2, 3)]
    assert vals == sorted(vals)


def test_infeasible_point_recorded():
    base = small_base().replace(compute_freq_flops=1e9)    # KD of model 1 alone takes 20 s
    t = run_sweep(SweepSpec("hops", grid=(1,), methods=("fast",), seeds=2), base)
    assert t.all_infeasible and len(t.runs()) == 2


def test_csv_json_equivalence(tmp_path):
    t = run_sweep(SweepSpec("hops", grid=(1, 2), methods=("fast",), seeds=2, k_max=1), small_base())
    csv_rows = decode(emit_report(t, tmp_path / "t.csv", "csv"), "csv")
    json_rows = decode(emit_report(t, tmp_path / "t.json", "json"), "json")
    assert len(csv_rows) == len(json_rows) == len(t.rows)
    for c, j in zip(csv_rows, json_rows):
        for key, jv in j.items():
            cv = c[key]
            if jv is None:
                assert cv == ""
            elif isinstance(jv, bool):
                assert cv == str(int(jv))
            elif isinstance(jv, float):
                assert float(cv) == jv
            else:
                assert cv == str(jv)


def test_empty_table_rejected():
    with pytest.raises(ValueError):
        emit_report(ResultTable("hops", []))


def test_report_io_error_names_path(tmp_path):
    t = run_sweep(SweepSpec("hops", grid=(1,), methods=("fast",), seeds=1, k_max=1), small_base())
    bad = tmp_path / "missing" / "out.csv"
    with pytest.raises(OSError, match="missing"):
        emit_report(t, bad)


def test_selection_grid_shape():
    spec = SweepSpec("selection", grid=(1, 2), methods=("fast",), seeds=2, k_max=1)
    t = run_sweep(spec, default_scenario().replace(elements_per_ris=(8, 8, 8)))
    grid = selection_grid(t)
    assert [(g["method"], g["point"]) for g in grid] == [("fast", 1), ("fast", 2)]
    assert all(0 <= g["share"] <= 1 for g in grid)


def test_kd_sweep():
    t = run_sweep(SweepSpec("kd", grid=(4,), seeds=1, kd_steps=50), default_scenario())
    assert [r["method"] for r in t.runs()] == ["plain", "kd"]
    assert all(0 <= r["objective"] <= 1 for r in t.runs())


# -- command line ----------------------------------------------------------------------


@pytest.fixture
def scenario_file(tmp_path):
    p = tmp_path / "s.json"
    save_scenario(with_chain(default_scenario(), 2, elements=8), p)
    return str(p)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_simulate(scenario_file, capsys):
    code, out, _ = run(["--scenario", scenario_file, "simulate"], capsys)
    assert code == EXIT_OK
    lines = out.strip().splitlines()
    assert lines[0] == "car,gain_re,gain_im,gain_abs2,rate_bps" and len(lines) == 3


def test_cli_flags_either_side(scenario_file, tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["--seed", "4", "--format", "json", "--out", str(a), "--scenario", scenario_file,
                 "optimize", "--method", "fast"]) == EXIT_OK
    assert main(["optimize", "--method", "fast", "--seed", "4", "--format", "json", "--out", str(b),
                 "--scenario", scenario_file]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["seed"] == 4 and len(doc["trace"]) == 3 * 2


def test_cli_seed_precedence(scenario_file, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RISSHARE_SEED", "9")
    _, env_out, _ = run(["--scenario", scenario_file, "simulate"], capsys)
    _, flag_out, _ = run(["--scenario", scenario_file, "--seed", "9", "simulate"], capsys)
    _, over_out, _ = run(["--scenario", scenario_file, "--seed", "1", "simulate"], capsys)
    assert env_out == flag_out != over_out


@pytest.mark.parametrize("argv", [
    ["optimize", "--method", "anneal"],
    ["sweep", "--kind", "orbit"],
    ["--scenario", "/nonexistent.json", "simulate"],
    ["select", "--rates", "1e6"],
    ["sweep", "--kind", "hops", "--seeds", "0"],
])
def test_cli_invalid_exit_code(argv, capsys):
    with pytest.raises(SystemExit) as info:
        code = main(argv)
        raise SystemExit(code)
    assert info.value.code == EXIT_INVALID


def test_cli_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"bandwidth_hz": -1}')
    code, _, err = run(["--scenario", str(p), "simulate"], capsys)
    assert code == EXIT_INVALID and err.startswith("error:")


def test_cli_infeasible_exit_code(scenario_file, capsys):
    code, out, err = run(["--scenario", scenario_file, "select", "--rates", "1", "1"], capsys)
    assert code == EXIT_INFEASIBLE and "infeasible" in err
    assert out.splitlines()[1].startswith("0,")


def test_cli_select_and_mrmp(scenario_file, tmp_path, capsys):
    code, out, _ = run(["--scenario", scenario_file, "select", "--rates", "1e9", "1e9"], capsys)
    assert code == EXIT_OK and out.splitlines()[1].startswith("1,4 4,")
    one = tmp_path / "one.json"
    save_scenario(with_chain(default_scenario(), 1, elements=16), one)
    code, out, _ = run(["--scenario", str(one), "--format", "json", "mrmp", "--method", "fast",
                        "--kmax", "2"], capsys)
    doc = json.loads(out)
    assert code == EXIT_OK and len(doc["records"]) == 3
    assert all(v is None or math.isfinite(v) for v in doc["rates_bps"])


def test_cli_sweep_and_kd_demo(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--kind", "hops", "--grid", "1", "2", "--methods", "fast", "--seeds", "2",
                 "--kmax", "1", "--out", str(out)])
    assert code == EXIT_OK and out.read_text().startswith("kind,point,method")
    code, text, _ = run(["kd-demo", "--steps", "20"], capsys)
    assert code == EXIT_OK and text.splitlines()[0] == "run,seed,epoch,train_loss,test_acc"


def test_cli_channels_roundtrip(scenario_file, tmp_path, capsys):
    from risshare.channel import load_channels, sample_channels
    from risshare.scenario import load_scenario
    p = tmp_path / "ch.bin"
    assert main(["--scenario", scenario_file, "simulate", "--channels-out", str(p)]) == EXIT_OK
    ch = load_channels(p)
    ref = sample_channels(load_scenario(scenario_file))
    assert (ch.g == ref.g).all()

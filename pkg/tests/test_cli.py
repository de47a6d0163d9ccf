import json
from pathlib import Path

import numpy as np
import pytest

from adass.cli import EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, main, parse_args, read_kv_file
from adass.errors import IngestionError
from adass.trace_io import read_matrices, read_scalar_trace

SHORT = ["--n-iter", "40", "--burn-in", "10", "--thin", "2"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def bundled_fit(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert main(["fit", "@diagonal_pattern", "--out", str(out), "--snapshots", "--seed", "3", "--strict"]) == 0
    return out


def test_fit_bundled_defaults_retains_500(bundled_fit):
    trace = read_scalar_trace(bundled_fit)
    assert trace["xi"].size == 500
    np.testing.assert_array_equal(trace["iteration"], np.arange(505, 3001, 5))
    summary = json.loads((bundled_fit / "summary.json").read_text())
    assert summary["n_retained"] == 500 and summary["config"]["q"] == 10 and summary["config"]["A"] == 0.1
    assert read_matrices(bundled_fit / "snapshots.bin").shape == (500, 50, 10)
    manifest = json.loads((bundled_fit / "manifest.json").read_text())
    assert manifest["command"] == "fit" and manifest["seed"] == 3
    assert {"argv", "config", "inputs", "outputs", "wall_clock_s", "version", "started_utc"} <= set(manifest)
    assert (bundled_fit / "xi_path.csv").read_text().count("\n") == 3001


def test_fit_missing_file_exits_2_with_path(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    code, _, err = run(["fit", missing, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_INPUT and str(missing) in err


def test_fit_rejects_zero_q(tmp_path, capsys):
    code, _, err = run(["fit", "@diagonal_pattern", "--out", tmp_path, "--q", "0"], capsys)
    assert code == EXIT_INPUT and "--q" in err


def test_fit_ingestion_errors_report_location(tmp_path, capsys):
    bad = tmp_path / "ragged.csv"
    bad.write_text("1,2,3\n4,5,6\n7,8\n")
    code, _, err = run(["fit", bad, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_INPUT and "row 3" in err
    bad.write_text("1,2\n3,oops\n")
    code, _, err = run(["fit", bad, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_INPUT and "row 2, column 2" in err
    bad.write_text("1,2,3\n")
    code, _, err = run(["fit", bad, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_INPUT and "at least 2 observations" in err


def test_fit_options_and_centering(tmp_path, capsys):
    data = tmp_path / "d.csv"
    assert run(["simulate", "--n", 30, "--p", 12, "--s", 4, "--r", 1, "--out", data], capsys)[0] == 0
    code, out, _ = run(["fit", data, "--out", tmp_path / "f", "--noise", "heterogeneous", "--factor-cov",
                        "inverse_wishart", "--center", "--q", 3] + SHORT, capsys)
    assert code == EXIT_OK and "retained 15" in out
    cfg = json.loads((tmp_path / "f" / "summary.json").read_text())["config"]
    assert cfg["noise_mode"] == "heterogeneous" and cfg["factor_cov_mode"] == "inverse_wishart"


def test_estimate_two_methods_and_defaults(capsys):
    code, out, _ = run(["estimate", "@diagonal_pattern", "--methods", "er,gr"], capsys)
    lines = out.strip().splitlines()
    assert code == EXIT_OK and lines[0] == "method,r_hat,r_max,runtime_ms"
    assert [l.split(",")[0] for l in lines[1:]] == ["ER", "GR"]
    assert all(l.split(",")[2] == "10" for l in lines[1:])
    assert parse_args(["estimate", "x.csv"]).r_max == 10


def test_estimate_dt_accepts_seed_and_strict_is_stable(tmp_path, capsys):
    argv = ["estimate", "@diagonal_pattern", "--methods", "dt,act,et", "--seed", "5", "--strict"]
    a = run(argv, capsys)[1]
    b = run(argv, capsys)[1]
    assert a == b and a.count("NA") == 3
    code, _, err = run(["estimate", "@diagonal_pattern", "--methods", "zz"], capsys)
    assert code == EXIT_INPUT and "zz".upper() in err
    out = tmp_path / "est.csv"
    assert run(argv + ["--out", out], capsys)[0] == 0
    assert out.read_text() == a and (tmp_path / "est.csv.manifest.json").is_file()


def test_simulate_default_dimensions(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    code, msg, _ = run(["simulate", "--out", out, "--seed", 2], capsys)
    assert code == EXIT_OK and "100x1000" in msg
    rows = out.read_text().splitlines()
    assert len(rows) == 101 and len(rows[1].split(",")) == 1000
    side = json.loads((tmp_path / "sim.json").read_text())
    assert side["truth"]["s"] == 30 and side["truth"]["r"] == 3 and side["meta"]["seed"] == 2
    assert (tmp_path / "sim.manifest.json").is_file()
    code, _, _ = run(["simulate", "--out", out, "--s", 2, "--r", 3], capsys)
    assert code == EXIT_INPUT


def test_diagnose_outputs(bundled_fit, tmp_path, capsys):
    code, _, _ = run(["diagnose", bundled_fit, "--out", tmp_path, "--max-lag", 10], capsys)
    assert code == EXIT_OK
    status = json.loads((tmp_path / "diagnostics.json").read_text())
    assert status["psi"]["acf_undefined"] is False and status["psi"]["max_lag"] == 10
    loadings = [k for k in status if k.startswith("beta_")]
    assert len(loadings) <= 3
    acf_lines = (tmp_path / "acf.csv").read_text().splitlines()
    assert acf_lines[0] == "series,lag,value" and any(l.startswith("psi,0,1.0") for l in acf_lines)
    assert (tmp_path / "posterior_summary.json").is_file() and (tmp_path / "diagnose.manifest.json").is_file()


def test_diagnose_constant_series_flags_and_exits_cleanly(tmp_path, capsys):
    d = tmp_path / "t"
    d.mkdir()
    (d / "trace.csv").write_text("iteration,xi,support_size,psi\n" + "".join(f"{i},2,5,1.0\n" for i in range(1, 21)))
    code, _, err = run(["diagnose", d, "--series", "xi"], capsys)
    assert code == EXIT_NUMERIC and "undefined" in err
    assert json.loads((d / "diagnostics.json").read_text())["xi"]["acf_undefined"] is True
    (d / "trace.csv").write_text("iteration,xi,support_size,psi\n" + "".join(f"{i},2,5,{i}.0\n" for i in range(1, 21)))
    code, _, _ = run(["diagnose", d], capsys)
    status = json.loads((d / "diagnostics.json").read_text())
    assert code == EXIT_OK and status["xi"]["acf_undefined"] and not status["psi"]["acf_undefined"]
    assert run(["diagnose", tmp_path / "empty"], capsys)[0] == EXIT_INPUT


def test_align_outputs(bundled_fit, tmp_path, capsys):
    assert run(["align", bundled_fit, "--out", tmp_path], capsys)[0] == EXIT_OK
    consensus = np.loadtxt(tmp_path / "consensus.csv", delimiter=",")
    assert consensus.shape == (50, 10)
    info = json.loads((tmp_path / "alignment.json").read_text())
    assert info["n_snapshots"] == 500 and info["rounds"] >= 1
    assert run(["align", tmp_path, "--out", tmp_path / "x"], capsys)[0] == EXIT_INPUT


def test_experiment_rank_and_sensitivity(tmp_path, capsys):
    grid = tmp_path / "grid.txt"
    grid.write_text("# tiny\nstudy=rank\ndesign=signed_two\nn_values=30\np=20\ns_values=5\nr_values=1\n"
                    "replications=2\nn_iter=30\nburn_in=10\nthin=2\nq=3\nseed=4\nmethods=ER,AdaSS\n")
    assert run(["experiment", grid, "--out", tmp_path / "r"], capsys)[0] == EXIT_OK
    lines = (tmp_path / "r" / "rank_table.csv").read_text().splitlines()
    assert lines[0].startswith("n,s,r,method,pct_true") and len(lines) == 3
    assert lines[0].endswith("base_seed,streams") and lines[1].endswith(",4,0-1")
    assert (tmp_path / "r" / "rank_table.txt").is_file()
    grid.write_text("study=sensitivity\nq_values=2,4\nn_values=30\np=20\ns_values=5\nr_values=2\n"
                    "n_iter=30\nburn_in=10\nthin=2\n")
    assert run(["experiment", grid, "--out", tmp_path / "s"], capsys)[0] == EXIT_OK
    assert (tmp_path / "s" / "sensitivity.csv").read_text().startswith("q,xi_mode,final_xi\n2,")
    assert (tmp_path / "s" / "xi_traces.csv").read_text().count("\n") == 1 + 2 * 30
    grid.write_text("study=rank\nbogus=1\n")
    code, _, err = run(["experiment", grid, "--out", tmp_path / "x"], capsys)
    assert code == EXIT_INPUT and "bogus" in err


def test_config_file_merges_under_explicit_flags(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# defaults\nn-iter = 40\nburn_in=10\nA=0.5\nsnapshots=true\n")
    args = parse_args(["fit", "d.csv", "--out", "o", "--config", str(cfg), "--A", "0.2"])
    assert args.n_iter == 40 and args.burn_in == 10 and args.A == 0.2 and args.snapshots is True
    assert read_kv_file(cfg) == {"n_iter": "40", "burn_in": "10", "A": "0.5", "snapshots": "true"}
    cfg.write_text("colour=blue\n")
    assert main(["fit", "d.csv", "--out", "o", "--config", str(cfg)]) == EXIT_INPUT
    cfg.write_text("no equals sign\n")
    assert main(["fit", "d.csv", "--out", "o", "--config", str(cfg)]) == EXIT_INPUT


def _outputs(manifest_path):
    return {Path(p).name: Path(p).read_bytes() for p in json.loads(Path(manifest_path).read_text())["outputs"]}


@pytest.mark.parametrize("kind", ["fit", "simulate", "estimate", "experiment"])
def test_rerun_in_strict_mode_is_byte_identical(tmp_path, kind, capsys):
    data = tmp_path / "d.csv"
    main(["simulate", "--n", "25", "--p", "15", "--s", "4", "--r", "1", "--out", str(data), "--seed", "1"])
    if kind == "fit":
        argv = ["fit", str(data), "--out", str(tmp_path / "a"), "--strict", "--seed", "9", "--snapshots"] + SHORT
        manifest = tmp_path / "a" / "manifest.json"
    elif kind == "simulate":
        argv = ["simulate", "--n", "10", "--p", "8", "--s", "3", "--r", "2", "--strict", "--out", str(tmp_path / "a" / "s.csv")]
        manifest = tmp_path / "a" / "s.manifest.json"
    elif kind == "estimate":
        argv = ["estimate", str(data), "--r-max", "5", "--strict", "--out", str(tmp_path / "a" / "e.csv")]
        manifest = tmp_path / "a" / "e.csv.manifest.json"
    else:
        grid = tmp_path / "g.txt"
        grid.write_text("n_values=25\np=15\ns_values=4\nr_values=1\nreplications=2\nn_iter=20\nburn_in=4\nthin=2\nq=3\nr_max=5\n")
        argv = ["experiment", str(grid), "--strict", "--out", str(tmp_path / "a")]
        manifest = tmp_path / "a" / "manifest.json"
    assert main(argv) == 0
    first = _outputs(manifest)
    redirected = tmp_path / "b" / Path(argv[argv.index("--out") + 1]).name if kind in ("simulate", "estimate") \
        else tmp_path / "b"
    assert main(["rerun", str(manifest), "--out", str(redirected)]) == 0
    second = {Path(p).name: Path(p).read_bytes() for p in json.loads(
        (manifest.parent.parent / "b" / manifest.name).read_text())["outputs"]}
    capsys.readouterr()
    assert first.keys() == second.keys() and first == second


def test_rerun_missing_manifest(tmp_path, capsys):
    assert run(["rerun", tmp_path / "m.json"], capsys)[0] == EXIT_INPUT


def test_usage_errors_exit_2(capsys):
    assert run([], capsys)[0] == 2
    assert run(["fit"], capsys)[0] == 2
    assert run(["--version"], capsys)[0] == 0


def test_ingestion_error_type():
    assert issubclass(IngestionError, ValueError)

"""Command-line interface.

Exit codes: 0 success, 1 numerical/estimation failure, 2 input error.
Every command that writes files also writes ``manifest.json`` (atomically)
recording the exact argument vector, so ``adass rerun manifest.json``
replays it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import acf, align_loadings, pacf, summarize
from .errors import (
    DecompositionError,
    DiagnosticsError,
    EstimationError,
    IngestionError,
    ParameterError,
    StateError,
)
from .estimators import DEFAULT_R_MAX, ET_WEIGHT, METHODS, run_estimators
from .experiments import (
    ALL_METHODS,
    ExperimentGrid,
    run_grid,
    rank_table,
    cov_table,
    run_sensitivity_q,
    write_table,
)
from .gibbs import ChainSettings, ChainTrace, run_chain
from .prior import HETEROGENEOUS, HOMOGENEOUS, IDENTITY, INVERSE_WISHART, ModelConfig
from .rand_dists import RngHandle
from .synth import DESIGNS, Dataset, generate_truth, load_dataset, sample_data, save_dataset
from .trace_io import SIGMA_BIN, SNAPSHOT_BIN, read_matrices, read_scalar_trace, write_trace

EXIT_OK, EXIT_NUMERIC, EXIT_INPUT = 0, 1, 2
BUNDLED_PREFIX = "@"
MANIFEST = "manifest.json"


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def bundled_path(name: str) -> Path:
    ref = resources.files("adass") / "data" / f"{name}.csv"
    path = Path(str(ref))
    if not path.is_file():
        raise InputError(f"no bundled dataset named {name!r}")
    return path


def resolve_data_path(arg: str) -> Path:
    if arg.startswith(BUNDLED_PREFIX):
        return bundled_path(arg[len(BUNDLED_PREFIX):])
    path = Path(arg)
    if not path.is_file():
        raise InputError(f"data file not found: {path}")
    return path


def read_kv_file(path) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path, argv, args, inputs, outputs, started: float) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": json.loads(json.dumps(config, default=str)),
        "seed": getattr(args, "seed", None),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "wall_clock_s": round(time.time() - started, 3),
        "version": __version__,
    }
    atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv_list(text)]
    except ValueError:
        raise InputError(f"expected a comma-separated integer list, got {text!r}") from None


def _write_matrix_csv(path, m: np.ndarray) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(m):
        w.writerow([repr(float(x)) for x in row])
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _load(args) -> tuple[Dataset, Path]:
    path = resolve_data_path(args.data)
    header = {"auto": None, "yes": True, "no": False}[args.header]
    ds = load_dataset(path, header=header)
    Y = ds.Y
    if Y.shape[0] < 2:
        raise IngestionError(f"{path}: need at least 2 observations, found {Y.shape[0]}")
    if args.center:
        ds.Y = Y - Y.mean(axis=0)
    return ds, path


def cmd_fit(args, argv) -> int:
    started = time.time()
    ds, path = _load(args)
    n, p = ds.Y.shape
    if args.q is not None and args.q < 1:
        raise InputError(f"--q must be a positive integer, got {args.q}")
    cfg = ModelConfig(
        p=p, n=n, q=args.q, A=args.A, a1=args.a1, a2=args.a2,
        noise_mode=args.noise, factor_cov_mode=args.factor_cov, iw_dof=args.iw_dof,
    )
    settings = ChainSettings(args.n_iter, args.burn_in, args.thin, args.snapshots, args.seed)
    trace = run_chain(ds.Y, cfg, settings, rng=RngHandle(args.seed).generator())
    out = Path(args.out)
    outputs = write_trace(trace, out)
    summary = summarize(trace)
    payload = {"config": cfg.to_dict(), "n_retained": trace.n_retained, **summary.to_dict()}
    atomic_write_text(out / "summary.json", json.dumps(payload, indent=1) + "\n")
    outputs.append(out / "summary.json")
    write_manifest(out / MANIFEST, argv, args, [path], outputs, started)
    print(f"retained {trace.n_retained} draws; posterior mode of xi = {summary.xi_mode}")
    return EXIT_OK


def cmd_estimate(args, argv) -> int:
    started = time.time()
    ds, path = _load(args)
    methods = [m.upper() for m in _csv_list(args.methods)]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise InputError(f"unknown estimator(s) {bad}; choose from {','.join(METHODS)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "r_hat", "r_max", "runtime_ms"])
    rng = RngHandle(args.seed).generator()
    for m in methods:
        t0 = time.perf_counter()
        est = run_estimators(ds.Y, [m], args.r_max, rng=rng, et_weight=args.et_weight)[0]
        ms = (time.perf_counter() - t0) * 1e3
        w.writerow([est.method, est.r_hat, est.r_max, "NA" if args.strict else f"{ms:.3f}"])
    text = buf.getvalue()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        atomic_write_text(out, text)
        write_manifest(out.with_name(out.name + ".manifest.json"), argv, args, [path], [out], started)
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    started = time.time()
    rng = RngHandle(args.seed).generator()
    truth = generate_truth(args.design, args.p, args.s, args.r, rng)
    ds = sample_data(truth, args.n, rng)
    ds.meta["seed"] = args.seed
    out = Path(args.out)
    sidecar = save_dataset(ds, out)
    write_manifest(out.with_name(out.stem + ".manifest.json"), argv, args, [], [out, sidecar], started)
    print(f"wrote {ds.n}x{ds.p} data to {out}")
    return EXIT_OK


def _tidy_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def cmd_diagnose(args, argv) -> int:
    started = time.time()
    src = Path(args.trace)
    if not (src / "trace.csv").is_file():
        raise InputError(f"no trace.csv in {src}")
    out = Path(args.out) if args.out else src
    cols = read_scalar_trace(src)
    series = {name: cols[name] for name in _csv_list(args.series)} if args.series else {
        k: v for k, v in cols.items() if k != "iteration"}
    snap_path = src / SNAPSHOT_BIN
    if snap_path.is_file() and args.n_loadings > 0:
        snaps = read_matrices(snap_path)
        always = np.argwhere(np.all(snaps != 0, axis=0))
        if always.size:
            pick = RngHandle(args.seed).generator().choice(len(always), size=min(args.n_loadings, len(always)),
                                                           replace=False)
            for j, k in always[np.sort(pick)]:
                series[f"beta_{j + 1}_{k + 1}"] = snaps[:, j, k]
    acf_rows, pacf_rows, trace_rows, status = [], [], [], {}
    for name, x in series.items():
        for it, val in zip(cols["iteration"], x):
            trace_rows.append([name, int(it), repr(float(val))])
        lag = min(args.max_lag, x.size - 1)
        try:
            a, pa = acf(x, lag), pacf(x, lag)
        except DiagnosticsError as exc:
            status[name] = {"acf_undefined": True, "reason": str(exc)}
            continue
        status[name] = {"acf_undefined": False, "max_lag": lag}
        acf_rows += [[name, k, repr(float(v))] for k, v in enumerate(a)]
        pacf_rows += [[name, k, repr(float(v))] for k, v in enumerate(pa)]
    outputs = [out / "acf.csv", out / "pacf.csv", out / "trace_long.csv", out / "diagnostics.json"]
    _tidy_csv(outputs[0], ["series", "lag", "value"], acf_rows)
    _tidy_csv(outputs[1], ["series", "lag", "value"], pacf_rows)
    _tidy_csv(outputs[2], ["series", "iteration", "value"], trace_rows)
    atomic_write_text(outputs[3], json.dumps(status, indent=1) + "\n")
    if (src / SIGMA_BIN).is_file():
        trace = ChainTrace(cols["iteration"].astype(int), cols["xi"].astype(int), cols["support_size"].astype(int),
                           cols["psi"], read_matrices(src / SIGMA_BIN)[0], cols["xi"].astype(int))
        outputs.append(out / "posterior_summary.json")
        atomic_write_text(outputs[-1], json.dumps(summarize(trace).to_dict(), indent=1) + "\n")
    write_manifest(out / "diagnose.manifest.json", argv, args, [src], outputs, started)
    if status and all(s["acf_undefined"] for s in status.values()):
        print("error: autocorrelation undefined for every series (constant traces)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_align(args, argv) -> int:
    started = time.time()
    src = Path(args.snapshots)
    path = src / SNAPSHOT_BIN if src.is_dir() else src
    if not path.is_file():
        raise InputError(f"snapshot file not found: {path} (fit with --snapshots)")
    snaps = read_matrices(path)
    res = align_loadings(list(snaps), rng=RngHandle(args.seed).generator())
    out = Path(args.out)
    outputs = [out / "consensus.csv", out / "raw_mean.csv", out / "alignment.json"]
    _write_matrix_csv(outputs[0], res.consensus)
    _write_matrix_csv(outputs[1], snaps.mean(axis=0))
    info = {"rounds": res.rounds, "working_columns": res.working_columns.tolist(), "n_snapshots": len(snaps)}
    atomic_write_text(outputs[2], json.dumps(info, indent=1) + "\n")
    write_manifest(out / MANIFEST, argv, args, [path], outputs, started)
    return EXIT_OK


GRID_KEYS = {
    "study": str, "design": str, "n_values": _int_list, "p": int, "s_values": _int_list,
    "r_values": _int_list, "replications": int, "methods": _csv_list, "n_iter": int, "burn_in": int,
    "thin": int, "seed": int, "q": int, "q_values": _int_list, "A": float, "r_max": int, "full_scale": str,
}


def parse_grid_file(path) -> tuple[str, dict, list[int]]:
    raw = read_kv_file(path)
    unknown = sorted(set(raw) - set(GRID_KEYS))
    if unknown:
        raise InputError(f"{path}: unknown grid keys {unknown}")
    vals = {}
    for k, v in raw.items():
        try:
            vals[k] = GRID_KEYS[k](v)
        except ValueError:
            raise InputError(f"{path}: bad value for {k}: {v!r}") from None
    study = vals.pop("study", "rank")
    if study not in ("rank", "cov", "sensitivity"):
        raise InputError(f"{path}: study must be rank, cov or sensitivity, got {study!r}")
    q_values = vals.pop("q_values", [10, 20, 50])
    if "seed" in vals:
        vals["base_seed"] = vals.pop("seed")
    return study, vals, q_values


def cmd_experiment(args, argv) -> int:
    started = time.time()
    study, vals, q_values = parse_grid_file(args.grid)
    out = Path(args.out)
    threads = 1 if args.strict else args.threads
    if study == "sensitivity":
        settings = ChainSettings(vals.get("n_iter", 3000), vals.get("burn_in", 500), vals.get("thin", 5))
        results = run_sensitivity_q(
            q_values, design=vals.get("design", "signed_two"), n=vals.get("n_values", [100])[0],
            p=vals.get("p", 200), s=vals.get("s_values", [30])[0], r=vals.get("r_values", [3])[0],
            settings=settings, base_seed=vals.get("base_seed", 0), A=vals.get("A", 0.1))
        rows = [{"q": r.q, "xi_mode": r.xi_mode, "final_xi": int(r.xi_path[-1])} for r in results]
        path_rows = [[r.q, t, int(x)] for r in results for t, x in enumerate(r.xi_path, start=1)]
        outputs = list(write_table(rows, out / "sensitivity"))
        _tidy_csv(out / "xi_traces.csv", ["q", "iteration", "xi"], path_rows)
        outputs.append(out / "xi_traces.csv")
    else:
        full = vals.pop("full_scale", "false").lower() in ("1", "true", "yes")
        if study == "cov":
            vals["methods"] = ["AdaSS"]
        grid = ExperimentGrid.full_scale(threads=threads, **vals) if full else ExperimentGrid(threads=threads, **vals)
        results = run_grid(grid)
        table = rank_table(grid, results) if study == "rank" else cov_table(grid, results)
        outputs = list(write_table(table, out / f"{study}_table"))
    write_manifest(out / MANIFEST, argv, args, [args.grid], outputs, started)
    return EXIT_OK


def cmd_rerun(args, argv) -> int:
    path = Path(args.manifest)
    if not path.is_file():
        raise InputError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text())
    replay = list(manifest["argv"])
    if args.out:
        if "--out" not in replay:
            raise InputError("recorded command has no --out to redirect")
        replay[replay.index("--out") + 1] = args.out
    return main(replay)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, seed=True) -> None:
    p.add_argument("--config", help="flat key=value file; explicit flags take precedence")
    p.add_argument("--strict", action="store_true", help="sequential, timing-free, bit-reproducible run")
    p.add_argument("--threads", type=int, default=1, help="worker processes for replication pools")
    if seed:
        p.add_argument("--seed", type=int, default=0)


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("data", help="n x p CSV (rows are observations) or @name for a bundled dataset")
    p.add_argument("--header", choices=("auto", "yes", "no"), default="auto")
    p.add_argument("--center", action="store_true", help="subtract column means before fitting")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adass", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"adass {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="run the Gibbs sampler on a data file")
    _add_data(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--q", type=int, default=None, help="column budget (default ceil(sqrt(n)))")
    p.add_argument("--A", type=float, default=0.1)
    p.add_argument("--a1", type=float, default=0.01)
    p.add_argument("--a2", type=float, default=0.01)
    p.add_argument("--noise", choices=(HOMOGENEOUS, HETEROGENEOUS), default=HOMOGENEOUS)
    p.add_argument("--factor-cov", choices=(IDENTITY, INVERSE_WISHART), default=IDENTITY)
    p.add_argument("--iw-dof", type=float, default=None)
    p.add_argument("--n-iter", type=int, default=3000)
    p.add_argument("--burn-in", type=int, default=500)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--snapshots", action="store_true", help="keep every retained loading matrix")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("estimate", help="frequentist factor-count estimators")
    _add_data(p)
    _add_common(p)
    p.add_argument("--methods", default=",".join(m.lower() for m in METHODS))
    p.add_argument("--r-max", type=int, default=DEFAULT_R_MAX)
    p.add_argument("--et-weight", type=float, default=ET_WEIGHT, help="ET interpolation weight w")
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    _add_common(p)
    p.add_argument("--design", choices=DESIGNS, default="signed_two")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--s", type=int, default=30)
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--out", required=True, help="CSV path; truth goes to the .json sidecar")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("diagnose", help="ACF/PACF/trace tables from a fit directory")
    _add_common(p)
    p.add_argument("trace", help="directory written by `adass fit`")
    p.add_argument("--out", default=None)
    p.add_argument("--max-lag", type=int, default=40)
    p.add_argument("--series", default=None, help="comma list among xi,support_size,psi")
    p.add_argument("--n-loadings", type=int, default=3, help="random always-nonzero loadings to include")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("experiment", help="run a simulation grid from a key=value file")
    _add_common(p, seed=False)
    p.add_argument("grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("align", help="signed-permutation alignment of loading snapshots")
    _add_common(p)
    p.add_argument("snapshots", help="fit directory or snapshots.bin")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("rerun", help="replay a recorded manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="redirect the output location")
    p.set_defaults(func=cmd_rerun)
    return parser


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        overrides = {}
        for key, value in read_kv_file(args.config).items():
            if key not in known or key in ("config", "func"):
                raise InputError(f"{args.config}: unknown key {key!r} for `{args.command}`")
            overrides[key] = value
        sub.set_defaults(**overrides)
        args = parser.parse_args(argv)
        # argparse skips type conversion for string defaults only when the flag is given
        for action in sub._actions:
            val = getattr(args, action.dest, None)
            if action.dest in overrides and isinstance(val, str) and action.type not in (None, str):
                setattr(args, action.dest, action.type(val))
            elif action.dest in overrides and isinstance(action, argparse._StoreTrueAction) and isinstance(val, str):
                setattr(args, action.dest, val.lower() in ("1", "true", "yes"))
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
        return args.func(args, argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    except (InputError, IngestionError, FileNotFoundError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DecompositionError, EstimationError, DiagnosticsError, StateError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

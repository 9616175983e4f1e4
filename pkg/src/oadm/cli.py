"""``oadm-bench``: generate instances, run solvers, compare and tune.

Everything lives in one output directory (``--out-dir``, overridden by the
``OADM_OUTPUT_DIR`` environment variable)::

    instance.txt         written by ``gen``, read by the other commands
    metrics.csv          per-round rows of every solver (or metrics_<solver>.csv)
    final_iterates.csv   one column per solver with its final estimate of x
    summary.csv          written by ``compare``
    tune.csv             written by ``tune-rho``

``--config FILE`` reads flat ``key = value`` lines whose keys are the long
flag names (dashes or underscores); flags given on the command line win.
Failures print one line ``error: <kind>: <message>`` and exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, OadmError, StructureError, UsageError
from .experiments import (
    METRIC_COLUMNS,
    ExperimentConfig,
    SolverSpec,
    loglog_slope,
    make_instance,
    run_experiment,
    tune_parameter,
)
from .problem import DataGenConfig, load_instance, save_instance

ENV_OUTPUT_DIR = "OADM_OUTPUT_DIR"
INSTANCE_FILE = "instance.txt"
METRICS_FILE = "metrics.csv"
ITERATES_FILE = "final_iterates.csv"
SUMMARY_FILE = "summary.csv"
TUNE_FILE = "tune.csv"
SUMMARY_COLUMNS = ("solver", "final_nnz", "final_objective", "relative_mse", "Rc_T", "R1_T", "regret_slope")
DEFAULT_GRID = "0.01,0.1,1,10,100"
EXIT_FAILURE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _name_list(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _common(p):
    p.add_argument("--out-dir", default=".", help=f"output directory (env {ENV_OUTPUT_DIR} overrides)")
    p.add_argument("--config", help="flat key = value file; command-line flags override it")


def _instance_flag(p):
    p.add_argument("--instance", help=f"instance file (default <out-dir>/{INSTANCE_FILE})")
    p.add_argument("--loss-scale", type=float, default=1.0,
                   help="per-example loss s (a x - b)^2; 0.5 gives the half squared error")


def _solver_flags(p):
    p.add_argument("--rho", type=float, default=1.0, help="penalty for oadm and admm")
    p.add_argument("--eta", type=float, default=1.0, help="oadm proximal weight (slope when --eta-mode linear)")
    p.add_argument("--eta-mode", choices=("constant", "linear"), default="linear")
    p.add_argument("--tau", type=float, default=1.0, help="fobos step scale")
    p.add_argument("--tau-decay", choices=("none", "sqrt"), default="none")
    p.add_argument("--gamma", type=float, default=1.0, help="rda proximal strength")
    p.add_argument("--passes", type=int, default=100, help="cyclic passes over the N examples")


def build_parser():
    parser = _Parser(prog="oadm-bench", description="Online ADM benchmark harness.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a seeded instance file")
    _common(g)
    g.add_argument("--problem", choices=("lasso", "tv"), default="lasso")
    g.add_argument("--N", type=int, default=100, help="number of examples")
    g.add_argument("--n", type=int, default=200, help="dimension")
    g.add_argument("--k", type=int, default=20, help="nonzeros of x0 (lasso)")
    g.add_argument("--segments", type=int, default=3, help="constant pieces of x0 (tv)")
    g.add_argument("--noise-sigma", type=float, default=0.1)
    g.add_argument("--q", type=float, default=0.5, help="lasso lambda as a fraction of ||A^T b / N||_inf")
    g.add_argument("--lam", type=float, help="explicit lambda (tv default 0.001)")
    g.add_argument("--seed", type=int, required=True)

    r = sub.add_parser("run", help="run solvers and write per-round metrics")
    _common(r)
    _instance_flag(r)
    _solver_flags(r)
    r.add_argument("--solvers", type=_name_list, default=["oadm"], help="comma list of oadm, admm, fobos, rda")
    r.add_argument("--every", type=int, default=1, help="record every k-th round (the last is always kept)")
    r.add_argument("--per-file", type=_bool, nargs="?", const=True, default=False, metavar="BOOL",
                   help="one metrics_<solver>.csv per solver instead of one interleaved file")
    r.add_argument("--no-regret", action="store_true", help="skip the comparator and leave regret columns NaN")

    c = sub.add_parser("compare", help="summarise the outputs of a previous run")
    _common(c)
    _instance_flag(c)

    t = sub.add_parser("tune-rho", help="grid search of the step parameter on a held-out split")
    _common(t)
    _instance_flag(t)
    _solver_flags(t)
    t.add_argument("--solver", default="oadm", help="oadm/admm tune rho, fobos tau, rda gamma")
    t.add_argument("--grid", type=_float_list, default=_float_list(DEFAULT_GRID))
    t.add_argument("--frac", type=float, default=0.8, help="training fraction of the split")
    t.add_argument("--split-seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------


def read_config(path):
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}")
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser, sub, argv):
    """Install config values as subcommand defaults, then parse; flags still win."""
    pre = _Parser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in sub:
        _install_defaults(sub[known.command], known.command, read_config(known.config))
    return parser.parse_args(argv)


def _install_defaults(p, command, values):
    dests = {a.dest: a for a in p._actions}
    converted = {}
    for key, value in values.items():
        action = dests.get(key)
        if action is None or key in ("help", "config"):
            raise ConfigError(f"unknown config key {key!r} for {command}")
        if isinstance(action, argparse._StoreTrueAction):
            converted[key] = _bool(value)
        elif action.type is not None:
            try:
                converted[key] = action.type(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}")
        else:
            converted[key] = value
        if action.choices is not None and converted[key] not in action.choices:
            raise ConfigError(f"config key {key!r}: {value!r} not in {sorted(action.choices)}")
        action.required = False
    p.set_defaults(**converted)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def output_dir(args):
    path = Path(os.environ.get(ENV_OUTPUT_DIR) or args.out_dir)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, exc.strerror, str(path))
    return path


def _instance(args, out):
    path = Path(args.instance) if args.instance else out / INSTANCE_FILE
    if not path.exists():
        raise UsageError(f"instance file not found: {path}")
    return load_instance(path).with_loss_scale(args.loss_scale)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _specs(args, names):
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate solver in {','.join(names)}")
    return tuple(
        SolverSpec(name, rho=args.rho, eta=args.eta, eta_mode=args.eta_mode,
                   tau=args.tau, tau_decay=args.tau_decay, gamma=args.gamma)
        for name in names
    )


def cmd_gen(args, stdout):
    out = output_dir(args)
    data = DataGenConfig(args.N, args.n, args.k if args.problem == "lasso" else 0, args.segments,
                         args.noise_sigma, args.seed)
    inst = make_instance(ExperimentConfig(args.problem, data, q=args.q, lam=args.lam))
    path = out / INSTANCE_FILE
    save_instance(inst, path)
    print(f"wrote {path} (N={inst.N} n={inst.n} kind={inst.kind} lam={inst.lam:.6g})", file=stdout)
    return 0


def cmd_run(args, stdout):
    out = output_dir(args)
    inst = _instance(args, out)
    cfg = ExperimentConfig(inst.kind, solvers=_specs(args, args.solvers), passes=args.passes,
                           loss_scale=args.loss_scale, every=args.every)
    _, results = run_experiment(cfg, inst=inst, regret=not args.no_regret)
    if args.per_file:
        for res in results:
            path = out / f"metrics_{res.name}.csv"
            _write_csv(path, METRIC_COLUMNS, ([row[c] for c in METRIC_COLUMNS] for row in res.rows))
            print(f"wrote {path}", file=stdout)
    else:
        merged = sorted((row for res in results for row in res.rows), key=lambda r: r["t"])
        path = out / METRICS_FILE
        _write_csv(path, METRIC_COLUMNS, ([row[c] for c in METRIC_COLUMNS] for row in merged))
        print(f"wrote {path}", file=stdout)
    estimates = np.column_stack([res.estimate for res in results])
    _write_csv(out / ITERATES_FILE, ["index"] + [res.name for res in results],
               ([i] + list(estimates[i]) for i in range(inst.n)))
    print(f"wrote {out / ITERATES_FILE}", file=stdout)
    return 0


def _read_metrics(out):
    files = [out / METRICS_FILE] if (out / METRICS_FILE).exists() else sorted(out.glob("metrics_*.csv"))
    if not files:
        raise UsageError(f"no metrics CSV in {out}; run the 'run' command first")
    by_solver = {}
    for path in files:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != METRIC_COLUMNS:
                raise StructureError(f"{path}: unexpected header {reader.fieldnames}")
            for row in reader:
                by_solver.setdefault(row["solver"], []).append(row)
    return by_solver


def _read_iterates(out, n):
    path = out / ITERATES_FILE
    if not path.exists():
        raise UsageError(f"missing {path}; run the 'run' command first")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(body) != n:
        raise StructureError(f"{path}: {len(body)} rows but the instance has n={n}")
    data = np.array([[float(v) for v in row[1:]] for row in body]).reshape(n, len(header) - 1)
    return {name: data[:, j] for j, name in enumerate(header[1:])}


def summarize(by_solver, iterates, inst):
    """One summary row per solver, in the order the solvers appear."""
    rows = []
    for name, recs in by_solver.items():
        last = recs[-1]
        t = np.array([float(r["t"]) for r in recs])
        r1 = np.array([float(r["R1_running"]) for r in recs])
        x = iterates.get(name)
        mse = inst.relative_mse(x) if x is not None and inst.x0 is not None and np.any(inst.x0) else math.nan
        rows.append({
            "solver": name,
            "final_nnz": int(last["nnz"]),
            "final_objective": float(last["objective"]),
            "relative_mse": mse,
            "Rc_T": float(last["Rc_running"]),
            "R1_T": float(last["R1_running"]),
            "regret_slope": loglog_slope(t, r1),
        })
    return rows


def format_table(rows, columns):
    cells = [[_cell(r[c]) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def _cell(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def cmd_compare(args, stdout):
    out = output_dir(args)
    inst = _instance(args, out)
    rows = summarize(_read_metrics(out), _read_iterates(out, inst.n), inst)
    _write_csv(out / SUMMARY_FILE, SUMMARY_COLUMNS, ([r[c] for c in SUMMARY_COLUMNS] for r in rows))
    print(format_table(rows, SUMMARY_COLUMNS), file=stdout)
    return 0


def cmd_tune(args, stdout):
    out = output_dir(args)
    inst = _instance(args, out)
    (spec,) = _specs(args, [args.solver])
    best, scores = tune_parameter(inst, spec, args.passes, grid=args.grid, frac=args.frac, seed=args.split_seed)
    key = {"oadm": "rho", "admm": "rho", "fobos": "tau", "rda": "gamma"}[spec.name]
    _write_csv(out / TUNE_FILE, (key, "heldout_objective"), scores)
    for v, s in scores:
        print(f"{key}={v:g} heldout_objective={s:.6g}", file=stdout)
    print(f"best {key}={best:g}", file=stdout)
    return 0


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare, "tune-rho": cmd_tune}


def main(argv=None, stdout=None, stderr=None):
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    try:
        args = _apply_config(parser, sub, argv)
        return COMMANDS[args.command](args, stdout)
    except OadmError as exc:
        print(f"error: {exc.kind}: {_one_line(exc)}", file=stderr)
    except OSError as exc:
        where = f"{exc.filename}: " if exc.filename else ""
        print(f"error: io: {where}{_one_line(exc.strerror or exc)}", file=stderr)
    return EXIT_FAILURE


def _one_line(msg):
    return " ".join(str(msg).split())


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Subcommands: ``simulate``, ``filter``, ``smooth``, ``quad-info``.
Exit status is 0 on success, 2 for usage, configuration or input errors and
3 for numerical failures.  Every error prints one line starting with
``error:`` to stderr.

Data files are CSV with a header row ``t, x1..xn, u1..um, y1..yp``; state
columns are optional (they are used as ground truth for RMSE) and an empty
observation cell marks a missing observation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import gaussian
from .errors import NlgmpError, NumericalError, PreconditionError
from .expr import ExprSyntaxError
from .quadrature import RuleSpec
from .smoother import mbf_smooth, rmse, rts_smooth, run_filter
from .ssm import bundled_model_path, bundled_models, load_model, simulate, time_index_inputs, validate_model


MODEL_HELP = "model JSON file, or the name of a bundled model (ungm, ungm_linear, tracking_linear)"


class UsageError(Exception):
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _info_stream(args):
    # metrics go to stdout unless stdout already carries the data
    return sys.stdout if args.output not in (None, "-") else sys.stderr


def _load_model(path):
    if not Path(path).exists() and path in bundled_models():
        path = bundled_model_path(path)
    try:
        model = load_model(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file (bundled models: {', '.join(bundled_models())})") from None
    except (NlgmpError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from None
    problems = validate_model(model)
    if problems:
        raise UsageError(f"{path}: invalid model: {'; '.join(problems)}")
    return model


def _rule_spec(args, n):
    spec = RuleSpec(args.method, args.order, args.kappa)
    try:
        spec.build(n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return spec


def _read_inputs_csv(path, m):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = [f"u{j + 1}" for j in range(m)]
    try:
        return np.array([[float(r[c]) for c in cols] for r in rows]).reshape(len(rows), m)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: bad input table ({exc})") from None


def _read_data(path, model):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except FileNotFoundError:
        raise UsageError(f"{path}: no such file") from None
    except StopIteration:
        raise UsageError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    index = {name: k for k, name in enumerate(header)}
    n, m, p = model.state_dim, model.input_dim, model.obs_dim
    y_cols = [f"y{j + 1}" for j in range(p)]
    u_cols = [f"u{j + 1}" for j in range(m)]
    x_cols = [f"x{j + 1}" for j in range(n)]
    for c in y_cols + u_cols:
        if c not in index:
            raise UsageError(f"{path}: missing column {c!r}")
    has_truth = all(c in index for c in x_cols)

    def cell(row, name, line, allow_empty=False):
        text = row[index[name]].strip() if index[name] < len(row) else ""
        if text == "":
            if allow_empty:
                return math.nan
            raise UsageError(f"{path}:{line}: empty cell in column {name!r}")
        try:
            return float(text)
        except ValueError:
            raise UsageError(f"{path}:{line}: column {name!r} is not a number: {text!r}") from None

    ys, us, xs = [], [], []
    for k, row in enumerate(rows):
        line = k + 2
        ys.append([cell(row, c, line, allow_empty=True) for c in y_cols])
        us.append([cell(row, c, line) for c in u_cols])
        if has_truth:
            xs.append([cell(row, c, line) for c in x_cols])
    obs = []
    for k, y in enumerate(ys):
        y = np.array(y)
        if np.any(np.isnan(y)) and not np.all(np.isnan(y)):
            raise UsageError(f"{path}:{k + 2}: partially missing observation row")
        obs.append(None if np.all(np.isnan(y)) else y)
    inputs = np.array(us, dtype=float).reshape(len(rows), m)
    truth = np.array(xs, dtype=float).reshape(len(rows), n) if has_truth else None
    return obs, inputs, truth


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    if args.inputs:
        inputs = _read_inputs_csv(args.inputs, model.input_dim)
        if args.steps is not None and args.steps != inputs.shape[0]:
            raise UsageError(f"--steps {args.steps} disagrees with {inputs.shape[0]} input rows")
    else:
        if args.steps is None:
            raise UsageError("--steps is required without --inputs")
        inputs = time_index_inputs(model, args.steps)
    if inputs.shape[0] < 1:
        raise UsageError("need at least one step")
    traj = simulate(model, inputs, seed=args.seed)
    header = ["t"] + [f"x{j + 1}" for j in range(model.state_dim)]
    header += [f"u{j + 1}" for j in range(model.input_dim)] + [f"y{j + 1}" for j in range(model.obs_dim)]
    rows = [
        [str(i + 1)] + [_fmt(v) for v in np.concatenate([traj.states[i], traj.inputs[i], traj.observations[i]])]
        for i in range(traj.length)
    ]
    _write_csv(args.output, header, rows)
    print(f"seed={args.seed}", file=_info_stream(args))
    return 0


def _prepare(args):
    model = _load_model(args.model)
    spec = _rule_spec(args, model.state_dim)
    smoother = getattr(args, "smoother", None)
    if smoother is None and hasattr(args, "smoother"):
        smoother = "mbf" if model.h.is_linear else "rts"
        args.smoother = smoother
    if smoother == "mbf" and not model.h.is_linear:
        raise UsageError(
            "the mbf smoother requires a linear output h(x) = H x (give h as a matrix) or use --smoother rts"
        )
    obs, inputs, truth = _read_data(args.data, model)
    if args.steps is not None and args.steps != len(obs):
        raise UsageError(f"{args.data}: {len(obs)} observation rows, expected {args.steps}")
    if not obs:
        raise UsageError(f"{args.data}: no data rows")
    return model, spec, obs, inputs, truth


def _moments_json(g):
    return {"mean": g.mean.tolist(), "cov": g.cov.tolist()}


def cmd_filter(args) -> int:
    model, spec, obs, inputs, truth = _prepare(args)
    fs = run_filter(model, obs, inputs, spec)
    n = model.state_dim
    info = _info_stream(args)
    score = rmse(fs.filtered, truth) if truth is not None else None
    if args.format == "json":
        doc = {
            "method": spec.method,
            "steps": [{"t": i + 1, "filtered": _moments_json(g)} for i, g in enumerate(fs.filtered)],
        }
        if score is not None:
            doc["rmse"] = score
        _write_text(args.output, json.dumps(doc, indent=2) + "\n")
    else:
        header = ["t"] + [f"m{j + 1}" for j in range(n)] + [f"var{j + 1}" for j in range(n)]
        rows = [
            [str(i + 1)] + [_fmt(v) for v in np.concatenate([g.mean, np.diag(g.cov)])]
            for i, g in enumerate(fs.filtered)
        ]
        _write_csv(args.output, header, rows)
    if score is not None:
        print(f"rmse={_fmt(score)}", file=info)
    return 0


def _write_text(path, text):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_smooth(args) -> int:
    model, spec, obs, inputs, truth = _prepare(args)
    fs = run_filter(model, obs, inputs, spec)
    smoothed = mbf_smooth(fs, model) if args.smoother == "mbf" else rts_smooth(fs, model)
    n = model.state_dim
    info = _info_stream(args)
    scores = None
    if truth is not None:
        scores = (rmse(fs.filtered, truth), rmse(smoothed.marginals, truth))
    if args.format == "json":
        steps = []
        for i, (f, s) in enumerate(zip(fs.filtered, smoothed.marginals)):
            entry = {"t": i + 1, "filtered": _moments_json(f), "smoothed": _moments_json(s)}
            if smoothed.inputs is not None:
                entry["smoothed_input"] = _moments_json(smoothed.inputs[i])
            steps.append(entry)
        doc = {"method": spec.method, "smoother": args.smoother, "steps": steps}
        if scores is not None:
            doc["filtered_rmse"], doc["smoothed_rmse"] = scores
        _write_text(args.output, json.dumps(doc, indent=2) + "\n")
    else:
        header = ["t"]
        for prefix in ("filt", "smooth"):
            header += [f"{prefix}_m{j + 1}" for j in range(n)] + [f"{prefix}_var{j + 1}" for j in range(n)]
        rows = []
        for i, (f, s) in enumerate(zip(fs.filtered, smoothed.marginals)):
            vals = np.concatenate([f.mean, np.diag(f.cov), s.mean, np.diag(s.cov)])
            rows.append([str(i + 1)] + [_fmt(v) for v in vals])
        _write_csv(args.output, header, rows)
    if scores is not None:
        print(f"filtered_rmse={_fmt(scores[0])}", file=info)
        print(f"smoothed_rmse={_fmt(scores[1])}", file=info)
    if args.telemetry:
        for i, (rec, count) in enumerate(zip(fs.records, smoothed.inversions)):
            meas = rec.factorizations.get("measurement", 0)
            print(f"step={i + 1} backward_inversions={count} filter_measurement_factorizations={meas}", file=info)
    return 0


def cmd_quad_info(args) -> int:
    spec = _rule_spec(args, args.dim)
    rule = spec.build(args.dim)
    out = sys.stdout
    print(f"# points={rule.size}", file=out)
    print(f"# degree={rule.degree}", file=out)
    header = [f"z{j + 1}" for j in range(rule.dim)] + ["weight"]
    rows = [[_fmt(v) for v in z] + [_fmt(w)] for z, w in zip(rule.points, rule.weights)]
    _write_csv(None, header, rows)
    return 0


def _add_rule_options(p):
    p.add_argument("--method", choices=["ut", "ghq", "srt"], default="ghq", help="quadrature rule (default ghq)")
    p.add_argument("--order", type=int, default=3, help="Gauss-Hermite points per axis (default 3)")
    p.add_argument("--kappa", type=float, default=None, help="unscented kappa (default 3 - n)")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="nlgmp", description="Sigma-point filtering and smoothing by message passing.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample a trajectory from a model")
    p.add_argument("--model", required=True, help=MODEL_HELP)
    p.add_argument("--steps", type=int)
    p.add_argument("--inputs", help="CSV with columns u1..um (default: u_t = t)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_simulate)

    for name, func, helptext in (
        ("filter", cmd_filter, "run the sigma-point filter"),
        ("smooth", cmd_smooth, "run the filter and a backward smoother"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--model", required=True, help=MODEL_HELP)
        p.add_argument("--data", required=True, help="CSV with columns t, [x..], u.., y..")
        p.add_argument("--steps", type=int, help="expected number of rows")
        _add_rule_options(p)
        p.add_argument("--output", "-o")
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        if name == "smooth":
            p.add_argument("--smoother", choices=["rts", "mbf"], default=None)
            p.add_argument("--telemetry", action="store_true", help="print per-step factorization counts")
        p.set_defaults(func=func)

    p = sub.add_parser("quad-info", help="print a quadrature rule")
    _add_rule_options(p)
    p.add_argument("--dim", type=int, required=True)
    p.set_defaults(func=cmd_quad_info)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        try:
            gaussian.TOLERANCES = gaussian.Tolerances.from_env()
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        args = parser.parse_args(argv)
        return args.func(args)
    except (UsageError, PreconditionError, ExprSyntaxError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (NlgmpError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

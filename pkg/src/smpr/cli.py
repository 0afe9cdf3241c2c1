"""Command-line surface: fit, predict and simulate subcommands.

CSV in (header row, UTF-8, '.' decimal separator), JSON/CSV out.  Exit
codes: 0 success, 2 validation problems, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import tempfile

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError, SingularMatrixError, SmprError, StudyUnstableError
from .estimator import EstimatorConfig, StepHazard, WeightSpec, objective
from .functionals import CovariateProfile, kaplan_meier, ratio_curve, survivor_curve
from .inference import infer, joint_test, wald_ci
from .model import SurvivalDataset, Theta
from .simharness import Scenario, run_study, summary_table
from .solver import FitResult, SolverConfig, fit

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.17g}"


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path: str, header: list[str], rows: list[list]):
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


def _parse_tau(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(text)
    except ValueError as exc:
        raise InvalidInputError(f"invalid --tau value {text!r}") from exc


def _resolve_seed(seed) -> int:
    if seed is not None:
        return int(seed)
    return int(np.random.SeedSequence().entropy) % (2**63)


def _read_table(path: str) -> tuple[list[str], list[dict]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise InvalidInputError(f"{path}: missing header row")
            rows = list(reader)
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc}") from exc
    return list(reader.fieldnames), rows


def _column_floats(rows: list[dict], col: str, path: str) -> np.ndarray:
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        raw = row.get(col)
        if raw is None or raw == "":
            raise InvalidInputError(f"{path}:{i + 2}: missing value in column {col!r}")
        try:
            out[i] = float(raw)
        except ValueError as exc:
            raise InvalidInputError(f"{path}:{i + 2}: cannot parse {raw!r} in column {col!r}") from exc
    return out


def _load_dataset(path, time_col, event_col, x_cols, z_cols, log_time_flag):
    header, rows = _read_table(path)
    for col in [time_col, event_col, *x_cols, *z_cols]:
        if col not in header:
            raise InvalidInputError(f"{path}: column {col!r} not found (header: {header})")
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    time = _column_floats(rows, time_col, path)
    event_raw = _column_floats(rows, event_col, path)
    if not np.all(np.isin(event_raw, (0.0, 1.0))):
        raise InvalidInputError(f"{path}: event column {event_col!r} must contain only 0/1")
    if log_time_flag:
        log_time = time
    else:
        if np.any(time <= 0):
            raise InvalidInputError(
                f"{path}: non-positive times require --log-time if values are already logged"
            )
        log_time = np.log(time)
    n = len(rows)
    x = np.column_stack([_column_floats(rows, c, path) for c in x_cols]) if x_cols else np.empty((n, 0))
    z = np.column_stack([_column_floats(rows, c, path) for c in z_cols]) if z_cols else np.empty((n, 0))
    data = SurvivalDataset(log_time=log_time, event=event_raw.astype(bool), x=x, z=z)
    if not np.any(data.event):
        raise InvalidInputError(f"{path}: dataset contains no events")
    return data, rows


def _split_cols(text: str | None) -> list[str]:
    if not text:
        return []
    return [c.strip() for c in text.split(",") if c.strip()]


def cmd_fit(args) -> int:
    x_cols = _split_cols(args.x_cols)
    z_cols = _split_cols(args.z_cols)
    if not x_cols and not z_cols:
        raise InvalidInputError("at least one of --x-cols / --z-cols is required")
    data, _ = _load_dataset(args.input, args.time_col, args.event_col, x_cols, z_cols, args.log_time)
    seed = _resolve_seed(args.seed)
    cfg = EstimatorConfig(tau=_parse_tau(args.tau), weight=WeightSpec(args.weight))
    fit_result = fit(data, cfg, SolverConfig())

    doc = {
        "model": {
            "time_col": args.time_col,
            "event_col": args.event_col,
            "x_cols": x_cols,
            "z_cols": z_cols,
            "log_time": bool(args.log_time),
        },
        "config": {
            "tau": None if math.isinf(cfg.tau) else cfg.tau,
            "weight": cfg.weight.value,
            "m": args.m,
            "level": args.level,
            "seed": seed,
        },
        "n": data.n,
        "converged": fit_result.converged,
        "objective_value": fit_result.objective_value,
        "n_evaluations": fit_result.n_evaluations,
        "diagnostic": fit_result.diagnostic,
        "theta": {
            "beta": fit_result.theta_hat.beta.tolist(),
            "gamma": fit_result.theta_hat.gamma.tolist(),
        },
        "hazard": {
            "times": fit_result.hazard.times.tolist(),
            "increments": fit_result.hazard.increments.tolist(),
        },
    }

    if not fit_result.converged:
        _atomic_write(os.path.join(args.out, "fit.json"), json.dumps(doc, indent=2) + "\n")
        print(f"fit did not converge: {fit_result.diagnostic}", file=sys.stderr)
        return EXIT_NUMERICAL

    res = infer(data, fit_result, m=args.m, seed=seed)
    doc["covariance"] = res.theta_cov.tolist()
    _atomic_write(os.path.join(args.out, "fit.json"), json.dumps(doc, indent=2) + "\n")

    se = np.sqrt(np.diag(res.theta_cov))
    theta = fit_result.theta_hat.vector
    p = len(x_cols)
    joint = {}
    for j, name in enumerate(x_cols):
        if name in z_cols:
            k = p + z_cols.index(name)
            _, pval = joint_test(fit_result.theta_hat, res.theta_cov, (j, k))
            joint[name] = pval
    rows = []
    for j, name in enumerate(x_cols):
        zstat = theta[j] / se[j] if se[j] > 0 else math.inf
        rows.append(["location", name, theta[j], se[j], 2.0 * float(ndtr(-abs(zstat))), joint.get(name)])
    for k, name in enumerate(z_cols):
        idx = p + k
        zstat = theta[idx] / se[idx] if se[idx] > 0 else math.inf
        rows.append(["scale", name, theta[idx], se[idx], 2.0 * float(ndtr(-abs(zstat))), joint.get(name)])
    _write_csv(
        os.path.join(args.out, "coefficients.csv"),
        ["component", "covariate", "est", "se", "p_value", "joint_p_value"],
        rows,
    )
    return EXIT_OK


def _load_fit(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read fit artifact {path}: {exc}") from exc


def cmd_predict(args) -> int:
    doc = _load_fit(args.fit)
    model = doc["model"]
    x_cols, z_cols = model["x_cols"], model["z_cols"]
    tau = doc["config"]["tau"]
    cfg = EstimatorConfig(
        tau=math.inf if tau is None else float(tau),
        weight=WeightSpec(doc["config"]["weight"]),
    )
    theta = Theta(beta=doc["theta"]["beta"], gamma=doc["theta"]["gamma"])
    hazard = StepHazard(
        times=np.asarray(doc["hazard"]["times"]),
        increments=np.asarray(doc["hazard"]["increments"]),
    )
    data, raw_rows = _load_dataset(
        args.input, model["time_col"], model["event_col"], x_cols, z_cols, model["log_time"]
    )
    fit_result = FitResult(
        theta_hat=theta,
        hazard=hazard,
        objective_value=objective(data, theta, cfg),
        converged=bool(doc["converged"]),
        cfg=cfg,
        solver=SolverConfig(),
        n=data.n,
    )
    seed = _resolve_seed(args.seed if args.seed is not None else doc["config"]["seed"])
    res = infer(data, fit_result, m=args.m, seed=seed)

    header, prows = _read_table(args.profiles)
    for col in x_cols + z_cols:
        if col not in header:
            raise InvalidInputError(f"{args.profiles}: profile column {col!r} missing")
    profiles = []
    for i, _ in enumerate(prows):
        x = np.array([_column_floats(prows, c, args.profiles)[i] for c in x_cols]) if x_cols else np.empty(0)
        z = np.array([_column_floats(prows, c, args.profiles)[i] for c in z_cols]) if z_cols else np.empty(0)
        profiles.append(CovariateProfile(x=x, z=z))
    if not profiles:
        raise InvalidInputError(f"{args.profiles}: no profiles")

    for k, profile in enumerate(profiles, start=1):
        t, s, lo, hi = survivor_curve(res.draws, fit_result, profile, args.level)
        _write_csv(
            os.path.join(args.out, f"survivor_profile_{k}.csv"),
            ["time", "survivor", "lo", "hi"],
            [list(row) for row in zip(t, s, lo, hi)],
        )
    for k, profile in enumerate(profiles[1:], start=2):
        pis, ratio, lo, hi = ratio_curve(res.draws, fit_result, profile, profiles[0], args.level)
        _write_csv(
            os.path.join(args.out, f"ratio_profile_{k}_vs_1.csv"),
            ["pi", "ratio", "lo", "hi"],
            [list(row) for row in zip(pis, ratio, lo, hi)],
        )

    if args.km_group_col:
        col = args.km_group_col
        if col not in raw_rows[0]:
            raise InvalidInputError(f"{args.input}: group column {col!r} not found")
        groups = sorted({row[col] for row in raw_rows})
        time = np.exp(data.log_time)
        for g in groups:
            mask = np.array([row[col] == g for row in raw_rows])
            t, s = kaplan_meier(time[mask], data.event[mask])
            _write_csv(
                os.path.join(args.out, f"km_{g}.csv"),
                ["time", "survivor"],
                [list(row) for row in zip(t, s)],
            )
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _resolve_seed(args.seed)
    scenario = Scenario(
        n=args.n,
        censor_target=args.cens,
        tau=_parse_tau(args.tau),
        weight=WeightSpec(args.weight),
        replicates=args.replicates,
        m=args.m,
        seed=seed,
    )
    summary = run_study(scenario, progress=args.progress)
    table = summary_table(summary)
    if scenario.replicates == 1:
        for row in table:
            row["se"] = None
    _write_csv(
        os.path.join(args.out, "summary.csv"),
        ["quantity", "bias", "se", "see", "coverage"],
        [[r["quantity"], r["bias"], r["se"], r["see"], r["coverage"]] for r in table],
    )
    doc = {
        "scenario": {
            "n": scenario.n,
            "censor_target": scenario.censor_target,
            "tau": None if math.isinf(scenario.tau) else scenario.tau,
            "weight": scenario.weight.value,
            "replicates": scenario.replicates,
            "m": scenario.m,
            "seed": seed,
        },
        "censor_location": summary.censor_location,
        "realized_censoring": summary.realized_censoring,
        "converged_replicates": summary.replicates,
        "failed_replicates": summary.failed,
        "summary": table,
    }
    _atomic_write(os.path.join(args.out, "summary.json"), json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smpr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the model to a CSV dataset")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--time-col", required=True)
    p_fit.add_argument("--event-col", required=True)
    p_fit.add_argument("--x-cols", default="", help="comma-separated location covariate columns")
    p_fit.add_argument("--z-cols", default="", help="comma-separated scale covariate columns")
    p_fit.add_argument("--log-time", action="store_true", help="time column is already on the log scale")
    p_fit.add_argument("--tau", default="inf")
    p_fit.add_argument("--weight", choices=[w.value for w in WeightSpec], default="logrank")
    p_fit.add_argument("--m", type=int, default=1000)
    p_fit.add_argument("--level", type=float, default=0.95)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_pred = sub.add_parser("predict", help="survivor and quantile-ratio curves from a fit artifact")
    p_pred.add_argument("--fit", required=True, help="path to fit.json")
    p_pred.add_argument("--input", required=True, help="the dataset the model was fitted on")
    p_pred.add_argument("--profiles", required=True, help="CSV of covariate profiles")
    p_pred.add_argument("--km-group-col", default=None, help="emit a Kaplan-Meier CSV per level of this column")
    p_pred.add_argument("--m", type=int, default=1000)
    p_pred.add_argument("--level", type=float, default=0.95)
    p_pred.add_argument("--seed", type=int, default=None)
    p_pred.add_argument("--out", required=True)
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="run a Monte-Carlo study scenario")
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--cens", type=float, default=0.2)
    p_sim.add_argument("--tau", default="inf")
    p_sim.add_argument("--weight", choices=[w.value for w in WeightSpec], default="logrank")
    p_sim.add_argument("--replicates", type=int, default=500)
    p_sim.add_argument("--m", type=int, default=1000)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--progress", action="store_true")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SingularMatrixError, StudyUnstableError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SmprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

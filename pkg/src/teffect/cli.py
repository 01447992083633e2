"""Command-line surface: ``teffect estimate | simulate | report``.

Configuration is a single JSON document; a handful of flags override the
matching config fields (flags win).  The config is echoed into every output
so a result file documents how it was produced.  Exit codes: 0 success,
1 validation or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np
from scipy.stats import norm

from .api import AnalysisSession
from .crossval import CvGrid
from .data import Sample, require_valid
from .exceptions import (
    ConfigError,
    ParseError,
    SchemaMismatch,
    TeffectError,
    ValidationFailed,
)
from .fileio import atomic_write_text, format_float
from .network import NetworkConfig
from .sim import EstimandKey, SimConfig, parse_estimand, run_replications

REPORT_COLUMNS = (
    "estimand", "estimator", "n", "p", "R",
    "rate", "bias", "emp_sd", "est_sd", "truth", "failures",
)
_METRICS = ("rate", "bias", "emp_sd", "est_sd", "failures")


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------


def ingest_csv(path: str, roles: dict | None = None) -> Sample:
    """Read a headered CSV into a validated Sample.

    roles maps {"outcome": col, "treatment": col, "covariates": [cols]}.
    Outcome defaults to "y", treatment to "d", covariates to every other
    column in header order.  Cell errors carry the 1-based data row and the
    column name; the assembled sample is validated before returning.
    """
    roles = roles or {}
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    outcome_col = roles.get("outcome", "y")
    treatment_col = roles.get("treatment", "d")
    covariate_cols = roles.get("covariates")
    if covariate_cols is None:
        covariate_cols = [h for h in header if h not in (outcome_col, treatment_col)]
    missing = [c for c in [outcome_col, treatment_col, *covariate_cols] if c not in header]
    if missing:
        raise ConfigError(f"{path}: columns not found: {', '.join(missing)}")

    index = {name: header.index(name) for name in header}

    def cell(row_values, row_number, name):
        try:
            return float(row_values[index[name]])
        except (ValueError, IndexError):
            raise ParseError(row_number, name) from None

    y = np.empty(len(rows))
    d = np.empty(len(rows))
    X = np.empty((len(rows), len(covariate_cols)))
    for i, values in enumerate(rows):
        number = i + 1  # 1-based data row, header excluded
        y[i] = cell(values, number, outcome_col)
        d[i] = cell(values, number, treatment_col)
        for j, name in enumerate(covariate_cols):
            X[i, j] = cell(values, number, name)

    sample = Sample.from_arrays(y, d, X)
    require_valid(sample)
    return sample


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def _check_keys(doc: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _grid_from_config(doc: dict) -> CvGrid:
    _check_keys(doc, {
        "widths", "learning_rates", "batch_sizes", "epochs",
        "folds", "activation", "weight_bound",
    }, "grid")
    kwargs = dict(doc)
    if "widths" in kwargs:
        kwargs["widths"] = tuple(tuple(w) for w in kwargs["widths"])
    for key in ("learning_rates", "batch_sizes", "epochs"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return CvGrid(**kwargs)


def _network_from_config(doc: dict) -> NetworkConfig:
    _check_keys(doc, {
        "widths", "activation", "weight_bound",
        "learning_rate", "batch_size", "epochs", "seed",
    }, "network")
    kwargs = dict(doc)
    if "widths" in kwargs:
        kwargs["widths"] = tuple(kwargs["widths"])
    return NetworkConfig(**kwargs)


def _override(config: dict, args, names) -> dict:
    merged = dict(config)
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    return merged


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------

_ESTIMATE_KEYS = {
    "data", "roles", "estimands", "weighting", "alpha", "trim", "seed",
    "backend", "grid", "score_config", "out", "format", "emit_curves",
}


def _estimand_requests(config: dict):
    """Normalize the estimand list to (EstimandKey, weighting) pairs."""
    default_weighting = config.get("weighting", "ipw")
    raw = config.get("estimands", ["ate"])
    if not raw:
        raise ConfigError("estimands list is empty")
    requests = []
    for item in raw:
        if isinstance(item, str):
            requests.append((parse_estimand(item), default_weighting))
            continue
        if isinstance(item, dict):
            _check_keys(item, {"kind", "tau", "treated_level", "weighting"}, "estimand")
            kind = item.get("kind")
            if kind not in ("mean", "quantile", "expectile"):
                raise ConfigError(f"unknown estimand kind {kind!r}")
            tau = item.get("tau")
            if kind != "mean":
                if tau is None:
                    raise ConfigError(f"estimand kind {kind!r} needs a tau")
                tau = float(tau)
                if not 0.0 < tau < 1.0:
                    raise ConfigError("tau must lie in (0, 1)")
            treated = item.get("treated_level")
            key = EstimandKey(kind, tau=tau,
                              treated_level=None if treated is None else int(treated))
            requests.append((key, item.get("weighting", default_weighting)))
            continue
        raise ConfigError(f"estimand entries must be strings or objects, got {item!r}")
    return requests


def _chosen_hyperparameters(session: AnalysisSession) -> dict:
    chosen = {}
    for (kind, level), cv in session.cv_tables.items():
        best = cv.best
        chosen[f"{kind}_{level}"] = {
            "widths": list(best.widths),
            "learning_rate": best.learning_rate,
            "batch_size": best.batch_size,
            "epochs": best.epochs,
            "activation": best.activation,
            "weight_bound": best.weight_bound,
        }
    return chosen


def _emit_curves(path: str, sample: Sample, session: AnalysisSession, points: int = 41) -> None:
    """Fitted conditional-mean curves, one covariate swept at a time.

    Each sweep varies one covariate over an even grid between its observed
    extremes while pinning the others at their sample means; columns are the
    covariate index, the grid value, and one fitted mean per level.
    """
    regs = session.outcome_regressions()
    means = sample.covariates.mean(axis=0)
    header = ["covariate", "x"] + [f"g{level}" for level in range(sample.n_levels)]
    lines = [",".join(header)]
    for j in range(sample.p):
        lo = sample.covariates[:, j].min()
        hi = sample.covariates[:, j].max()
        grid = np.linspace(lo, hi, points)
        X = np.tile(means, (points, 1))
        X[:, j] = grid
        fitted = [np.asarray(regs[level].predict(X), dtype=float) for level in range(sample.n_levels)]
        for i in range(points):
            cells = [str(j), format_float(grid[i])]
            cells += [format_float(col[i]) for col in fitted]
            lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_estimate(args) -> int:
    config = _load_config(args.config)
    _check_keys(config, _ESTIMATE_KEYS, "estimate config")
    config = _override(config, args, ("data", "out", "seed", "alpha", "trim"))
    if args.emit_curves is not None:
        config["emit_curves"] = args.emit_curves
    data = config.get("data")
    if data is None:
        raise ConfigError("no data file: pass --data or set 'data' in the config")

    sample = ingest_csv(data, config.get("roles"))
    grid = _grid_from_config(config["grid"]) if "grid" in config else None
    score = _network_from_config(config["score_config"]) if "score_config" in config else None
    kwargs = {
        "trim": config.get("trim", 1e-3),
        "seed": config.get("seed", 0),
        "backend": config.get("backend", "ann"),
        "alpha": config.get("alpha", 0.05),
        "validate": False,  # ingest already validated
    }
    if grid is not None:
        kwargs["grid"] = grid
    if score is not None:
        kwargs["score_config"] = score
    session = AnalysisSession(sample, **kwargs)

    results = []
    for key, weighting in _estimand_requests(config):
        result = session.estimate(key.spec(sample.n_levels), weighting=weighting)
        cov = result.covariance
        estimate = cov.contrast_value
        est_sd = cov.contrast_se
        z = estimate / est_sd if est_sd > 0 else float("inf") * np.sign(estimate)
        p = float(2.0 * (1.0 - norm.cdf(abs(z))))
        results.append({
            "estimand": key.label(),
            "weighting": weighting,
            "estimate": float(estimate),
            "est_sd": float(est_sd),
            "z_value": float(z),
            "p_value": p,
            "ci_lower": float(cov.contrast_lower),
            "ci_upper": float(cov.contrast_upper),
            "beta": [float(b) for b in result.beta],
            "curvatures": list(result.diagnostics["curvature_values"]),
            "foc_residuals": list(result.diagnostics["foc_residuals"]),
        })

    document = {
        "config": {k: v for k, v in config.items() if k != "out"},
        "n": sample.n,
        "p": sample.p,
        "n_levels": sample.n_levels,
        "backend": session.backend,
        "alpha": session.alpha,
        "trimming": {
            "floor": session.trim,
            "counts": list(session.propensities().trimmed_counts),
        },
        "hyperparameters": _chosen_hyperparameters(session),
        "glm_converged": {f"{k[0]}_{k[1]}": v for k, v in session.glm_flags.items()},
        "results": results,
    }

    if config.get("emit_curves"):
        _emit_curves(config["emit_curves"], sample, session)

    text = json.dumps(document, indent=2, sort_keys=True)
    if config.get("format", "json") == "csv":
        header = "estimand,weighting,estimate,est_sd,z_value,p_value,ci_lower,ci_upper"
        rows = [header]
        for r in results:
            rows.append(",".join([
                r["estimand"], r["weighting"],
                *(format_float(r[k]) for k in
                  ("estimate", "est_sd", "z_value", "p_value", "ci_lower", "ci_upper")),
            ]))
        text = "\n".join(rows) + "\n"

    out = config.get("out")
    if out:
        atomic_write_text(out, text if text.endswith("\n") else text + "\n")
        print(f"wrote {out}")
    else:
        print(text)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_SIMULATE_KEYS = {
    "n", "p", "replications", "R", "seed", "estimands", "estimators",
    "alpha", "trim", "full_scale", "grid", "score_config", "workers",
    "mc_seed", "mc_draws", "out",
}


def _sim_config(config: dict) -> SimConfig:
    _check_keys(config, _SIMULATE_KEYS, "simulate config")
    kwargs = {}
    for key in ("n", "p", "seed", "alpha", "trim", "full_scale",
                "workers", "mc_seed", "mc_draws"):
        if key in config:
            kwargs[key] = config[key]
    if "R" in config and "replications" in config:
        raise ConfigError("give either 'replications' or 'R', not both")
    if "R" in config:
        kwargs["replications"] = config["R"]
    elif "replications" in config:
        kwargs["replications"] = config["replications"]
    if "estimands" in config:
        kwargs["estimands"] = tuple(config["estimands"])
    if "estimators" in config:
        kwargs["estimators"] = tuple(config["estimators"])
    if "grid" in config:
        kwargs["grid"] = _grid_from_config(config["grid"])
    if "score_config" in config:
        kwargs["score_config"] = _network_from_config(config["score_config"])
    sim = SimConfig(**kwargs)
    sim.keys()  # validate estimand labels
    sim.normalized_estimators()
    return sim


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    config = _override(config, args, ("out", "seed", "alpha", "trim"))
    out_dir = config.pop("out", None)
    if out_dir is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    sim = _sim_config(config)

    report = run_replications(sim)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "report.csv")
    json_path = os.path.join(out_dir, "report.json")
    report.to_csv(csv_path)
    report.to_json(json_path)
    print(f"wrote {csv_path} and {json_path}")
    print(f"replications: {report.config['replications']}  "
          f"failure fraction: {report.failure_fraction:.4f}  "
          f"runtime: {report.runtime_seconds:.1f}s")
    if not report.valid:
        print("more than 5% of fits failed; report marked invalid", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_report_csv(path: str) -> list:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != REPORT_COLUMNS:
            raise SchemaMismatch(
                f"{path}: expected columns {','.join(REPORT_COLUMNS)}"
            )
        rows = []
        for values in reader:
            if not values:
                continue
            if len(values) != len(REPORT_COLUMNS):
                raise SchemaMismatch(f"{path}: row has {len(values)} fields")
            rows.append(dict(zip(REPORT_COLUMNS, values)))
    return rows


def merge_reports(paths) -> list:
    """Concatenate report rows, checking truth consistency per estimand."""
    merged = {}
    truths = {}
    for path in paths:
        for row in _read_report_csv(path):
            tkey = (row["estimand"], row["n"], row["p"])
            if tkey in truths and truths[tkey] != row["truth"]:
                raise SchemaMismatch(
                    f"conflicting truths for {tkey}: {truths[tkey]} vs {row['truth']}"
                )
            truths[tkey] = row["truth"]
            rkey = (row["estimand"], row["estimator"], row["n"], row["p"], row["R"])
            if rkey in merged and merged[rkey] != row:
                raise SchemaMismatch(f"conflicting rows for {rkey}")
            merged[rkey] = row
    return [merged[k] for k in sorted(merged)]


def _split_estimator(name: str):
    if "-" in name:
        method, weighting = name.split("-", 1)
        return method, weighting
    return name, "ipw"  # the oracle weights by true inverse probabilities


def layout_report(rows):
    """Wide layout: rows estimand x weighting, columns method x metric."""
    methods = sorted({_split_estimator(r["estimator"])[0] for r in rows})
    cells = {}
    row_keys = []
    for r in rows:
        method, weighting = _split_estimator(r["estimator"])
        key = (r["estimand"], weighting, r["n"], r["p"], r["R"], r["truth"])
        if key not in cells:
            cells[key] = {}
            row_keys.append(key)
        cells[key][method] = r
    header = ["estimand", "weighting", "n", "p", "R", "truth"]
    for method in methods:
        header += [f"{method}_{metric}" for metric in _METRICS]
    table = [header]
    for key in sorted(row_keys):
        line = list(key)
        for method in methods:
            r = cells[key].get(method)
            line += [r[m] if r else "" for m in _METRICS]
        table.append([str(v) for v in line])
    return table


def _render_text(table) -> str:
    widths = [max(len(row[j]) for row in table) for j in range(len(table[0]))]
    lines = []
    for i, row in enumerate(table):
        cells = []
        for j, value in enumerate(row):
            shown = value if value else "-" * (i > 0)
            cells.append(shown.rjust(widths[j]) if j >= 2 else shown.ljust(widths[j]))
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    if not args.inputs:
        raise ConfigError("no input report files given")
    rows = merge_reports(args.inputs)
    table = layout_report(rows)
    print(_render_text(table), end="")
    if args.out:
        atomic_write_text(args.out, "\n".join(",".join(row) for row in table) + "\n")
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="teffect",
        description="Treatment effect estimation with network nuisance fits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate effects from a CSV data set")
    est.add_argument("--config", help="JSON config file")
    est.add_argument("--data", help="input CSV (overrides config)")
    est.add_argument("--out", help="output file (overrides config)")
    est.add_argument("--seed", type=int, help="seed override")
    est.add_argument("--alpha", type=float, help="interval level override")
    est.add_argument("--trim", type=float, help="propensity floor override")
    est.add_argument("--emit-curves", dest="emit_curves", metavar="PATH",
                     help="also write fitted conditional-mean curves as CSV")
    est.set_defaults(handler=cmd_estimate)

    simp = sub.add_parser("simulate", help="run the replication benchmark")
    simp.add_argument("--config", required=True, help="JSON config file")
    simp.add_argument("--out", help="output directory (overrides config)")
    simp.add_argument("--seed", type=int, help="seed override")
    simp.add_argument("--alpha", type=float, help="interval level override")
    simp.add_argument("--trim", type=float, help="propensity floor override")
    simp.set_defaults(handler=cmd_simulate)

    rep = sub.add_parser("report", help="merge simulation CSVs into one table")
    rep.add_argument("inputs", nargs="*", metavar="csv", help="report CSV files")
    rep.add_argument("--out", help="write the merged table as CSV")
    rep.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ValidationFailed, ParseError, SchemaMismatch,
            FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except TeffectError as err:
        print(f"runtime error: {type(err).__name__}: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

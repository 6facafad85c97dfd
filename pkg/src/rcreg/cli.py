"""Command-line front end: identify / bounds / fit / simulate.

All structured output is JSON with floats printed to 17 significant
digits (so equal results serialize to identical bytes) plus CSV for
per-replication tables.  Exit codes: 0 success, 2 "not identified"
(identify only), 1 any error; malformed input never produces a traceback.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from enum import Enum

import numpy as np

from .errors import RcregError
from .estimate import (
    AdaLassoConfig,
    Dataset,
    build_second_stage,
    fit_moments,
    lambda_max,
    lambda_path,
    ols,
)
from .halfvec import half_dim
from .identify import PartialIdBlocks, SupportSpec, check_identified, partial_id_bounds
from .simulate import SimConfig, monte_carlo

__all__ = ["main", "dump_json"]


class _UsageError(RcregError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep 2 for "not identified"
        raise _UsageError(f"{self.prog}: {message}")


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        raise RcregError(f"cannot serialize non-finite value {x!r}")
    return format(float(x), ".17g")


def dump_json(obj, indent: int = 0) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {dump_json(v, indent + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if not seq:
            return "[]"
        items = [f"{inner}{dump_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if isinstance(obj, Enum):
        return json.dumps(obj.value)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise RcregError(f"cannot serialize object of type {type(obj).__name__}")


def _load_json(path: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise RcregError(f"{path}: malformed JSON ({exc})") from exc
    except OSError as exc:
        raise RcregError(f"{path}: {exc.strerror or exc}") from exc


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _cmd_identify(args) -> int:
    raw = _load_json(args.spec)
    if not isinstance(raw, dict) or "supports" not in raw:
        raise RcregError(f"{args.spec}: expected an object with a 'supports' array")
    supports = raw["supports"]
    if not isinstance(supports, list):
        raise RcregError(f"{args.spec}: 'supports' must be an array of arrays")
    for j, pts in enumerate(supports):
        if not isinstance(pts, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in pts
        ):
            raise RcregError(
                f"{args.spec}: coordinate {j + 1} must be an array of numbers"
            )
    spec = SupportSpec(tuple(tuple(pts) for pts in supports))
    report = check_identified(spec, rank_tol=args.tol)
    payload = {
        "identified": report.identified,
        "rank": report.achieved_rank,
        "full_dim": report.full_dim,
        "deficient_coordinates": list(report.deficient_coordinates),
        "witness_points": [list(w) for w in report.witness_points],
    }
    _emit(dump_json(payload), args.out)
    return 0 if report.identified else 2


def _cmd_bounds(args) -> int:
    raw = _load_json(args.blocks)
    if not isinstance(raw, dict):
        raise RcregError(f"{args.blocks}: expected a JSON object")
    try:
        blocks = PartialIdBlocks(
            cov_b0_b2=np.asarray(raw["cov_b0_b2"], dtype=float),
            cov_b1_b2=np.asarray(raw.get("cov_b1_b2", []), dtype=float),
            var_b0_plus_b1=float(raw["var_b0_plus_b1"]),
        )
    except KeyError as exc:
        raise RcregError(f"{args.blocks}: missing required field {exc}") from exc
    bounds = partial_id_bounds(blocks, tol=args.tol)
    payload = {
        "lower": bounds.lower,
        "upper": bounds.upper,
        "classification": bounds.classification,
    }
    _emit(dump_json(payload), args.out)
    return 0


def _read_dataset_csv(path: str) -> Dataset:
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise RcregError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise RcregError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "y" or len(header) < 2:
            raise RcregError(
                f"{path}: header must be 'y,w1,...,w{{p-1}}', got {','.join(header)!r}"
            )
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RcregError(
                    f"{path}: row at line {line_no} has {len(row)} fields, "
                    f"expected {len(header)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise RcregError(
                    f"{path}: malformed numeric value at line {line_no}"
                ) from None
    if not rows:
        raise RcregError(f"{path}: no data rows")
    arr = np.asarray(rows)
    return Dataset.from_covariates(arr[:, 1:], arr[:, 0])


def _auto_lambda_fit(data: Dataset) -> float:
    """Pick a penalty by BIC along the warm-started path (data-only heuristic)."""
    mu_hat = ols(data.Y, data.X)
    stage2 = build_second_stage(data, mu_hat)
    init = ols(stage2.ysig, stage2.xsig)
    mask = np.ones(half_dim(data.p), dtype=bool)
    mask[0] = False
    lmax = lambda_max(stage2.ysig, stage2.xsig, init, mask)
    if lmax <= 0.0:
        return 0.0
    grid = np.geomspace(lmax, lmax * 1e-4, 50)
    sols = lambda_path(
        stage2.ysig, stage2.xsig, AdaLassoConfig(lam=0.0, init=init, penalize_mask=mask), grid
    )
    n = data.n
    best_lam, best_bic = float(grid[0]), math.inf
    for lam, sol in zip(grid, sols):
        rss = float(np.sum((stage2.ysig - stage2.xsig @ sol.beta) ** 2))
        bic = n * math.log(max(rss, 1e-300) / n) + math.log(n) * sol.active_set.size
        if bic < best_bic:
            best_lam, best_bic = float(lam), bic
    return best_lam


def _cmd_fit(args) -> int:
    data = _read_dataset_csv(args.data)
    if args.lam is not None and args.auto:
        raise _UsageError("rcreg fit: --lambda and --auto are mutually exclusive")
    lam = args.lam if args.lam is not None else _auto_lambda_fit(data)
    fit = fit_moments(
        data, lam, penalize_intercept_variance=args.penalize_intercept_variance
    )
    payload = {
        "mu_hat": fit.mu_hat,
        "sigma_hat": fit.sigma_hat,
        "Sigma_hat": fit.Sigma_hat,
        "active_set": [int(k) for k in fit.solution.active_set],
        "psd": fit.psd,
        "lambda_used": fit.lambda_used,
    }
    if args.path_csv:
        _write_path_csv(args.path_csv, data, fit)
    _emit(dump_json(payload), args.out)
    return 0


def _write_path_csv(path: str, data: Dataset, fit) -> None:
    mu_hat = ols(data.Y, data.X)
    stage2 = build_second_stage(data, mu_hat)
    init = fit.sigma_init
    mask = np.ones(half_dim(data.p), dtype=bool)
    mask[0] = False
    lmax = lambda_max(stage2.ysig, stage2.xsig, init, mask)
    grid = np.geomspace(lmax, lmax * 1e-4, 50) if lmax > 0 else np.zeros(1)
    sols = lambda_path(
        stage2.ysig, stage2.xsig, AdaLassoConfig(lam=0.0, init=init, penalize_mask=mask), grid
    )
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        d = half_dim(data.p)
        writer.writerow(["lambda", "n_active", "kkt_residual"] + [f"beta_{k}" for k in range(d)])
        for lam, sol in zip(grid, sols):
            writer.writerow(
                [_format_float(lam), sol.active_set.size, _format_float(sol.kkt_residual)]
                + [_format_float(v) for v in sol.beta]
            )


def _summary_payload(cfg: SimConfig, report) -> dict:
    return {
        "n": cfg.n,
        "p": cfg.p,
        "covariate_law": cfg.covariate_law,
        "seed": cfg.seed,
        "replications": report.replications,
        "failures": report.failures,
        "lambda_used": report.lambda_used,
        "tuning_fallback": report.tuning_fallback,
        "sign_recovery_rate": report.sign_recovery_rate,
        "fp_histogram": {str(k): v for k, v in report.fp_histogram.items()},
        "fn_histogram": {str(k): v for k, v in report.fn_histogram.items()},
    }


def _cmd_simulate(args) -> int:
    raw = _load_json(args.config)
    if not isinstance(raw, dict):
        raise RcregError(f"{args.config}: expected a JSON object")
    raw = dict(raw)
    n_field = raw.pop("n", None)
    if n_field is None:
        raise RcregError(f"{args.config}: missing required field 'n'")
    n_values = n_field if isinstance(n_field, list) else [n_field]
    lam_field = raw.pop("lambda", "auto")
    lam = None if (lam_field is None or lam_field == "auto") else float(lam_field)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replications is not None:
        raw["replications"] = args.replications
    known = {
        "p", "covariate_law", "mu1", "sigma1", "b4", "replications", "seed",
        "pilot_replications", "grid_size", "solver_tol", "solver_max_iter",
    }
    unknown = set(raw) - known
    if unknown:
        raise RcregError(
            f"{args.config}: unknown fields {sorted(unknown)}; known fields are "
            f"'n', 'lambda' and {sorted(known)}"
        )
    os.makedirs(args.out, exist_ok=True)
    summaries = []
    csv_rows = []
    for n in n_values:
        cfg = SimConfig(n=int(n), lam=lam, **raw)
        report = monte_carlo(cfg)
        summaries.append(_summary_payload(cfg, report))
        for i, rep in enumerate(report.per_rep):
            csv_rows.append((int(n), i, int(rep.sign_ok), rep.fp, rep.fn))
    csv_path = os.path.join(args.out, "replications.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        sweep = len(n_values) > 1
        writer.writerow(["n", "rep", "sign_ok", "fp", "fn"] if sweep else ["rep", "sign_ok", "fp", "fn"])
        for row in csv_rows:
            writer.writerow(row if sweep else row[1:])
    payload = summaries if len(n_values) > 1 else summaries[0]
    _emit(dump_json(payload), os.path.join(args.out, "summary.json"))
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="rcreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_id = sub.add_parser("identify", help="decide identifiability from a support spec")
    p_id.add_argument("--spec", required=True, help="JSON file with a 'supports' array")
    p_id.add_argument("--tol", type=float, default=1e-10, help="relative rank tolerance")
    p_id.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p_id.set_defaults(handler=_cmd_identify)

    p_b = sub.add_parser("bounds", help="sharp Var(B1) bounds from identified blocks")
    p_b.add_argument("--blocks", required=True, help="JSON file with the identified blocks")
    p_b.add_argument("--tol", type=float, default=1e-9, help="PSD slack and endpoint precision")
    p_b.add_argument("--out", default=None)
    p_b.set_defaults(handler=_cmd_bounds)

    p_f = sub.add_parser("fit", help="two-stage moment fit on a CSV dataset")
    p_f.add_argument("--data", required=True, help="CSV with header y,w1,...,w{p-1}")
    p_f.add_argument("--lambda", dest="lam", type=float, default=None, help="penalty level")
    p_f.add_argument("--auto", action="store_true", help="pick the penalty by BIC along a path")
    p_f.add_argument(
        "--penalize-intercept-variance", action="store_true",
        help="also penalize the intercept-variance coordinate",
    )
    p_f.add_argument("--path-csv", default=None, help="write the full penalty path here")
    p_f.add_argument("--out", default=None)
    p_f.set_defaults(handler=_cmd_fit)

    p_s = sub.add_parser("simulate", help="run the Monte Carlo sign-recovery study")
    p_s.add_argument("--config", required=True, help="JSON simulation config")
    p_s.add_argument("--out", required=True, help="output directory")
    p_s.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_s.add_argument("--replications", type=int, default=None, help="override the replication count")
    p_s.set_defaults(handler=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except RcregError as exc:
        print(f"rcreg: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"rcreg: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

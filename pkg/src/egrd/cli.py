"""Command-line entry point: ``egrd <subcommand> ...``.

Every subcommand validates its input paths before computing, writes its
artifacts atomically and reports failures as one JSON object on stderr with
a distinct exit code.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import math
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io
from .basis import EIGEN, KINDS, RankWarning, build_basis, explained_energy
from .compare import (
    EGRD,
    EXACT,
    FITTERS,
    LOG_APPROX,
    EgrdFitSettings,
    compare,
    train_rd_basis,
)
from .errors import AxisMismatchError, DomainError, FitError, SchemaError, SolverError, StructureError
from .grid import default_axes, desk_axes, validate_membership
from .qp import QpSettings
from .reconstruct import (
    MATCH_SAMPLES,
    ReconstructionConfig,
    approximation_table,
    estimate,
    evaluate_method,
    random_splits,
    summarize_splits,
)
from .sampling import LOGDET, TRACE, empirical_covariance, uncertainty_order, uniform_log_bitrate_order
from .synth import SynthParams, generate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_SCHEMA = 4
EXIT_DOMAIN = 5
EXIT_STRUCTURE = 6
EXIT_FIT = 7
EXIT_SOLVER = 8

# Most specific first: SchemaError and friends also derive from ValueError.
_ERROR_CODES = (
    (SchemaError, EXIT_SCHEMA, "schema"),
    (AxisMismatchError, EXIT_DOMAIN, "axis_mismatch"),
    (DomainError, EXIT_DOMAIN, "domain"),
    (StructureError, EXIT_STRUCTURE, "structure"),
    (FitError, EXIT_FIT, "fit"),
    (SolverError, EXIT_SOLVER, "solver"),
    (OSError, EXIT_IO, "io"),
    (ValueError, EXIT_STRUCTURE, "invalid_value"),
)

AXES = {"default": default_axes, "desk": desk_axes}
DEFAULT_S_VALUES = (1, 3, 5, 8, 30, 50)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message, EXIT_USAGE)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str, code: int) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")


def sig6(obj):
    """Round every float in a JSON-like structure to 6 significant digits."""
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.6g}") if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {k: sig6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sig6(v) for v in obj]
    return obj


def _require_file(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    return path


def _int_list(text: str, upper: int) -> list[int]:
    if text == "all":
        return list(range(1, upper + 1))
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"expected a comma-separated integer list or 'all', got {text!r}") from None
    if not values:
        raise ValueError("empty integer list")
    return values


def _basis_n(text: str):
    if text in ("match", MATCH_SAMPLES):
        return MATCH_SAMPLES
    try:
        n = int(text)
    except ValueError:
        raise ValueError(f"--n must be an integer or 'match', got {text!r}") from None
    return n


def _solver_settings(args) -> QpSettings:
    return QpSettings(
        abs_tol=args.abs_tol,
        rel_tol=args.rel_tol,
        max_iter=args.max_iter,
        rho=args.rho,
        adaptive_rho=args.adaptive_rho,
        polish=not args.no_polish,
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    d = QpSettings()
    g = p.add_argument_group("QP solver")
    g.add_argument("--abs-tol", type=float, default=d.abs_tol, help="absolute residual tolerance")
    g.add_argument("--rel-tol", type=float, default=d.rel_tol, help="relative residual tolerance")
    g.add_argument("--max-iter", type=int, default=d.max_iter, help="ADMM iteration cap")
    g.add_argument("--rho", type=float, default=d.rho, help="ADMM step size")
    g.add_argument("--adaptive-rho", action="store_true", help="rebalance rho from residual ratios")
    g.add_argument("--no-polish", action="store_true", help="skip the active-set polish")


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    if not 0 <= args.test_fraction < 1:
        raise ValueError("--test-fraction must lie in [0, 1)")
    grids = generate(SynthParams(seed=args.seed, count=args.count, axes=AXES[args.axes]()))
    splits = ["train"] * len(grids)
    if args.test_fraction > 0:
        _, test = next(random_splits(len(grids), 1, 1 - args.test_fraction, args.seed))
        for i in test:
            splits[i] = "test"
    manifest = io.save_dataset(grids, args.out, splits)
    print(f"wrote {len(grids)} grids to {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    _require_file(args.dataset)
    grids = io.load_dataset(args.dataset, args.split)
    if not grids:
        raise StructureError(f"no grids in split {args.split!r}")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RankWarning)
        if args.rd_curves:
            if args.kind != EIGEN:
                raise ValueError("--rd-curves trains a learned (eigen) basis only")
            basis = train_rd_basis(grids, args.n, args.resolution_index)
        else:
            basis = build_basis(args.kind, args.n, grids, method=args.method)
    io.save_basis(basis, args.out)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    print(f"basis {basis.kind} id={basis.basis_id} components={basis.n_max} -> {args.out}")
    if basis.eigenvalues is not None:
        print(f"{'N':>4} {'eigenvalue':>12} {'energy':>10}")
        for n in range(1, basis.n_max + 1):
            print(f"{n:>4} {basis.eigenvalues[n - 1]:>12.6g} {explained_energy(basis, n):>10.6g}")
    return EXIT_OK


def cmd_sample_order(args) -> int:
    path = _require_file(args.basis_or_dataset)
    if path.is_file() and path.name != io.MANIFEST and "components" in json.loads(path.read_text()):
        basis = io.load_basis(path)
        if basis.eigenvalues is None:
            raise StructureError("a fixed basis carries no covariance; pass a dataset or a learned basis")
        h = basis.components
        cov, axes = (h * basis.eigenvalues) @ h.T, basis.axes
    else:
        grids = io.load_dataset(path, args.split)
        if not grids:
            raise StructureError(f"no grids in split {args.split!r}")
        cov, axes = empirical_covariance(grids), grids[0].axes
    if args.uniform_resolution is not None:
        order = uniform_log_bitrate_order(axes, args.uniform_resolution, args.count)
    else:
        order = uncertainty_order(cov, min(args.count, axes.size), axes, args.criterion)
    out = {
        "method": "uniform_log" if args.uniform_resolution is not None else args.criterion,
        "cells": [[b, r] for b, r in order.cells()],
        "indices": list(order.indices),
        "scores": sig6(list(order.scores)),
    }
    text = io.dumps(out)
    if args.out:
        io.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    _require_file(args.basis)
    _require_file(args.samples)
    basis = io.load_basis(args.basis)
    samples = io.load_samples(args.samples, basis.axes)
    config = ReconstructionConfig(_basis_n(args.n), not args.no_constraints, solver=_solver_settings(args))
    est = estimate(basis, samples, config)
    io.save_grid(est.grid, args.out)
    diag = dict(est.diagnostics)
    diag["basis_id"] = basis.basis_id
    diag["coefficients"] = est.coefficients.tolist()
    report = validate_membership(est.grid)
    diag["membership_passed"] = report.passed
    diag["membership_violations"] = len(report.violations)
    diag_path = args.diagnostics or str(Path(args.out).with_suffix("")) + "_diagnostics.json"
    io.atomic_write(diag_path, io.dumps(sig6(diag)))
    print(f"wrote {args.out} and {diag_path}")
    return EXIT_OK


def _eval_one(train, test, args, config):
    k = train[0].axes.size
    s_values = [s for s in _int_list(args.s_values, k) if s <= k]
    n_values = [] if args.n_values == "all" else [int(v) for v in args.n_values.split(",")]
    need = max([1, *n_values, *(s_values if config.n_components == MATCH_SAMPLES else [config.n_components])])
    if args.kind == EIGEN:
        need = min(need, len(train) - 1, k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankWarning)
        basis = build_basis(args.kind, need, train)
    if args.n_values == "all":
        n_values = list(range(0, basis.n_max + 1))
    approx = approximation_table(basis, test, [n for n in n_values if n <= basis.n_max])
    order = uncertainty_order(empirical_covariance(train), k, train[0].axes, args.criterion)
    if config.n_components != MATCH_SAMPLES and config.n_components > basis.n_max:
        config = ReconstructionConfig(basis.n_max, config.constrained, solver=config.solver)
    recon = evaluate_method(basis, test, order, s_values, config)
    return basis, approx, recon


def _table_csv(sections: dict) -> str:
    buf = _io.StringIO()
    writer = None
    for name, rows in sections.items():
        for row in rows:
            row = {"table": name, **row}
            if writer is None:
                writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
                writer.writeheader()
            writer.writerow(row)
    return buf.getvalue()


def cmd_eval(args) -> int:
    _require_file(args.dataset)
    pairs = io.load_dataset_with_splits(args.dataset)
    if len(pairs) < 2:
        raise StructureError("evaluation needs at least 2 grids")
    n = _basis_n(args.n)
    config = ReconstructionConfig(n, not args.no_constraints, solver=_solver_settings(args))
    report = {"kind": args.kind, "n_components": n, "constrained": config.constrained, "criterion": args.criterion}
    if args.splits == 0:
        train = [g for g, s in pairs if s == "train"]
        test = [g for g, s in pairs if s == "test"] or train
        if len(train) < 2:
            raise StructureError("the manifest lists fewer than 2 training grids")
        basis, approx, recon = _eval_one(train, test, args, config)
        report.update(
            splits="manifest",
            train_count=len(train),
            test_count=len(test),
            basis_components=basis.n_max,
            approximation=[r.as_dict() for r in approx],
            reconstruction=[r.as_dict() for r in recon],
        )
    else:
        grids = [g for g, _ in pairs]
        approx_tables, recon_tables = [], []
        for tr, te in random_splits(len(grids), args.splits, args.train_fraction, args.seed):
            _, approx, recon = _eval_one([grids[i] for i in tr], [grids[i] for i in te], args, config)
            approx_tables.append(approx)
            recon_tables.append(recon)
        report.update(
            splits=args.splits,
            seed=args.seed,
            train_fraction=args.train_fraction,
            approximation=summarize_splits(approx_tables),
            reconstruction=summarize_splits(recon_tables),
        )
    report = sig6(report)
    if args.format == "csv":
        text = _table_csv({"approximation": report["approximation"], "reconstruction": report["reconstruction"]})
    else:
        text = io.dumps(report)
    io.atomic_write(args.out, text)
    _print_tables(report)
    return EXIT_OK


def _print_tables(report) -> None:
    for name, label in (("approximation", "N"), ("reconstruction", "S")):
        rows = report[name]
        if not rows:
            continue
        keys = [k for k in rows[0] if k != "label"]
        print(f"{name} ({label} per row)")
        print(f"{label:>4} " + " ".join(f"{k:>18}" for k in keys))
        for row in rows:
            print(f"{row['label']:>4} " + " ".join(f"{row[k]!s:>18}" for k in keys))


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", text) or "content"


def _curve_csv(result, points: int = 101) -> str:
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["codec", "curve", "kbps", "quality"])
    for name, fc in result.fits.items():
        lo, hi = result.rate_range or fc.xhat_range
        for xh in np.linspace(lo, hi, points):
            try:
                z = float(fc.rd.quality(xh))
            except DomainError:
                continue
            writer.writerow([name, "rd", f"{10 ** xh:.6g}", f"{z:.6g}"])
        zlo, zhi = result.quality_range or fc.quality_range
        for z in np.linspace(zlo, zhi, points):
            try:
                r = float(fc.dr.rate(z))
            except DomainError:
                continue
            writer.writerow([name, "dr", f"{r:.6g}", f"{z:.6g}"])
    return buf.getvalue()


def cmd_compare(args) -> int:
    _require_file(args.samples)
    egrd = None
    if args.fitter == EGRD:
        if not args.basis:
            raise ValueError("--fitter egrd needs --basis (a single-resolution RD basis)")
        _require_file(args.basis)
        egrd = EgrdFitSettings(io.load_basis(args.basis), _basis_n(args.n), _solver_settings(args))
    global_range = None
    if args.global_range:
        try:
            lo, hi = (float(v) for v in args.global_range.split(","))
        except ValueError:
            raise ValueError("--global-range must be 'lo,hi' in kbps") from None
        global_range = (lo, hi)
    pairs = io.load_pairs(args.samples)
    mode = EXACT if args.dr_mode == "exact" else LOG_APPROX
    report = compare(pairs, args.fitter, mode, egrd, global_range)
    io.atomic_write(args.out, io.dumps(sig6(report.as_dict())))
    curves = Path(args.curves_dir) if args.curves_dir else Path(args.out).with_suffix("").parent / (
        Path(args.out).stem + "_curves"
    )
    for result in report.contents:
        if result.fits:
            io.atomic_write(curves / f"{_safe_name(result.content_id)}.csv", _curve_csv(result))
    dq = "n/a" if report.delta_q is None else f"{report.delta_q:.6g}"
    dr = "n/a" if report.delta_r is None else f"{report.delta_r:.6g}"
    print(f"{args.fitter}: dQ={dq} dR={dr} excluded={len(report.excluded)} -> {args.out}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egrd", description="GRD surface modeling, reconstruction and codec comparison.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic GRD corpus")
    p.add_argument("--seed", type=int, default=0, help="corpus seed (also drives the split)")
    p.add_argument("--count", type=int, default=200, help="number of surfaces")
    p.add_argument("--axes", choices=sorted(AXES), default="default", help="lattice preset")
    p.add_argument("--test-fraction", type=float, default=0.0, help="share of grids tagged 'test'")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a basis and print its explained-energy table")
    p.add_argument("--dataset", required=True, help="manifest file or dataset directory")
    p.add_argument("--split", default="train", help="manifest split to train on")
    p.add_argument("--kind", choices=KINDS, default=EIGEN, help="basis family")
    p.add_argument("--n", type=int, default=8, help="number of components")
    p.add_argument("--method", choices=("svd", "gram", "covariance"), default="svd", help="PCA route")
    p.add_argument("--rd-curves", action="store_true", help="pool per-resolution RD curves into a 1-D basis")
    p.add_argument("--resolution-index", type=int, default=None, help="with --rd-curves, use one resolution")
    p.add_argument("--out", required=True, help="basis JSON path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample-order", help="greedy uncertainty (or uniform log-bitrate) query order")
    p.add_argument("--basis-or-dataset", required=True, help="learned basis JSON, manifest or dataset directory")
    p.add_argument("--split", default="train", help="manifest split used for the covariance")
    p.add_argument("--count", type=int, default=50, help="number of cells")
    p.add_argument("--criterion", choices=(TRACE, LOGDET), default=TRACE, help="greedy score")
    p.add_argument("--uniform-resolution", type=int, default=None, help="uniform log-bitrate order at this resolution index")
    p.add_argument("--out", default=None, help="output JSON (stdout if omitted)")
    p.set_defaults(func=cmd_sample_order)

    p = sub.add_parser("reconstruct", help="estimate a full grid from sparse samples")
    p.add_argument("--basis", required=True, help="basis JSON")
    p.add_argument("--samples", required=True, help="CSV with bitrate_kbps,resolution_diag,quality")
    p.add_argument("--n", default="8", help="basis size or 'match' (N = S)")
    p.add_argument("--no-constraints", action="store_true", help="plain least squares, no monotonicity")
    p.add_argument("--out", required=True, help="output grid JSON")
    p.add_argument("--diagnostics", default=None, help="diagnostics JSON (default: <out>_diagnostics.json)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="approximation and reconstruction error tables")
    p.add_argument("--dataset", required=True, help="manifest file or dataset directory")
    p.add_argument("--kind", choices=KINDS, default=EIGEN, help="basis family")
    p.add_argument("--n", default="8", help="reconstruction basis size or 'match'")
    p.add_argument("--n-values", default="all", help="approximation table N list or 'all'")
    p.add_argument("--s-values", default=",".join(map(str, DEFAULT_S_VALUES)), help="sample counts or 'all'")
    p.add_argument("--criterion", choices=(TRACE, LOGDET), default=TRACE, help="sampling order score")
    p.add_argument("--no-constraints", action="store_true", help="unconstrained baseline")
    p.add_argument("--splits", type=int, default=0, help="0 = manifest splits, else repeated random splits")
    p.add_argument("--train-fraction", type=float, default=0.8, help="train share for random splits")
    p.add_argument("--seed", type=int, default=0, help="random split seed")
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    p.add_argument("--out", required=True, help="report path")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="codec comparison (average quality and bitrate differences)")
    p.add_argument("--fitter", choices=FITTERS, required=True, help="RD/DR curve model")
    p.add_argument("--dr-mode", choices=("exact", "log"), default="exact", help="bitrate difference formula")
    p.add_argument("--samples", required=True, help="CSV with content_id,codec,bitrate_kbps,quality")
    p.add_argument("--global-range", default=None, help="evaluate over lo,hi kbps instead of the overlap")
    p.add_argument("--basis", default=None, help="single-resolution RD basis (egrd fitter)")
    p.add_argument("--n", default="match", help="egrd basis size or 'match'")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--curves-dir", default=None, help="curve CSV directory (default: <out>_curves)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_compare)
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:  # mapped to exit codes below
        for cls, code, kind in _ERROR_CODES:
            if isinstance(exc, cls):
                _emit_error(kind, str(exc), code)
                return code
        _emit_error("internal", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line interface: ``spcoclust <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 input parse/validation error,
3 numerical failure. On failure one JSON object is written to stderr,
e.g. ``{"error": "ParseError", "exit_code": 2, "message": "..."}``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .exceptions import (
    ConfigInvalid,
    DatasetError,
    LengthMismatch,
    MissingCoordinate,
    ParseError,
    TooShort,
    UnknownSpotId,
)

EXIT_USAGE, EXIT_PARSE, EXIT_NUMERIC = 1, 2, 3
_PARSE_ERRORS = (ParseError, UnknownSpotId, MissingCoordinate, DatasetError, ConfigInvalid, LengthMismatch, TooShort)

logger = logging.getLogger("spcoclust")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _pair(text):
    try:
        k, r = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'k,r', got {text!r}") from None
    return k, r


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spcoclust", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)

    f = sub.add_parser("fit", help="fit one model configuration")
    f.add_argument("--matrix", required=True)
    f.add_argument("--coords", required=True)
    f.add_argument("--config", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--n-jobs", type=int)

    g = sub.add_parser("select", help="fit a grid of configurations and keep the ICL-best")
    g.add_argument("--matrix", required=True)
    g.add_argument("--coords", required=True)
    g.add_argument("--grid", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--n-jobs", type=int)

    q = sub.add_parser("posterior", help="rank genes by posterior variance within blocks")
    q.add_argument("--report", required=True)
    q.add_argument("--matrix", required=True)
    q.add_argument("--coords", required=True)
    q.add_argument("--block", type=_pair, action="append", required=True, help="1-based k,r; repeatable")
    q.add_argument("--top", type=int, default=5)
    q.add_argument("--level", type=float, default=0.95)
    q.add_argument("--out")

    e = sub.add_parser("eval", help="clustering error rate between two label files")
    e.add_argument("--truth", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--axis", choices=("rows", "cols"), required=True)

    pl = sub.add_parser("plot", help="block table and spot scatter from a report")
    pl.add_argument("--report", required=True)
    pl.add_argument("--coords", required=True)
    pl.add_argument("--out", required=True)
    return p


# -- subcommands ----------------------------------------------------------------


def _cmd_simulate(args):
    from .io import load_scenario_config, write_dataset, write_nested_truth, write_truth
    from .simulate import generate_experiment

    cfg = load_scenario_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    ds, truth = generate_experiment(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(ds, out / "matrix.csv", out / "coords.csv")
    write_truth(truth, ds, out / "truth.csv")
    if truth.nested_row_labels is not None:
        write_nested_truth(truth, ds, out / "nested_truth.csv")
    params = {
        "config": cfg.to_dict(),
        "tau": truth.tau.tolist(),
        "xi": truth.xi.tolist(),
        "kernels": truth.kernels,
    }
    (out / "truth_params.json").write_text(json.dumps(params, sort_keys=True, indent=1) + "\n")
    print(f"wrote {ds.n_rows} x {ds.n_cols} experiment to {out}")


def _fit_and_report(args, spec, config):
    from .estimation import fit
    from .io import build_report, file_sha256, load_dataset

    ds = load_dataset(args.matrix, args.coords)
    t0 = time.perf_counter()
    result = fit(ds, spec, config, n_jobs=args.n_jobs)
    inputs = {"matrix_sha256": file_sha256(args.matrix), "coords_sha256": file_sha256(args.coords)}
    report = build_report(result, ds, spec, config, inputs, time.perf_counter() - t0)
    return ds, result, report


def _write_fit_outputs(out, ds, result, report):
    from .io import write_report

    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "report.json")
    result.labels.write(out / "labels.csv", ds.row_ids, ds.col_ids)


def _cmd_fit(args):
    from .io import load_fit_config

    spec, config = load_fit_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    ds, result, report = _fit_and_report(args, spec, config)
    _write_fit_outputs(Path(args.out), ds, result, report)
    if result.monotonicity_violations:
        logger.warning("%d monotonicity violations recorded", len(result.monotonicity_violations))
    print(f"loglik={result.best_loglik!r} icl={result.icl!r}")


def _cmd_select(args):
    from .core import ModelSpec
    from .io import build_report, file_sha256, load_dataset, load_grid_config
    from .selection import select

    grid, config, c_delta = load_grid_config(args.grid)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    ds = load_dataset(args.matrix, args.coords)
    t0 = time.perf_counter()
    best, table = select(ds, grid, config, c_delta=c_delta, n_jobs=args.n_jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.write(out / "selection.csv")
    row = table.best()
    spec = ModelSpec(row.K, row.R, row.kernel, c_delta)
    inputs = {"matrix_sha256": file_sha256(args.matrix), "coords_sha256": file_sha256(args.coords)}
    report = build_report(best, ds, spec, config, inputs, time.perf_counter() - t0)
    _write_fit_outputs(out, ds, best, report)
    print(f"best K={row.K} R={row.R} kernel={row.kernel.value} icl={row.icl!r}")


def _cmd_posterior(args):
    from .io import fit_from_report, load_dataset, read_report
    from .posterior import fit_caches, top_variable_genes

    report = read_report(args.report)
    fit = fit_from_report(report)
    ds = load_dataset(args.matrix, args.coords)
    if list(ds.row_ids) != report["result"]["row_ids"] or list(ds.col_ids) != report["result"]["col_ids"]:
        raise ConfigInvalid("matrix ids do not match the report")
    caches = fit_caches(fit, ds)
    lines = ["gene_id,k,r,mean,lo,hi"]
    for k, r in args.block:
        for g in top_variable_genes(fit, ds, k, r, args.top, args.level, caches):
            lines.append(f"{g.gene_id},{k},{r},{g.mean!r},{g.lo!r},{g.hi!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def _aligned(labels, axis):
    ids, labs = labels[axis]
    return dict(zip(ids, labs))


def _cmd_eval(args):
    from .core import read_label_table
    from .evaluate import cer

    axis = "row" if args.axis == "rows" else "col"
    truth = _aligned(read_label_table(args.truth)[0], axis)
    est = _aligned(read_label_table(args.est)[0], axis)
    if set(truth) != set(est):
        raise LengthMismatch(f"truth and estimate label different {args.axis}")
    ids = sorted(truth)
    value = cer([truth[i] for i in ids], [est[i] for i in ids])
    print(f"{value:.6f}")


def _cmd_plot(args):
    from .io import read_report
    from .plotting import spot_scatter_svg, write_block_table

    report = read_report(args.report)
    res = report["result"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_block_table(out / "blocks.csv", res["mu"], res["tau"], report["model_spec"]["c_delta"])
    coords = _read_coords(args.coords)
    missing = [c for c in res["col_ids"] if c not in coords]
    if missing:
        raise MissingCoordinate(missing[0])
    xy = np.array([coords[c] for c in res["col_ids"]])
    (out / "spots.svg").write_text(spot_scatter_svg(xy, res["col_labels"]))
    print(f"wrote {out / 'blocks.csv'} and {out / 'spots.svg'}")


def _read_coords(path):
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["spot_id", "x", "y"]:
            raise ParseError(f"{path}: expected header 'spot_id,x,y'", line=1)
        out = {}
        for lineno, rec in enumerate(reader, start=2):
            try:
                out[rec[0]] = (float(rec[1]), float(rec[2]))
            except (ValueError, IndexError):
                raise ParseError(f"{path}: malformed coordinate record", line=lineno) from None
    return out


COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "select": _cmd_select,
    "posterior": _cmd_posterior,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
}


def _fail(exc, code):
    msg = exc.args[0] if isinstance(exc, UsageError) else str(exc)
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "exit_code": code, "message": msg}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        return _fail(exc, EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except _PARSE_ERRORS as exc:
        return _fail(exc, EXIT_PARSE)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _fail(exc, EXIT_USAGE)
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
        return _fail(exc, EXIT_NUMERIC)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""File formats: expression matrices, coordinates, configs, run reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

from ._version import __version__
from .core import CoClusterLabels, ExpressionDataset, FitResult, ModelSpec
from .estimation import FitConfig
from .exceptions import ConfigInvalid, MissingCoordinate, ParseError, UnknownSpotId
from .kernels import KernelKind

# -- datasets -------------------------------------------------------------------


def _sniff_delimiter(first_line):
    return "\t" if "\t" in first_line and "," not in first_line else ","


def _read_rows(path):
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ParseError(f"{path}: file is empty", line=1)
    delim = _sniff_delimiter(lines[0])
    return list(csv.reader(lines, delimiter=delim))


def _parse_real(cell, path, line, column):
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(f"{path}: cell {cell!r} is not a decimal number", line=line, column=column) from None
    return value


def load_dataset(matrix_path, coords_path) -> ExpressionDataset:
    """Read a gene x spot matrix and the matching spot coordinates.

    The matrix header lists spot ids after one leading cell; each following
    line is a gene id and its values. The coordinates file has header
    ``spot_id,x,y``. Spots are ordered as in the matrix header. Line and
    column numbers in errors are 1-based.
    """
    rows = _read_rows(matrix_path)
    header = [c.strip() for c in rows[0]]
    spot_ids = header[1:]
    if not spot_ids:
        raise ParseError(f"{matrix_path}: header has no spot ids", line=1)
    gene_ids, values = [], []
    for lineno, rec in enumerate(rows[1:], start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != len(header):
            raise ParseError(
                f"{matrix_path}: expected {len(header)} fields, found {len(rec)}", line=lineno
            )
        gene_ids.append(rec[0].strip())
        values.append([_parse_real(c, matrix_path, lineno, j + 2) for j, c in enumerate(rec[1:])])
    if not values:
        raise ParseError(f"{matrix_path}: no data rows", line=2)

    crow = _read_rows(coords_path)
    if [c.strip() for c in crow[0]] != ["spot_id", "x", "y"]:
        raise ParseError(f"{coords_path}: expected header 'spot_id,x,y'", line=1)
    wanted = set(spot_ids)
    coords = {}
    for lineno, rec in enumerate(crow[1:], start=2):
        if not rec or all(not c.strip() for c in rec):
            continue
        if len(rec) != 3:
            raise ParseError(f"{coords_path}: expected 3 fields, found {len(rec)}", line=lineno)
        sid = rec[0].strip()
        if sid not in wanted:
            raise UnknownSpotId(sid)
        coords[sid] = (_parse_real(rec[1], coords_path, lineno, 2), _parse_real(rec[2], coords_path, lineno, 3))
    for sid in spot_ids:
        if sid not in coords:
            raise MissingCoordinate(sid)
    xy = np.array([coords[s] for s in spot_ids], dtype=float)
    return ExpressionDataset.from_arrays(np.array(values, dtype=float), xy, gene_ids, spot_ids)


def write_dataset(ds: ExpressionDataset, matrix_path, coords_path):
    """Write files readable by :func:`load_dataset`; floats keep full precision."""
    with open(matrix_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gene_id", *ds.col_ids])
        for gid, row in zip(ds.row_ids, ds.values):
            w.writerow([gid, *(repr(float(v)) for v in row)])
    with open(coords_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["spot_id", "x", "y"])
        for sid, (x, y) in zip(ds.col_ids, ds.coords):
            w.writerow([sid, repr(float(x)), repr(float(y))])


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- configs --------------------------------------------------------------------

FIT_KEYS = {f.name for f in dataclasses.fields(FitConfig)}
MODEL_KEYS = {"K", "R", "kernel", "c_delta"}
GRID_KEYS = {"K_values", "R_values", "kernels", "c_delta"}


def read_flat_config(path) -> dict:
    """Parse a flat key/value YAML mapping."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"{path}: {exc}", line=mark.line + 1 if mark else None) from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigInvalid(f"{path}: top level must be a key/value mapping")
    return data


def _reject_unknown(data, allowed, path):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigInvalid(f"{path}: unknown keys {', '.join(unknown)}")


def _fit_config(data, path):
    try:
        return FitConfig(**{k: v for k, v in data.items() if k in FIT_KEYS})
    except TypeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None


def load_fit_config(path):
    """``(ModelSpec, FitConfig)`` from a fit config file."""
    data = read_flat_config(path)
    _reject_unknown(data, FIT_KEYS | MODEL_KEYS, path)
    missing = {"K", "R"} - set(data)
    if missing:
        raise ConfigInvalid(f"{path}: missing keys {', '.join(sorted(missing))}")
    try:
        spec = ModelSpec(
            K=int(data["K"]),
            R=int(data["R"]),
            kernel_kind=KernelKind.parse(data.get("kernel", "exponential")),
            c_delta=float(data.get("c_delta", 10.0)),
        )
    except ValueError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    return spec, _fit_config(data, path)


def load_grid_config(path):
    """``(grid, FitConfig, c_delta)``; the grid is the product of K, R and kernel lists."""
    data = read_flat_config(path)
    _reject_unknown(data, FIT_KEYS | GRID_KEYS, path)
    try:
        Ks = [int(k) for k in data.get("K_values", [2, 3, 4])]
        Rs = [int(r) for r in data.get("R_values", [2, 3, 4])]
        kinds = [KernelKind.parse(k) for k in data.get("kernels", ["exponential"])]
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None
    grid = [(K, R, kind) for kind in kinds for K in Ks for R in Rs]
    return grid, _fit_config(data, path), float(data.get("c_delta", 10.0))


def load_scenario_config(path):
    from .simulate import ScenarioConfig

    data = read_flat_config(path)
    allowed = {f.name for f in dataclasses.fields(ScenarioConfig)}
    _reject_unknown(data, allowed, path)
    try:
        return ScenarioConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from None


# -- run reports -------------------------------------------------------------------

WALL_CLOCK_KEY = "wall_clock_seconds"


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def build_report(fit: FitResult, ds: ExpressionDataset, spec: ModelSpec, config, inputs=None, wall_clock=None) -> dict:
    """JSON-ready run report. Floats are emitted with ``repr`` precision by :mod:`json`."""
    return {
        "software_version": __version__,
        "inputs": dict(inputs or {}),
        "model_spec": {"K": spec.K, "R": spec.R, "kernel": spec.kernel_kind.value, "c_delta": float(spec.c_delta)},
        "fit_config": dataclasses.asdict(config),
        "result": {
            "row_ids": list(ds.row_ids),
            "col_ids": list(ds.col_ids),
            "row_labels": fit.labels.row_labels.tolist(),
            "col_labels": fit.labels.col_labels.tolist(),
            "mu": _floats(fit.mu),
            "tau": _floats(fit.tau),
            "xi": _floats(fit.xi),
            "snr": _floats(fit.snr),
            "alpha": _floats(fit.alpha),
            "beta": _floats(fit.beta),
            "phi": _floats(fit.phi),
            "best_loglik": float(fit.best_loglik),
            "best_iteration": int(fit.best_iteration),
            "best_start": int(fit.best_start),
            "icl": float(fit.icl),
            "start_best_logliks": _floats(fit.start_best_logliks),
            "loglik_trace": _floats(fit.loglik_trace),
            "monotonicity_violations": len(fit.monotonicity_violations),
            "se_acceptance_rate": float(fit.se_acceptance_rate),
        },
        WALL_CLOCK_KEY: None if wall_clock is None else float(wall_clock),
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=True) + "\n"


def write_report(report: dict, path):
    Path(path).write_text(dump_report(report))


def read_report(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from None


def fit_from_report(report: dict) -> FitResult:
    """Rebuild the fitted state stored in a report (traces and diagnostics are not kept)."""
    spec, res = report["model_spec"], report["result"]
    labels = CoClusterLabels(
        np.array(res["row_labels"], dtype=int), np.array(res["col_labels"], dtype=int), spec["K"], spec["R"]
    )
    arr = lambda key: np.array(res[key], dtype=float)  # noqa: E731
    return FitResult(
        labels=labels,
        mu=arr("mu"),
        tau=arr("tau"),
        alpha=arr("alpha"),
        beta=arr("beta"),
        phi=arr("phi"),
        loglik_trace=arr("loglik_trace"),
        best_iteration=int(res["best_iteration"]),
        best_loglik=float(res["best_loglik"]),
        icl=float(res["icl"]),
        seed=int(report["fit_config"]["seed"]),
        n_starts=int(report["fit_config"]["n_starts"]),
        kernel_kind=KernelKind.parse(spec["kernel"]),
        c_delta=float(spec["c_delta"]),
        start_best_logliks=tuple(res["start_best_logliks"]),
        best_start=int(res["best_start"]),
        se_acceptance_rate=float(res["se_acceptance_rate"]),
    )


# -- label files -------------------------------------------------------------------


def write_truth(truth, ds: ExpressionDataset, path):
    """Generating labels in the ``axis,id,label`` format.

    Rows carry the row-cluster labels, or the alternative labels when
    row clusters are nested within column clusters.
    """
    rows = truth.row_labels if truth.row_labels is not None else truth.alt_row_labels
    K = int(np.max(rows))
    R = int(np.max(truth.col_labels))
    CoClusterLabels(np.asarray(rows), np.asarray(truth.col_labels), K, R).write(path, ds.row_ids, ds.col_ids)


def write_nested_truth(truth, ds: ExpressionDataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        R = truth.nested_row_labels.shape[1]
        w.writerow(["id", *(f"r{r + 1}" for r in range(R))])
        for gid, labs in zip(ds.row_ids, truth.nested_row_labels):
            w.writerow([gid, *(int(v) for v in labs)])

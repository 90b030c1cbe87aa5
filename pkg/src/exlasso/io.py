"""Plain-text input and output: CSV matrices, group files, JSON reports.

Numbers are written with 17 significant digits so a float64 survives a
write/read cycle unchanged.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DataFileError, EmptyFile, InvalidPartition, NonNumeric, RaggedRow
from .model import GroupPartition
from .solver import ExclusiveLassoFit


def _parse_float(token):
    v = float(token)
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {token!r}")
    return v


def _is_numeric_row(row):
    try:
        for tok in row:
            float(tok)
    except ValueError:
        return False
    return True


def _rows(path):
    """Non-blank rows of a CSV file with their 1-based line numbers."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            return [(i, [t.strip() for t in row])
                    for i, row in enumerate(csv.reader(fh), start=1)
                    if any(t.strip() for t in row)]
    except FileNotFoundError as exc:
        raise DataFileError("file not found", path) from exc
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise DataFileError(f"cannot read file: {exc}", path) from exc


def read_csv_matrix(path):
    """Comma-separated decimals as a 2-D array.

    A first row that does not parse as numbers is taken as a header and
    skipped. Raises `RaggedRow`, `NonNumeric` or `EmptyFile` with the line.
    """
    rows = _rows(path)
    if rows and not _is_numeric_row(rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise EmptyFile("no numeric rows", path)
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for r, (line, row) in enumerate(rows):
        if len(row) != width:
            raise RaggedRow(f"expected {width} fields, found {len(row)}", path, line)
        for c, tok in enumerate(row):
            try:
                out[r, c] = _parse_float(tok)
            except ValueError:
                raise NonNumeric(f"column {c + 1}: cannot parse {tok!r} as a finite number",
                                 path, line, c + 1) from None
    return out


def read_csv_vector(path):
    """A single row or a single column as a 1-D array."""
    m = read_csv_matrix(path)
    if m.shape[1] == 1:
        return m[:, 0].copy()
    if m.shape[0] == 1:
        return m[0].copy()
    raise DataFileError(f"expected one row or one column, got shape {m.shape}", path)


def read_groups(path, p=None):
    """Group file: one ``column_index,group_id`` line per predictor, 1-based columns.

    Group ids may be any token; groups are numbered by first appearance.
    """
    rows = _rows(path)
    if rows and not _is_int(rows[0][1][0] if rows[0][1] else ""):
        rows = rows[1:]
    if not rows:
        raise EmptyFile("no group assignments", path)
    members = {}
    seen = set()
    for line, row in rows:
        if len(row) != 2:
            raise RaggedRow(f"expected 'column,group', found {len(row)} fields", path, line)
        if not _is_int(row[0]):
            raise NonNumeric(f"column index {row[0]!r} is not an integer", path, line, 1)
        col = int(row[0])
        if col < 1:
            raise DataFileError(f"column index {col} must be at least 1", path, line, 1)
        if col in seen:
            raise DataFileError(f"column {col} is assigned twice", path, line, 1)
        seen.add(col)
        members.setdefault(row[1], []).append(col - 1)
    try:
        return GroupPartition(list(members.values()), p)
    except InvalidPartition as exc:
        raise DataFileError(str(exc), path) from exc


def _is_int(tok):
    try:
        int(tok)
    except ValueError:
        return False
    return True


def format_float(x):
    return f"{float(x):.17g}"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else format_float(v)
    if v is None:
        return ""
    return str(v)


def write_csv_stream(fh, rows, columns=None):
    """Write dict rows (long format); column order from `columns` or the first row."""
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])


def write_csv(path, rows, columns=None):
    with Path(path).open("w", newline="") as fh:
        write_csv_stream(fh, rows, columns)


def write_matrix_csv(path, matrix, header=None):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in matrix:
            w.writerow([format_float(v) for v in row])


def to_jsonable(obj):
    """Recursively convert numpy values; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj):
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=False) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise DataFileError("file not found", path) from exc
    except json.JSONDecodeError as exc:
        raise DataFileError(f"invalid JSON: {exc.msg}", path, exc.lineno, exc.colno) from exc


def fit_to_dict(fit, include_trace=False):
    out = {
        "lambda": fit.lam,
        "beta": fit.beta,
        "support": fit.support,
        "objective": fit.objective,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
        "kkt_residual": fit.kkt_residual,
        "lipschitz": fit.lipschitz,
        "inner_delta0": fit.inner_delta0,
        "inner_decay": fit.inner_decay,
        "prox_sweep_limit_hits": fit.prox_sweep_limit_hits,
    }
    if include_trace:
        out["objective_trace"] = fit.objective_trace
    return to_jsonable(out)


def fit_from_dict(d):
    trace = d.get("objective_trace")
    trace = np.array([d["objective"]] if trace is None else trace, dtype=float)
    return ExclusiveLassoFit(
        beta=np.array(d["beta"], dtype=float),
        lam=float(d["lambda"]),
        support=np.array(d["support"], dtype=np.int64),
        objective_trace=trace,
        n_iter=int(d["n_iter"]),
        converged=bool(d["converged"]),
        kkt_residual=float(d["kkt_residual"]),
        lipschitz=float(d["lipschitz"]),
        inner_delta0=float(d.get("inner_delta0", 1e-8)),
        inner_decay=float(d.get("inner_decay", 2.0)),
        prox_sweep_limit_hits=int(d.get("prox_sweep_limit_hits", 0)),
    )

"""Dataset ingestion, delimited output, and run manifests.

Numeric results are serialized with 17 significant digits so that an
emit/load round trip is lossless; manifests carry the fully resolved
configuration and seed needed to reproduce each result file bit-exactly.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .network import ClassificationData
from .panel import PanelData
from .regression import RegressionProblem

FLOAT_FMT = "%.17g"


class MissingColumnError(ValueError):
    pass


class NonNumericCellError(ValueError):
    pass


class EmptyFileError(ValueError):
    pass


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def write_manifest(path, config: dict) -> None:
    from . import __version__

    payload = {"tool": "epdkit", "version": __version__, "config": config}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def read_table(path, required_columns) -> dict:
    """Read a CSV into string columns; header is order-insensitive.

    Missing cells are a hard error, as are absent required columns.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFileError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyFileError(f"{path} has no data rows")
    missing = [c for c in required_columns if c not in header]
    if missing:
        raise MissingColumnError(f"{path} lacks columns {missing}")
    for i, row in enumerate(rows):
        if len(row) != len(header) or any(cell.strip() == "" for cell in row):
            raise NonNumericCellError(f"{path} row {i + 2} has missing cells")
    cols = {name: [row[j].strip() for row in rows]
            for j, name in enumerate(header)}
    return cols


def numeric_column(cols: dict, name: str) -> np.ndarray:
    try:
        return np.asarray([float(v) for v in cols[name]])
    except ValueError as exc:
        raise NonNumericCellError(f"column {name!r}: {exc}") from exc


def binary_column(cols: dict, name: str) -> np.ndarray:
    """Accept 0/1 numbers or yes/no style strings."""
    mapping = {"yes": 1.0, "no": 0.0, "true": 1.0, "false": 0.0,
               "male": 1.0, "female": 0.0}
    out = []
    for v in cols[name]:
        key = v.strip().strip('"').lower()
        if key in mapping:
            out.append(mapping[key])
        else:
            try:
                out.append(float(key))
            except ValueError as exc:
                raise NonNumericCellError(
                    f"column {name!r}: cannot read {v!r} as binary") from exc
    arr = np.asarray(out)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise NonNumericCellError(f"column {name!r} is not binary")
    return arr


def standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    if sd == 0.0:
        raise ValueError("cannot standardize a constant column")
    return (x - x.mean()) / sd


WAGE_CONTINUOUS = ("ed", "exp", "wks")
WAGE_BINARY = ("union", "married", "bluecol", "ind", "south", "smsa",
               "sex", "black")
WAGE_COLUMNS = ("id", "lwage", *WAGE_CONTINUOUS, *WAGE_BINARY)


def load_wage_panel(path):
    """Load the individual-wages panel into blocks plus a pooled problem.

    Continuous covariates are standardized, binary indicators pass through;
    an intercept column leads the design.  The panel must be balanced.
    """
    cols = read_table(path, WAGE_COLUMNS)
    ids = np.asarray(cols["id"])
    y = numeric_column(cols, "lwage")
    features = [np.ones_like(y)]
    names = ["intercept"]
    for c in WAGE_CONTINUOUS:
        features.append(standardize(numeric_column(cols, c)))
        names.append(c)
    for c in WAGE_BINARY:
        features.append(binary_column(cols, c))
        names.append(c)
    X = np.column_stack(features)
    uniq, counts = np.unique(ids, return_counts=True)
    if counts.min() != counts.max():
        raise ValueError("panel is unbalanced: ids appear unequally often")
    m = int(counts[0])
    n = uniq.size
    order = np.argsort(ids, kind="stable")
    Xb = X[order].reshape(n, m, X.shape[1])
    yb = y[order].reshape(n, m)
    pooled = RegressionProblem(design=X, response=y)
    panel = PanelData(X=Xb, y=yb)
    info = {"rows": int(y.size), "individuals": n, "periods": m,
            "columns": names}
    return panel, pooled, names, info


def _norm_name(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "", name.lower())


AI4I_CONTINUOUS = {
    "air_temp": "airtemperaturek",
    "process_temp": "processtemperaturek",
    "rot_speed": "rotationalspeedrpm",
    "torque": "torquenm",
    "tool_wear": "toolwearmin",
}


def load_ai4i(path) -> tuple:
    """Load the predictive-maintenance table into standardized features.

    Continuous sensor channels are standardized; the machine type becomes
    two dummies (M, H with L as base); the label is the failure flag.
    """
    cols = read_table(path, [])
    by_norm = {_norm_name(k): k for k in cols}
    features = []
    names = []
    for short, norm in AI4I_CONTINUOUS.items():
        if norm not in by_norm:
            raise MissingColumnError(f"missing AI4I column {short}")
        features.append(standardize(numeric_column(cols, by_norm[norm])))
        names.append(short)
    type_key = by_norm.get("type")
    if type_key is None:
        raise MissingColumnError("missing AI4I column 'Type'")
    types = [v.strip().upper() for v in cols[type_key]]
    for level in ("M", "H"):
        features.append(np.asarray([1.0 if v == level else 0.0 for v in types]))
        names.append(f"type_{level}")
    fail_key = by_norm.get("machinefailure")
    if fail_key is None:
        raise MissingColumnError("missing AI4I column 'Machine failure'")
    labels = binary_column(cols, fail_key)
    data = ClassificationData(features=np.column_stack(features),
                              labels=labels)
    info = {"rows": data.n, "columns": names}
    return data, names, info


def load_regression_csv(path, response: str, covariates: list,
                        standardize_covariates: bool = False,
                        add_intercept: bool = False):
    """Generic numeric CSV into a regression problem."""
    cols = read_table(path, [response, *covariates])
    y = numeric_column(cols, response)
    feats = []
    names = []
    if add_intercept:
        feats.append(np.ones_like(y))
        names.append("intercept")
    for c in covariates:
        x = numeric_column(cols, c)
        if standardize_covariates and x.std() > 0 and len(np.unique(x)) > 2:
            x = standardize(x)
        feats.append(x)
        names.append(c)
    problem = RegressionProblem(design=np.column_stack(feats), response=y)
    return problem, names

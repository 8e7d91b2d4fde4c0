import json
import os

import numpy as np
import pandas as pd

from src import linalg
from src.utils import rational_str, round_sig, significant_digits


def to_serializable(value):
    """
    Recursively converts a report into JSON types. Floats are rounded to
    ``significant_digits`` so that identical runs give identical text;
    exact rationals are written as ``"p/q"`` strings.
    """
    if isinstance(value, dict):
        return {str(k): to_serializable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_serializable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_serializable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return round_sig(value, significant_digits)
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "numerator") and hasattr(value, "denominator"):
        return rational_str(value)
    if hasattr(value, "to_dict"):
        return to_serializable(value.to_dict())
    return str(value)


def dumps(report):
    return json.dumps(to_serializable(report), sort_keys=True, indent=2) + "\n"


def _prepare(path):
    folder = os.path.dirname(path)
    if folder:
        os.makedirs(folder, exist_ok=True)


def write_json(report, path):
    _prepare(path)
    with open(path, "w") as f:
        f.write(dumps(report))
    return path


def write_csv(table, path):
    """Writes a dict of columns (or a DataFrame) with rounded floats."""
    df = table if isinstance(table, pd.DataFrame) else pd.DataFrame(table)
    for column in df.columns:
        if pd.api.types.is_float_dtype(df[column]):
            df[column] = df[column].map(round_sig)
    _prepare(path)
    df.to_csv(path, index=False, float_format="%.{}g".format(significant_digits))
    return path


def write_triplets(matrix, path, header=None):
    """
    Coordinate triplets ``row col value`` of a matrix, one per line, after
    a JSON header line with the shape and the number of entries.
    """
    if isinstance(matrix, np.ndarray):
        rows, cols = np.nonzero(matrix)
        entries = [(int(i), int(j), round_sig(matrix[i, j])) for i, j in zip(rows, cols)]
        shape = matrix.shape
    else:
        shape = matrix.shape
        entries = [
            (i, j, rational_str(v))
            for i, r in enumerate(linalg.to_rows(matrix))
            for j, v in enumerate(r)
            if v != 0
        ]
    head = dict(header or {})
    head.update({"shape": list(shape), "nnz": len(entries)})
    _prepare(path)
    with open(path, "w") as f:
        f.write(json.dumps(to_serializable(head), sort_keys=True) + "\n")
        for i, j, v in entries:
            f.write("{} {} {}\n".format(i, j, v))
    return path

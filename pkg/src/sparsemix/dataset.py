"""In-memory observation matrix plus the column summaries the priors consume."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass
class DataSet:
    """An n x d observation matrix with cached column ranges and covariance.

    Parameters
    ----------
    y : ndarray, shape (n, d)
        Observations, one row per data point. A 1-d array is promoted to a
        single column.
    """

    y: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if y.ndim != 2 or y.shape[0] < 1 or y.shape[1] < 1:
            raise ValueError("data must be a non-empty n x d matrix")
        if not np.all(np.isfinite(y)):
            raise ValueError("data contains non-finite values")
        self.y = y

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def d(self) -> int:
        return self.y.shape[1]

    @cached_property
    def ranges(self) -> np.ndarray:
        """Per-column range max - min (the R_l scale factors)."""
        return self.y.max(axis=0) - self.y.min(axis=0)

    @cached_property
    def column_medians(self) -> np.ndarray:
        return np.median(self.y, axis=0)

    @cached_property
    def empirical_cov(self) -> np.ndarray:
        """Sample covariance S_y (ddof=1). Requires n >= 2."""
        if self.n < 2:
            raise ValueError("empirical covariance needs at least 2 rows")
        return np.atleast_2d(np.cov(self.y, rowvar=False, ddof=1))

    def constant_columns(self) -> np.ndarray:
        """Indices of columns with zero range."""
        return np.flatnonzero(self.ranges == 0.0)


def save_csv(path, data: DataSet, labels=None, meta: dict | None = None) -> Path:
    """Write a dataset as CSV (one header row, optional integer label column).

    A JSON sidecar ``<path>.json`` records ``meta`` (generator spec, seed, ...)
    when provided.
    """
    path = Path(path)
    cols = [f"y{l + 1}" for l in range(data.d)]
    body = data.y
    fmt = ["%.17g"] * data.d
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (data.n,):
            raise ValueError("labels must be one integer per row")
        cols.append("label")
        body = np.column_stack([body, labels.astype(float)])
        fmt.append("%d")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, body, fmt=fmt, delimiter=",", header=",".join(cols), comments="")
    if meta is not None:
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_csv(path) -> tuple[DataSet, np.ndarray | None]:
    """Read a dataset written by :func:`save_csv`; returns (data, labels or None)."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header and header[-1] == "label":
        labels = raw[:, -1].astype(int)
        return DataSet(raw[:, :-1]), labels
    return DataSet(raw), None

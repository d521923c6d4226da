"""Right-censored survival data: CSV loading, standardization, fold splits.

A dataset is a covariate matrix plus per-record follow-up time and event
indicator (1 = event observed, 0 = censored). All downstream code assumes
float64 covariates and times.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "StandardizationStats",
    "FoldSplit",
    "load_csv",
    "standardize",
    "split_folds",
    "quantile_horizons",
]


class DataError(ValueError):
    """Raised for malformed input data (bad CSV, invalid columns, bad values)."""


@dataclass
class Dataset:
    """Covariates with right-censored follow-up.

    Attributes
    ----------
    x : ndarray of shape (n, d)
        Covariate matrix, float64.
    time : ndarray of shape (n,)
        Non-negative follow-up times.
    event : ndarray of shape (n,)
        Event indicators in {0, 1}; 1 means the event was observed.
    feature_names : list of str
        Column names for ``x``, in column order.
    """

    x: np.ndarray
    time: np.ndarray
    event: np.ndarray
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.time = np.asarray(self.time, dtype=np.float64)
        self.event = np.asarray(self.event, dtype=np.int64)
        if self.x.ndim != 2:
            raise DataError(f"covariate matrix must be 2-D, got shape {self.x.shape}")
        n = self.x.shape[0]
        if self.time.shape != (n,) or self.event.shape != (n,):
            raise DataError(
                f"time/event shapes {self.time.shape}/{self.event.shape} "
                f"do not match {n} records"
            )
        if not self.feature_names:
            self.feature_names = [f"x{j}" for j in range(self.x.shape[1])]
        if len(self.feature_names) != self.x.shape[1]:
            raise DataError("feature_names length does not match covariate count")
        if not np.all(np.isfinite(self.x)):
            raise DataError("covariates contain non-finite values")
        if np.any(self.time < 0) or not np.all(np.isfinite(self.time)):
            raise DataError("follow-up times must be finite and non-negative")
        if not np.all((self.event == 0) | (self.event == 1)):
            raise DataError("event indicators must be 0 or 1")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Return the records selected by an index array, in that order."""
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.time[idx], self.event[idx], list(self.feature_names))


@dataclass
class StandardizationStats:
    """Per-column location/scale used to standardize covariates."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class FoldSplit:
    """Index sets for one cross-validation fold (disjoint, covering all records)."""

    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray


def load_csv(path, time_col: str, event_col: str) -> Dataset:
    """Load a survival dataset from a UTF-8 CSV file with a header row.

    Every column other than ``time_col`` and ``event_col`` is treated as a
    covariate, in header order. Errors carry the offending file line and
    column name.

    Parameters
    ----------
    path : str or Path
        CSV file location.
    time_col, event_col : str
        Names of the follow-up-time and event-indicator columns.

    Returns
    -------
    Dataset

    Raises
    ------
    DataError
        On an empty file, missing columns, non-numeric cells, negative
        times, or event values outside {0, 1}.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        for name in (time_col, event_col):
            if name not in header:
                raise DataError(f"{path}: required column {name!r} not found in header")
        t_pos = header.index(time_col)
        e_pos = header.index(event_col)
        feat_pos = [j for j in range(len(header)) if j not in (t_pos, e_pos)]
        if not feat_pos:
            raise DataError(f"{path}: no covariate columns besides {time_col!r}/{event_col!r}")
        feature_names = [header[j] for j in feat_pos]

        rows, times, events = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue  # ignore blank lines
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}"
                )

            def parse(pos, line_no=line_no, row=row):
                cell = row[pos].strip()
                try:
                    return float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}:{line_no}: non-numeric value {cell!r} "
                        f"in column {header[pos]!r}"
                    ) from None

            t = parse(t_pos)
            if not np.isfinite(t) or t < 0:
                raise DataError(
                    f"{path}:{line_no}: follow-up time must be finite and >= 0, got {t}"
                )
            e = parse(e_pos)
            if e not in (0.0, 1.0):
                raise DataError(
                    f"{path}:{line_no}: event indicator must be 0 or 1, got {row[e_pos]!r}"
                )
            vals = [parse(j) for j in feat_pos]
            if not all(np.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line_no}: non-finite covariate value")
            rows.append(vals)
            times.append(t)
            events.append(int(e))

    if not rows:
        raise DataError(f"{path}: no data rows")
    n_zero = sum(1 for t in times if t == 0.0)
    if n_zero:
        warnings.warn(
            f"{path}: {n_zero} record(s) with follow-up time 0 contribute "
            "nothing to the likelihood"
        )
    return Dataset(np.array(rows), np.array(times), np.array(events), feature_names)


def standardize(
    d: Dataset, stats: StandardizationStats | None = None
) -> tuple[Dataset, StandardizationStats]:
    """Center and scale each covariate column to zero mean, unit sample std.

    The scale is the sample standard deviation (n-1 denominator). Constant
    columns get scale 1 and trigger a warning rather than an error. Pass
    ``stats`` to apply a previously fitted transform (e.g. to held-out data).

    Returns
    -------
    (Dataset, StandardizationStats)
        The transformed dataset and the stats used.
    """
    if stats is None:
        mean = d.x.mean(axis=0)
        if len(d) > 1:
            std = d.x.std(axis=0, ddof=1)
        else:
            std = np.zeros(d.n_features)
        const = std == 0.0
        if np.any(const):
            names = [d.feature_names[j] for j in np.flatnonzero(const)]
            warnings.warn(f"constant covariate column(s) left unscaled: {names}")
            std = np.where(const, 1.0, std)
        stats = StandardizationStats(mean=mean, std=std)
    z = (d.x - stats.mean) / stats.std
    return Dataset(z, d.time, d.event, list(d.feature_names)), stats


def split_folds(d: Dataset | int, k: int, seed: int) -> list[FoldSplit]:
    """Build k cross-validation folds with a 70/30 train/validation split.

    Records are shuffled once with ``numpy.random.default_rng(seed)`` (PCG64)
    and dealt round-robin into k test sets. For each fold the remaining
    records keep their shuffled order; the first round(30%) become the
    validation set and the rest the training set. Deterministic given
    (n, k, seed).

    Parameters
    ----------
    d : Dataset or int
        The dataset, or just the record count.
    k : int
        Number of folds, 2 <= k <= n.
    seed : int
        Seed for the shuffle.
    """
    n = d if isinstance(d, int) else len(d)
    if k < 2 or k > n:
        raise ValueError(f"fold count k={k} must satisfy 2 <= k <= n={n}")
    order = np.random.default_rng(seed).permutation(n)
    folds = []
    for f in range(k):
        in_test = np.zeros(n, dtype=bool)
        in_test[f::k] = True  # round-robin deal over the shuffled order
        test_idx = order[in_test]
        rest = order[~in_test]
        n_val = round(0.3 * rest.size)
        folds.append(
            FoldSplit(train_idx=rest[n_val:], val_idx=rest[:n_val], test_idx=test_idx)
        )
    return folds


def quantile_horizons(d: Dataset, quantiles) -> np.ndarray:
    """Evaluation horizons: linear-interpolation quantiles of observed event times.

    Only uncensored records contribute. Quantiles must lie in [0, 1].
    """
    q = np.atleast_1d(np.asarray(quantiles, dtype=np.float64))
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError(f"quantiles must lie in [0, 1], got {q}")
    event_times = d.time[d.event == 1]
    if event_times.size == 0:
        raise DataError("no uncensored events: cannot compute quantile horizons")
    return np.quantile(event_times, q)

"""Benchmark CSV ingestion, chronological splits and sliding windows."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# name -> (channels, split ratio, declared length, frequency)
KNOWN_DATASETS = {
    "ETTh1": (7, (6, 2, 2), 14400, "1h"),
    "ETTh2": (7, (6, 2, 2), 14400, "1h"),
    "ETTm1": (7, (6, 2, 2), 56700, "15min"),
    "ETTm2": (7, (6, 2, 2), 56700, "15min"),
    "Weather": (21, (7, 1, 2), 52696, "10min"),
    "Electricity": (321, (7, 1, 2), 26304, "1h"),
    "Traffic": (862, (7, 1, 2), 17544, "1h"),
}

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    name: str
    rows: np.ndarray  # (L, C)
    split_ratio: tuple[float, float, float] = (0.6, 0.2, 0.2)
    frequency: str = ""
    timestamps: list[str] = field(default_factory=list, repr=False)

    @property
    def C(self) -> int:
        return self.rows.shape[1]

    def __len__(self) -> int:
        return self.rows.shape[0]

    def boundaries(self) -> tuple[int, int]:
        """End of train and end of val, as row indices."""
        L = len(self)
        total = sum(self.split_ratio)
        n_train = int(L * self.split_ratio[0] / total)
        n_test = int(L * self.split_ratio[2] / total)
        return n_train, L - n_test

    def split(self, name: str) -> np.ndarray:
        a, b = self.boundaries()
        spans = {"train": (0, a), "val": (a, b), "test": (b, len(self))}
        if name not in spans:
            raise KeyError(f"unknown split {name!r}; expected one of {SPLITS}")
        lo, hi = spans[name]
        return self.rows[lo:hi]


def _ratio_for(name: str, ratio):
    if ratio is not None:
        return tuple(float(r) for r in ratio)
    meta = KNOWN_DATASETS.get(name)
    if meta is None:
        return (0.6, 0.2, 0.2)
    total = sum(meta[1])
    return tuple(r / total for r in meta[1])


def load_csv(path, split_ratio=None, name: str | None = None, truncate: bool = True) -> Dataset:
    """Read a benchmark CSV: header row, timestamp column, then numeric channels.

    For known dataset names, the file must hold at least the declared number
    of rows; only those rows are kept when ``truncate`` is set.
    """
    path = Path(path)
    name = name or path.stem
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column and at least one channel")
        stamps, values = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(rec)} fields, header has {len(header)}")
            row = []
            for col, cell in enumerate(rec[1:], start=1):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col} ({header[col]!r}): not a number: {cell!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col} ({header[col]!r}): missing value")
                row.append(v)
            stamps.append(rec[0])
            values.append(row)
    if not values:
        raise DataError(f"{path}: no data rows")
    rows = np.array(values, dtype=np.float64)
    meta = KNOWN_DATASETS.get(name)
    if meta is not None:
        C, _, declared, freq = meta
        if rows.shape[1] != C:
            raise DataError(f"{path}: {name} should have {C} channels, found {rows.shape[1]}")
        if rows.shape[0] < declared:
            raise DataError(f"{path}: {name} should have at least {declared} rows, found {rows.shape[0]}")
        if truncate:
            rows, stamps = rows[:declared], stamps[:declared]
    else:
        freq = ""
    return Dataset(name, rows, _ratio_for(name, split_ratio), freq, stamps)


def from_array(rows, name: str = "array", split_ratio=(0.6, 0.2, 0.2)) -> Dataset:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[:, None]
    if not np.all(np.isfinite(rows)):
        raise DataError(f"{name}: non-finite values")
    return Dataset(name, rows, tuple(split_ratio))


@dataclass(frozen=True)
class TemporalWindow:
    x: np.ndarray  # (I, C)
    y: np.ndarray  # (O, C)
    index: int


def window_count(length: int, I: int, O: int, stride: int = 1) -> int:
    if length < I + O:
        raise DataError(f"split of length {length} is too short: need at least I+O = {I + O} rows")
    return (length - I - O) // stride + 1


def window_arrays(series: np.ndarray, I: int, O: int, stride: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked windows as zero-copy views: x (n, I, C), y (n, O, C), starts (n,)."""
    series = np.asarray(series, dtype=np.float64)
    n = window_count(series.shape[0], I, O, stride)
    starts = np.arange(n) * stride
    view = np.lib.stride_tricks.sliding_window_view(series, I + O, axis=0)[starts]  # (n, C, I+O)
    view = np.swapaxes(view, 1, 2)
    return view[:, :I], view[:, I:], starts


def windows(series, I: int, O: int, stride: int = 1) -> list[TemporalWindow]:
    xs, ys, starts = window_arrays(series, I, O, stride)
    return [TemporalWindow(x, y, int(s)) for x, y, s in zip(xs, ys, starts)]


def standardize(ds: Dataset) -> tuple[Dataset, np.ndarray, np.ndarray]:
    """Per-channel z-scoring with train-split statistics."""
    train = ds.split("train")
    mu, sd = train.mean(axis=0), train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    out = Dataset(ds.name, (ds.rows - mu) / sd, ds.split_ratio, ds.frequency, ds.timestamps)
    return out, mu, sd


def synthetic_sine(length: int = 2400, period: int = 24, trend: float = 0.002, noise: float = 0.1,
                   channels: int = 1, seed: int = 0) -> Dataset:
    """Sine of the given period plus a linear trend and Gaussian noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)[:, None]
    phase = rng.uniform(0, 2 * np.pi, size=(1, channels)) if channels > 1 else np.zeros((1, 1))
    rows = np.sin(2 * np.pi * t / period + phase) + trend * t + noise * rng.standard_normal((length, channels))
    return Dataset("synthetic", rows, (0.6, 0.2, 0.2), "step")

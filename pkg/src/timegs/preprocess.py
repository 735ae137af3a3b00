"""Instance normalisation and period folding of look-back windows.

Everything here acts on raw data, so plain numpy suffices; functions accept a
single window ``(I,)`` or a batch ``(..., I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diffcore.ops import bilinear_matrix

EPS = 1e-5


@dataclass
class RevinStats:
    mean: np.ndarray
    std: np.ndarray
    eps: float = EPS


def revin_normalize(x, eps: float = EPS) -> tuple[np.ndarray, RevinStats]:
    """Standardise along the last axis with population std clamped to eps."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ValueError(f"look-back must have at least 2 steps, got {x.shape[-1]}")
    mean = x.mean(axis=-1, keepdims=True)
    std = np.maximum(x.std(axis=-1, keepdims=True), eps)
    return (x - mean) / std, RevinStats(mean, std, eps)


def revin_denormalize(y, stats: RevinStats) -> np.ndarray:
    return np.asarray(y, dtype=np.float64) * stats.std + stats.mean


@dataclass
class PeriodGrid:
    data: np.ndarray  # (..., N', T')
    T: int
    N: int
    pad_count: int


def fold_shape(I: int, T: int) -> tuple[int, int]:
    """(N, pad_count) for folding I steps into rows of length T."""
    N = math.ceil(I / T)
    return N, N * T - I


def fold(x, T: int) -> tuple[np.ndarray, int]:
    """Zero-pad the tail to a whole number of periods and reshape to (..., N, T)."""
    x = np.asarray(x, dtype=np.float64)
    I = x.shape[-1]
    if T < 2:
        raise ValueError(f"period must be >= 2, got {T}")
    if T > I:
        raise ValueError(f"period T={T} exceeds look-back I={I}; mean-pad the window first")
    N, pad = fold_shape(I, T)
    padded = np.concatenate([x, np.zeros(x.shape[:-1] + (pad,))], axis=-1)
    return padded.reshape(x.shape[:-1] + (N, T)), pad


def unfold(grid, I: int) -> np.ndarray:
    grid = np.asarray(grid)
    return grid.reshape(grid.shape[:-2] + (-1,))[..., :I]


def mean_pad_to_period(x, T: int) -> np.ndarray:
    """Left-pad with the window mean so at least one full period is present."""
    x = np.asarray(x, dtype=np.float64)
    short = T - x.shape[-1]
    if short <= 0:
        return x
    fill = np.broadcast_to(x.mean(axis=-1, keepdims=True), x.shape[:-1] + (short,))
    return np.concatenate([fill, x], axis=-1)


def fold_and_upsample(x, T: int, n_up: int, t_up: int) -> PeriodGrid:
    if n_up < 2 or t_up < 2:
        raise ValueError(f"upsampled resolution must be at least 2x2, got {n_up}x{t_up}")
    grid, pad = fold(x, T)
    N = grid.shape[-2]
    Rh, Rw = bilinear_matrix(N, n_up), bilinear_matrix(T, t_up)
    up = np.einsum("ij,...jk,lk->...il", Rh, grid, Rw)
    return PeriodGrid(up, T, N, pad)


def prepare_grid(x, T: int, n_up: int, t_up: int) -> np.ndarray:
    """Mean-pad when needed, fold and upsample; returns the (..., N', T') data."""
    return fold_and_upsample(mean_pad_to_period(x, T), T, n_up, t_up).data

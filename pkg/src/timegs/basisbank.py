"""Frozen dictionary of elliptically masked, normalised 2D Gaussian rasters.

Offsets are ``delta = (dx, dy)`` with ``dx`` the row offset and ``dy`` the
column offset from the raster centre. Covariances are built from lower
triangular Cholesky factors ``L = [[l11, 0], [l21, l22]]``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

SCALES = (0.75, 1.5, 3.0, 6.0)
SHEARS = (0.0, -1.0, 1.0)
SUPPORTED_M = (4, 8, 16, 32)


@dataclass(frozen=True)
class CholeskyParams:
    l11: float
    l21: float
    l22: float

    def covariance(self) -> np.ndarray:
        L = np.array([[self.l11, 0.0], [self.l21, self.l22]])
        return L @ L.T


def _check(p: CholeskyParams) -> None:
    if p.l11 <= 1e-8 or p.l22 <= 1e-8:
        raise ValueError(f"degenerate covariance: {p}")


def mahalanobis_sq(dx, dy, p: CholeskyParams):
    """delta^T (L L^T)^{-1} delta via the closed-form 2x2 inverse."""
    _check(p)
    a, b, c = p.l11, p.l21, p.l22
    s_xx, s_xy, s_yy = a * a, a * b, b * b + c * c
    det = s_xx * s_yy - s_xy * s_xy
    dx, dy = np.asarray(dx, dtype=np.float64), np.asarray(dy, dtype=np.float64)
    return (s_yy * dx * dx - 2.0 * s_xy * dx * dy + s_xx * dy * dy) / det


def gaussian_density(delta, params: CholeskyParams):
    dx, dy = delta
    return np.exp(-0.5 * mahalanobis_sq(dx, dy, params))


def offsets(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (row, column) offsets of every cell relative to the centre."""
    dx = np.arange(h) - (h - 1) // 2
    dy = np.arange(w) - (w - 1) // 2
    return np.meshgrid(dx.astype(np.float64), dy.astype(np.float64), indexing="ij")


def masked_raster(params: CholeskyParams, r: float, h: int, w: int) -> np.ndarray:
    dx, dy = offsets(h, w)
    q = mahalanobis_sq(dx, dy, params)
    raster = np.where(q <= r * r, np.exp(-0.5 * q), 0.0)
    total = raster.sum()
    if total <= 0.0:
        raise ValueError(f"basis {params} has no cells inside its r={r} ellipse on a {h}x{w} raster")
    return raster / total


@dataclass(frozen=True)
class BasisBank:
    rasters: np.ndarray  # (M, h, w), read-only
    params: tuple[CholeskyParams, ...]
    r: float
    h: int
    w: int

    @property
    def M(self) -> int:
        return self.rasters.shape[0]

    def checksum(self) -> str:
        return hashlib.sha256(self.rasters.tobytes()).hexdigest()

    def support(self) -> np.ndarray:
        """Boolean (M, h, w) in-ellipse indicator."""
        dx, dy = offsets(self.h, self.w)
        return np.stack([mahalanobis_sq(dx, dy, p) <= self.r ** 2 for p in self.params])


def build_bank(param_grid: Sequence[CholeskyParams], r: float = 3.0, h: int = 9, w: int = 9) -> BasisBank:
    if not param_grid:
        raise ValueError("param_grid is empty")
    if h < 1 or w < 1 or h % 2 == 0 or w % 2 == 0:
        raise ValueError(f"raster dims must be odd and positive, got h={h}, w={w}")
    rasters = np.stack([masked_raster(p, r, h, w) for p in param_grid])
    rasters.setflags(write=False)
    return BasisBank(rasters, tuple(param_grid), float(r), h, w)


def default_param_grid(M: int = 16) -> list[CholeskyParams]:
    """Deterministic selection of M factors from a scale x shear grid.

    Candidates are ordered in tiers and truncated: isotropic unsheared first,
    then isotropic with shear, then axis-aligned anisotropic, then the rest.
    """
    if M not in SUPPORTED_M:
        raise ValueError(f"unsupported M={M}; choose one of {SUPPORTED_M}")
    cands = []
    for l11 in SCALES:
        for l22 in SCALES:
            for j, l21 in enumerate(SHEARS):
                iso = l11 == l22
                tier = (0 if j == 0 else 1) if iso else (2 if j == 0 else 3)
                cands.append((tier, l11, l22, j, CholeskyParams(l11, l21, l22)))
    cands.sort(key=lambda c: c[:4])
    return [c[-1] for c in cands[:M]]


def default_bank(M: int = 16, r: float = 3.0, h: int = 9, w: int = 9) -> BasisBank:
    return build_bank(default_param_grid(M), r, h, w)


def save_bank(bank: BasisBank, path) -> None:
    """Text dump: header ``M h w`` then one row-major raster per line."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{bank.M} {bank.h} {bank.w}\n")
        for raster in bank.rasters:
            fh.write(" ".join("%.17g" % v for v in raster.ravel()) + "\n")


def load_rasters(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    M, h, w = (int(t) for t in lines[0].split())
    data = np.array([[float(t) for t in line.split()] for line in lines[1 : 1 + M]])
    if data.shape != (M, h * w):
        raise ValueError(f"{path}: expected {M} rows of {h * w} values, got {data.shape}")
    return data.reshape(M, h, w)

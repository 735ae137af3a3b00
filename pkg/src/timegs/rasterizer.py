"""Chronologically continuous placement of 2D kernels on a 1D horizon.

A kernel of h x w cells centred at anchor (row, col) of a period-wide grid is
column-padded to width psi, flattened row-major and shifted so its centre
lands at time ``row * psi + col``. Cells that fall past the end of a row spill
into the next row, which keeps the rendered segment contiguous in time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basisbank import BasisBank
from .diffcore import DiffTensor, ShapeError, ops
from .kernelgen import KernelField

DENSE_LIMIT = 4_000_000


@dataclass(frozen=True)
class AnchorLayout:
    psi: int
    O: int
    stride: int
    positions: np.ndarray  # (G, 2) integer (row, col)

    @property
    def rows(self) -> int:
        return math.ceil(self.O / self.psi)

    @property
    def G(self) -> int:
        return self.positions.shape[0]

    def times(self) -> np.ndarray:
        return self.positions[:, 0] * self.psi + self.positions[:, 1]


def make_layout(psi: int, O: int, stride: int = 1) -> AnchorLayout:
    if psi < 2:
        raise ValueError(f"period must be >= 2, got {psi}")
    if stride < 1:
        raise ValueError(f"anchor stride must be >= 1, got {stride}")
    R = math.ceil(O / psi)
    if psi % stride or R % stride:
        raise ValueError(f"anchor stride {stride} must divide both psi={psi} and rows={R}")
    half = stride // 2
    rr, cc = np.meshgrid(np.arange(0, R, stride) + half, np.arange(0, psi, stride) + half, indexing="ij")
    return AnchorLayout(psi, O, stride, np.stack([rr.ravel(), cc.ravel()], axis=1))


def _check_kernel(h: int, w: int, psi: int) -> None:
    if h % 2 == 0 or w % 2 == 0:
        raise ShapeError("splat", (h, w), detail="kernel dims must be odd")
    if w > psi:
        raise ShapeError("splat", (h, w), (psi,), detail=f"kernel width {w} exceeds period {psi}")


def splat_indices(h: int, w: int, pos, psi: int) -> np.ndarray:
    """Timeline index of every kernel cell (row-major), before clipping."""
    _check_kernel(h, w, psi)
    left = (psi - w) // 2
    flat_pos = (np.arange(h)[:, None] * psi + left + np.arange(w)[None, :]).ravel()
    centre = (h * psi - 1) // 2
    t0 = int(pos[0]) * psi + int(pos[1])
    return t0 + flat_pos - centre


def splat(kernel, pos, layout: AnchorLayout, canvas: np.ndarray | None = None) -> np.ndarray:
    """Add one kernel into a length-O canvas (allocated if not given)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ShapeError("splat", kernel.shape, detail="kernel must be 2D")
    h, w = kernel.shape
    if canvas is None:
        canvas = np.zeros(layout.O)
    idx = splat_indices(h, w, pos, layout.psi)
    keep = (idx >= 0) & (idx < layout.O)
    # each index appears at most once, so plain fancy-index addition is exact
    canvas[idx[keep]] += kernel.ravel()[keep]
    return canvas


def splat_operator(h: int, w: int, layout: AnchorLayout) -> sp.csr_matrix:
    """Sparse (G*h*w, O) matrix S with canvas = kernels_flat @ S."""
    rows, cols = [], []
    for g, pos in enumerate(layout.positions):
        idx = splat_indices(h, w, pos, layout.psi)
        keep = np.nonzero((idx >= 0) & (idx < layout.O))[0]
        rows.append(g * h * w + keep)
        cols.append(idx[keep])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(layout.G * h * w, layout.O))


def basis_operator(bank: BasisBank, layout: AnchorLayout):
    """(G*M, O) matrix whose row (g, m) is basis m splatted at anchor g."""
    S = splat_operator(bank.h, bank.w, layout)
    flat = bank.rasters.reshape(bank.M, -1)
    # block-diagonal copy of the bank, one block per anchor
    Bd = sp.kron(sp.identity(layout.G, format="csr"), sp.csr_matrix(flat), format="csr")
    Q = (Bd @ S).tocsr()
    if layout.G * bank.M * layout.O <= DENSE_LIMIT:
        return Q.toarray()
    return Q


class Renderer:
    """Pre-splatted bank for one branch; renders kernel fields to canvases."""

    def __init__(self, bank: BasisBank, layout: AnchorLayout):
        _check_kernel(bank.h, bank.w, layout.psi)
        self.bank, self.layout = bank, layout
        self.Q = basis_operator(bank, layout)

    def __call__(self, field: KernelField) -> DiffTensor:
        """Field (B, G, P, M) -> canvas (B, P, O)."""
        B, G, P, M = field.W.shape
        if G != self.layout.G or M != self.bank.M:
            raise ShapeError("render_branch", field.W.shape, (B, self.layout.G, P, self.bank.M))
        VW = field.W * ops.reshape(field.V, (B, G, P, 1))
        VW = ops.reshape(ops.transpose(VW, (0, 2, 1, 3)), (B, P, G * M))
        return ops.linear_map(VW, self.Q)


def render_kernels(kernels: DiffTensor, S) -> DiffTensor:
    """Kernels (B, G, P, h*w) -> canvas (B, P, O) through a splat operator."""
    B, G, P, K = kernels.shape
    flat = ops.reshape(ops.transpose(kernels, (0, 2, 1, 3)), (B, P, G * K))
    return ops.linear_map(flat, S)


def render_reference(W: np.ndarray, V: np.ndarray, bank: BasisBank, layout: AnchorLayout, order=None) -> np.ndarray:
    """Un-vectorised render of one sample: W (G, P, M), V (G, P) -> (P, O)."""
    G, P, _ = W.shape
    canvas = np.zeros((P, layout.O))
    for g in (range(G) if order is None else order):
        for p in range(P):
            kern = V[g, p] * np.tensordot(W[g, p], bank.rasters, axes=1)
            splat(kern, layout.positions[g], layout, canvas[p])
    return canvas

"""Heads that turn anchor latents into kernel mixing weights and intensities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basisbank import BasisBank, offsets
from .diffcore import MLP, DiffTensor, Linear, Module, ShapeError, ops


@dataclass
class KernelField:
    W: DiffTensor  # (B, G, P, M), softmax over M
    V: DiffTensor  # (B, G, P), unbounded


class KernelHead(Module):
    """W = softmax(reshape(Linear(z))) over the basis axis; V = MLP(z)."""

    def __init__(self, latent_dim: int, P: int, M: int, rng: np.random.Generator):
        self.P, self.M, self.latent_dim = P, M, latent_dim
        self.weight_head = Linear(latent_dim, P * M, rng)
        self.intensity_head = MLP(latent_dim, latent_dim, P, rng)

    def forward(self, z: DiffTensor) -> KernelField:
        if z.ndim != 3 or z.shape[-1] != self.latent_dim:
            raise ShapeError("kernel_head", z.shape, ("B", "G", self.latent_dim))
        B, G, _ = z.shape
        logits = ops.reshape(self.weight_head(z), (B, G, self.P, self.M))
        return KernelField(ops.softmax(logits, axis=-1), self.intensity_head(z))


def compose(field: KernelField, bank: BasisBank, g: int, p: int, b: int = 0) -> np.ndarray:
    """Composite raster V[g,p] * sum_m W[g,p,m] B_m for one sample b."""
    B, G, P, M = field.W.shape
    if not (0 <= b < B and 0 <= g < G and 0 <= p < P):
        raise IndexError(f"(b, g, p) = ({b}, {g}, {p}) out of range for field of shape {(B, G, P)}")
    if M != bank.M:
        raise ShapeError("compose", field.W.shape, bank.rasters.shape)
    w = field.W.values[b, g, p]
    return field.V.values[b, g, p] * np.tensordot(w, bank.rasters, axes=1)


class CholeskyHead(Module):
    """Directly regress (l11, l21, l22) per anchor and component, then rasterise.

    Diagonal factors pass through softplus plus a small floor; the shear is
    free. The ellipse mask is treated as a constant of the forward pass.
    """

    FLOOR = 1e-3

    def __init__(self, latent_dim: int, P: int, r: float, h: int, w: int, rng: np.random.Generator):
        self.P, self.r, self.h, self.w, self.latent_dim = P, r, h, w, latent_dim
        self.factor_head = Linear(latent_dim, 3 * P, rng)
        self.intensity_head = MLP(latent_dim, latent_dim, P, rng)
        dx, dy = offsets(h, w)
        self._dx, self._dy = dx.ravel(), dy.ravel()

    def factors(self, z: DiffTensor):
        B, G, _ = z.shape
        raw = ops.reshape(self.factor_head(z), (B, G, self.P, 3))
        a = ops.softplus(raw[..., 0:1]) + self.FLOOR
        b = raw[..., 1:2]
        c = ops.softplus(raw[..., 2:3]) + self.FLOOR
        return a, b, c

    def forward(self, z: DiffTensor) -> DiffTensor:
        """Kernels (B, G, P, h*w), each scaled to total mass V."""
        if z.ndim != 3 or z.shape[-1] != self.latent_dim:
            raise ShapeError("cholesky_head", z.shape, ("B", "G", self.latent_dim))
        a, b, c = self.factors(z)
        u = ops.div(DiffTensor(self._dx), a)
        v = ops.div(DiffTensor(self._dy) - b * u, c)
        q = ops.square(u) + ops.square(v)
        mask = (q.values <= self.r ** 2).astype(np.float64)
        dens = ops.exp(ops.scale(q, -0.5)) * DiffTensor(mask)
        kern = ops.div(dens, ops.sum(dens, axis=-1, keepdims=True))
        B, G, P = z.shape[0], z.shape[1], self.P
        V = ops.reshape(self.intensity_head(z), (B, G, P, 1))
        return kern * V

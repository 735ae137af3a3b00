"""Channel-independent forecaster: K branches of fold/encode/render, then fusion."""

from __future__ import annotations

import numpy as np

from .aggregate import Fusion
from .basisbank import BasisBank, default_bank
from .config import ModelConfig
from .diffcore import MLP, DiffTensor, Linear, Module, ops
from .encoder import Encoder, EncoderConfig
from .kernelgen import CholeskyHead, KernelHead
from .preprocess import RevinStats, revin_denormalize, revin_normalize
from .rasterizer import Renderer, make_layout, render_kernels, splat_operator


class Branch(Module):
    """One period: encoder, kernel head and renderer (or a direct head)."""

    def __init__(self, cfg: ModelConfig, psi: int, bank: BasisBank, rng: np.random.Generator):
        self.psi, self.decoder, self.P, self.O = psi, cfg.decoder, cfg.P, cfg.O
        self.layout = make_layout(psi, cfg.O, cfg.anchor_stride)
        G = self.layout.G
        enc_cfg = EncoderConfig(cfg.encoder, cfg.base_channels, cfg.latent_dim, cfg.depth, cfg.grid_rows, cfg.grid_cols)
        self.encoder = Encoder(enc_cfg, cfg.I, psi, G, rng)
        D = cfg.latent_dim
        if cfg.decoder == "multibasis":
            self.head = KernelHead(D, cfg.P, bank.M, rng)
            self._render = Renderer(bank, self.layout)
        elif cfg.decoder == "cholesky":
            self.head = CholeskyHead(D, cfg.P, bank.r, bank.h, bank.w, rng)
            self._S = splat_operator(bank.h, bank.w, self.layout)
        elif cfg.decoder == "linear_head":
            self.head = Linear(G * D, cfg.P * cfg.O, rng)
        else:
            self.head = MLP(G * D, D, cfg.P * cfg.O, rng)

    def forward(self, xn: np.ndarray) -> DiffTensor:
        """Normalised windows (N, I) -> canvases (N, P, O)."""
        z = self.encoder(self.encoder.prepare(xn))
        if self.decoder == "multibasis":
            return self._render(self.head(z))
        if self.decoder == "cholesky":
            return render_kernels(self.head(z), self._S)
        N = z.shape[0]
        return ops.reshape(self.head(ops.flatten(z)), (N, self.P, self.O))


class TimeGS(Module):
    def __init__(self, cfg: ModelConfig, C: int, rng: np.random.Generator | None = None, bank: BasisBank | None = None):
        cfg.validate()
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.cfg, self.C = cfg, C
        self.bank = bank if bank is not None else default_bank(cfg.M, cfg.r, cfg.h, cfg.w)
        self.branches = [Branch(cfg, psi, self.bank, rng) for psi in cfg.periods]
        self.fusion = Fusion(C, len(self.branches), cfg.P, cfg.fusion)

    def normalize(self, x: np.ndarray) -> tuple[np.ndarray, RevinStats]:
        """Windows (B, I, C) -> per-channel normalised rows (B*C, I)."""
        B, I, C = x.shape
        if C != self.C:
            raise ValueError(f"model built for {self.C} channels, got {C}")
        return revin_normalize(np.swapaxes(x, 1, 2).reshape(B * C, I))

    def forward_normalized(self, x: np.ndarray) -> tuple[DiffTensor, RevinStats]:
        """Forecast in RevIN space, (B, C, O), plus the per-row statistics."""
        B = x.shape[0]
        xn, stats = self.normalize(x)
        shape = (B, self.C, 1, self.cfg.P, self.cfg.O)
        canv = [ops.reshape(br(xn), shape) for br in self.branches]
        stacked = canv[0] if len(canv) == 1 else ops.concat(canv, axis=2)
        return self.fusion(stacked), stats

    def target_normalized(self, y: np.ndarray, stats: RevinStats) -> np.ndarray:
        B, O, C = y.shape
        rows = np.swapaxes(y, 1, 2).reshape(B * C, O)
        return ((rows - stats.mean) / stats.std).reshape(B, C, O)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Denormalised forecast (B, O, C)."""
        out, stats = self.forward_normalized(x)
        B = x.shape[0]
        y = revin_denormalize(out.values.reshape(B * self.C, -1), stats)
        return np.swapaxes(y.reshape(B, self.C, -1), 1, 2)

"""Per-branch feature extractors mapping a look-back window to G anchor latents.

Grid variants (``unet``, ``plain_cnn``) consume the folded, upsampled grid;
vector variants (``linear``, ``mlp``) consume the raw normalised window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import Conv2d, ConvTranspose2d, DiffTensor, Linear, MLP, Module, ShapeError, ops
from .preprocess import prepare_grid

VARIANTS = ("unet", "linear", "mlp", "plain_cnn")


@dataclass(frozen=True)
class EncoderConfig:
    variant: str = "unet"
    base_channels: int = 8
    latent_dim: int = 16
    depth: int = 2
    grid_rows: int = 16
    grid_cols: int = 16
    plain_layers: int = 4

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown encoder variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant == "unet":
            if self.depth < 1:
                raise ValueError("unet depth must be >= 1")
            f = 2 ** self.depth
            if self.grid_rows % f or self.grid_cols % f:
                raise ValueError(
                    f"grid {self.grid_rows}x{self.grid_cols} is not divisible by 2^depth = {f}")


class DoubleConv(Module):
    def __init__(self, c_in, c_out, rng):
        self.conv1 = Conv2d(c_in, c_out, rng)
        self.conv2 = Conv2d(c_out, c_out, rng)

    def forward(self, x):
        return ops.gelu(self.conv2(ops.gelu(self.conv1(x))))


class UNet(Module):
    """Conv encoder/decoder with `depth` 2x poolings and skip concatenations."""

    def __init__(self, c: int, depth: int, rng):
        self.inc = DoubleConv(1, c, rng)
        self.downs = [DoubleConv(c * 2 ** l, c * 2 ** (l + 1), rng) for l in range(depth)]
        self.ups = [ConvTranspose2d(c * 2 ** (l + 1), c * 2 ** l, rng) for l in reversed(range(depth))]
        self.merges = [DoubleConv(c * 2 ** (l + 1), c * 2 ** l, rng) for l in reversed(range(depth))]

    def forward(self, x):
        skips = [self.inc(x)]
        for down in self.downs:
            skips.append(down(ops.max_pool2d(skips[-1])))
        h = skips.pop()
        for up, merge in zip(self.ups, self.merges):
            h = merge(ops.concat([skips.pop(), up(h)], axis=1))
        return h

    @staticmethod
    def count(c: int, depth: int) -> int:
        conv = lambda a, b: 9 * a * b + b  # noqa: E731
        dconv = lambda a, b: conv(a, b) + conv(b, b)  # noqa: E731
        n = dconv(1, c)
        for l in range(depth):
            lo, hi = c * 2 ** l, c * 2 ** (l + 1)
            n += dconv(lo, hi) + (4 * hi * lo + lo) + dconv(hi, lo)
        return n


class PlainCNN(Module):
    def __init__(self, c: int, layers: int, rng):
        self.convs = [Conv2d(1 if i == 0 else c, c, rng) for i in range(layers)]

    def forward(self, x):
        for conv in self.convs:
            x = ops.gelu(conv(x))
        return x

    @staticmethod
    def count(c: int, layers: int) -> int:
        return (9 * c + c) + (layers - 1) * (9 * c * c + c)


class Encoder(Module):
    """Window batch (B, I) -> latents (B, G, D_h)."""

    def __init__(self, cfg: EncoderConfig, I: int, period: int, G: int, rng: np.random.Generator):
        cfg.validate()
        self.cfg, self.I, self.period, self.G = cfg, I, period, G
        D = cfg.latent_dim
        if cfg.variant == "unet":
            self.body = UNet(cfg.base_channels, cfg.depth, rng)
        elif cfg.variant == "plain_cnn":
            self.body = PlainCNN(cfg.base_channels, cfg.plain_layers, rng)
        if cfg.variant in ("unet", "plain_cnn"):
            n_feat = cfg.base_channels * cfg.grid_rows * cfg.grid_cols
            self.proj = Linear(n_feat, G * D, rng)
        elif cfg.variant == "linear":
            self.proj = Linear(I, G * D, rng)
        else:
            self.proj = MLP(I, 2 * D, G * D, rng)

    @property
    def uses_grid(self) -> bool:
        return self.cfg.variant in ("unet", "plain_cnn")

    def prepare(self, x: np.ndarray) -> np.ndarray:
        """Raw normalised windows (B, I) -> the array this encoder consumes."""
        if x.shape[-1] != self.I:
            raise ShapeError("encoder", x.shape, (self.I,), detail="look-back length mismatch")
        if self.uses_grid:
            return prepare_grid(x, self.period, self.cfg.grid_rows, self.cfg.grid_cols)
        return x

    def forward(self, inp) -> DiffTensor:
        inp = inp if isinstance(inp, DiffTensor) else DiffTensor(inp)
        B = inp.shape[0]
        cfg = self.cfg
        if self.uses_grid:
            want = (cfg.grid_rows, cfg.grid_cols)
            if inp.shape[1:] != want:
                raise ShapeError("encoder", inp.shape, (B,) + want)
            feat = self.body(ops.reshape(inp, (B, 1) + want))
            z = self.proj(ops.flatten(feat))
        else:
            if inp.shape[1:] != (self.I,):
                raise ShapeError("encoder", inp.shape, (B, self.I))
            z = self.proj(inp)
        return ops.reshape(z, (B, self.G, cfg.latent_dim))

"""Per-channel softmax fusion of branch/component canvases, loss and metrics."""

from __future__ import annotations

import numpy as np

from .diffcore import DiffTensor, Module, ShapeError, ops, parameter

MODES = ("channel_adaptive", "channel_agnostic", "average")


class Fusion(Module):
    """Learnable logits Gamma (C x K) and Omega (C x P).

    ``channel_agnostic`` keeps a single shared row; ``average`` keeps no
    logits and uses the constants 1/K and 1/P.
    """

    def __init__(self, C: int, K: int, P: int, mode: str = "channel_adaptive"):
        if mode not in MODES:
            raise ValueError(f"unknown fusion mode {mode!r}; choose from {MODES}")
        self.C, self.K, self.P, self.mode = C, K, P, mode
        rows = C if mode == "channel_adaptive" else 1
        if mode != "average":
            self.gamma = parameter(np.zeros((rows, K)))
            self.omega = parameter(np.zeros((rows, P)))

    def weights(self) -> tuple[DiffTensor, DiffTensor]:
        """Branch weights alpha (rows, K) and component weights omega (rows, P)."""
        if self.mode == "average":
            return DiffTensor(np.full((1, self.K), 1.0 / self.K)), DiffTensor(np.full((1, self.P), 1.0 / self.P))
        return ops.softmax(self.gamma, axis=1), ops.softmax(self.omega, axis=1)

    def forward(self, canvases: DiffTensor) -> DiffTensor:
        """Canvases (B, C, K, P, O) -> forecast (B, C, O)."""
        if canvases.ndim != 5 or canvases.shape[2:4] != (self.K, self.P) or canvases.shape[1] != self.C:
            raise ShapeError("fuse", canvases.shape, ("B", self.C, self.K, self.P, "O"))
        alpha, omega = self.weights()
        rows = alpha.shape[0]
        w = ops.reshape(alpha, (1, rows, self.K, 1, 1)) * ops.reshape(omega, (1, rows, 1, self.P, 1))
        return ops.sum(canvases * w, axis=(2, 3))


def hybrid_loss(pred: DiffTensor, target, lam: float) -> DiffTensor:
    """lam * MSE + (1 - lam) * MAE over every entry."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    target = target if isinstance(target, DiffTensor) else DiffTensor(target)
    if pred.shape != target.shape:
        raise ShapeError("loss", pred.shape, target.shape)
    err = pred - target
    terms = []
    if lam > 0.0:
        terms.append(ops.scale(ops.mean(ops.square(err)), lam))
    if lam < 1.0:
        terms.append(ops.scale(ops.mean(ops.absolute(err)), 1.0 - lam))
    return terms[0] if len(terms) == 1 else terms[0] + terms[1]


def metrics(pred, target) -> tuple[float, float]:
    pred, target = np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("metrics", pred.shape, target.shape)
    err = pred - target
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


class MetricSums:
    """Running sums so metrics can be accumulated batch by batch."""

    def __init__(self):
        self.sq = 0.0
        self.ab = 0.0
        self.n = 0

    def add(self, pred, target) -> None:
        err = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
        self.sq += float(np.sum(err * err))
        self.ab += float(np.sum(np.abs(err)))
        self.n += err.size

    def result(self) -> tuple[float, float]:
        if self.n == 0:
            raise ValueError("no predictions accumulated")
        return self.sq / self.n, self.ab / self.n

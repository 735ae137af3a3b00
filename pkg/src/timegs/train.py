"""Minibatch training with early stopping, evaluation and the ablation harness."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .aggregate import MetricSums, hybrid_loss
from .config import ModelConfig, preset
from .dataio import Dataset, load_csv, standardize, synthetic_sine, window_arrays
from .diffcore import Adam, Tape, backward
from .model import TimeGS

log = logging.getLogger(__name__)

ABLATIONS = {
    "linear_enc": {"encoder": "linear"},
    "mlp_enc": {"encoder": "mlp"},
    "plain_cnn_enc": {"encoder": "plain_cnn"},
    "no_multibasis": {"decoder": "cholesky"},
    "linear_head": {"decoder": "linear_head"},
    "mlp_head": {"decoder": "mlp_head"},
    "average_agg": {"fusion": "average"},
    "channel_agnostic_agg": {"fusion": "channel_agnostic"},
}


class DivergenceError(RuntimeError):
    pass


@dataclass
class RunReport:
    config: dict
    seed: int
    horizon: int
    test_mse: float
    test_mae: float
    best_val_mse: float
    best_epoch: int
    epochs_run: int
    steps: int
    wall_time: float
    loss_curve: list[float] = field(default_factory=list)
    val_curve: list[float] = field(default_factory=list)
    bank_checksum_before: str = ""
    bank_checksum_after: str = ""
    stopped_by: str = "epochs"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_dataset(cfg: ModelConfig) -> Dataset:
    if cfg.dataset == "synthetic" and cfg.data_path is None:
        return synthetic_sine(cfg.synthetic_length, seed=cfg.seed)
    if cfg.data_path is None:
        raise ValueError(f"dataset {cfg.dataset!r} needs data_path")
    return load_csv(cfg.data_path, name=cfg.dataset)


@dataclass
class Splits:
    train: tuple[np.ndarray, np.ndarray]
    val: tuple[np.ndarray, np.ndarray]
    test: tuple[np.ndarray, np.ndarray]
    C: int


def make_splits(ds: Dataset, I: int, O: int) -> Splits:
    z, _, _ = standardize(ds)
    parts = {}
    for name in ("train", "val", "test"):
        x, y, _ = window_arrays(z.split(name), I, O)
        parts[name] = (x, y)
    return Splits(parts["train"], parts["val"], parts["test"], z.C)


def evaluate(model: TimeGS, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> tuple[float, float]:
    """MSE/MAE of denormalised forecasts, in ordered batches."""
    acc = MetricSums()
    for i in range(0, x.shape[0], batch_size):
        acc.add(model.predict(x[i : i + batch_size]), y[i : i + batch_size])
    return acc.result()


def train_step(model: TimeGS, opt: Adam, xb: np.ndarray, yb: np.ndarray, lam: float) -> float:
    with Tape() as tape:
        pred, stats = model.forward_normalized(xb)
        loss = hybrid_loss(pred, model.target_normalized(yb, stats), lam)
    value = float(loss.values)
    if not math.isfinite(value):
        bad = tape.first_nonfinite()
        where = f"op {bad.op!r} (tape entry {tape.entries.index(bad)})" if bad is not None else "the loss"
        raise DivergenceError(f"loss became {value}; first non-finite value produced by {where}")
    backward(loss)
    opt.step()
    tape.clear()
    return value


def fit(cfg: ModelConfig, splits: Splits, model: TimeGS | None = None,
        frozen: tuple[str, ...] = ()) -> tuple[TimeGS, RunReport]:
    """Train on ``splits.train`` with early stopping on validation MSE.

    Parameters named in ``frozen`` are left out of the optimiser.
    """
    cfg.validate()
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    init_rng, shuffle_rng = (np.random.default_rng(s) for s in seeds)
    model = model if model is not None else TimeGS(cfg, splits.C, rng=init_rng)
    opt = Adam([p for name, p in model.named_parameters() if name not in frozen], lr=cfg.lr)
    checksum = model.bank.checksum()

    xt, yt = splits.train
    n = xt.shape[0]
    t0 = time.perf_counter()
    losses, vals = [], []
    best_val, best_state, best_epoch, bad_epochs = math.inf, model.state_dict(), -1, 0
    steps, epoch, stopped = 0, 0, "epochs"
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        for i in range(0, n, cfg.batch_size):
            idx = np.sort(order[i : i + cfg.batch_size])
            losses.append(train_step(model, opt, xt[idx], yt[idx], cfg.lam))
            steps += 1
            if cfg.max_steps is not None and steps >= cfg.max_steps:
                stopped = "max_steps"
                break
            if cfg.time_budget is not None and time.perf_counter() - t0 > cfg.time_budget:
                stopped = "time_budget"
                break
        val_mse, _ = evaluate(model, *splits.val, cfg.eval_batch_size)
        vals.append(val_mse)
        log.info("epoch %d  steps %d  train %.4f  val mse %.4f", epoch, steps, np.mean(losses[-max(1, n // cfg.batch_size):]), val_mse)
        if val_mse < best_val:
            best_val, best_state, best_epoch, bad_epochs = val_mse, model.state_dict(), epoch, 0
        else:
            bad_epochs += 1
        if stopped != "epochs":
            break
        if bad_epochs >= cfg.patience:
            stopped = "early_stopping"
            break
    model.load_state_dict(best_state)
    mse, mae = evaluate(model, *splits.test, cfg.eval_batch_size)
    report = RunReport(
        config=cfg.to_dict(), seed=cfg.seed, horizon=cfg.O, test_mse=mse, test_mae=mae,
        best_val_mse=best_val, best_epoch=best_epoch, epochs_run=epoch + 1, steps=steps,
        wall_time=time.perf_counter() - t0, loss_curve=losses, val_curve=vals,
        bank_checksum_before=checksum, bank_checksum_after=model.bank.checksum(), stopped_by=stopped,
    )
    return model, report


def train(cfg: ModelConfig) -> tuple[TimeGS, RunReport]:
    splits = make_splits(load_dataset(cfg), cfg.I, cfg.O)
    return fit(cfg, splits)


def ablation_config(cfg: ModelConfig, variant: str) -> ModelConfig:
    if variant not in ABLATIONS:
        raise ValueError(f"unknown ablation {variant!r}; valid variants: {', '.join(ABLATIONS)}")
    return replace(cfg, **ABLATIONS[variant])


def ablate(cfg: ModelConfig, variant: str) -> tuple[TimeGS, RunReport]:
    return train(ablation_config(cfg, variant))


def last_period_baseline(x: np.ndarray, O: int, psi: int) -> np.ndarray:
    """Repeat the final observed period across the horizon: x (B, I, C) -> (B, O, C)."""
    last = x[:, -psi:]
    reps = -(-O // psi)
    return np.tile(last, (1, reps, 1))[:, :O]


def synthetic_config(**overrides) -> ModelConfig:
    return preset("synthetic", **overrides)

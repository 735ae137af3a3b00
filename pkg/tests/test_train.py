import gc
import json

import numpy as np
import pytest

from tiny import tiny_config, tiny_splits
from timegs import cli
from timegs.basisbank import default_bank, load_rasters
from timegs.model import TimeGS
from timegs.train import DivergenceError, ablation_config, evaluate, fit, last_period_baseline


@pytest.fixture(scope="module")
def splits():
    return tiny_splits()


def test_first_steps_are_bitwise_reproducible(splits):
    cfg = tiny_config(seed=3, max_steps=10)
    a = fit(cfg, splits)[1].loss_curve
    b = fit(cfg, splits)[1].loss_curve
    assert len(a) == 10 and a == b


def test_objectives_give_different_trajectories(splits):
    a = fit(tiny_config(lam=1.0, max_steps=6), splits)[1].loss_curve
    b = fit(tiny_config(lam=0.0, max_steps=6), splits)[1].loss_curve
    assert a != b


def test_early_stopping_restores_best(splits):
    model, rep = fit(tiny_config(epochs=6, patience=2, lr=3e-3), splits)
    assert rep.best_val_mse == min(rep.val_curve)
    assert rep.best_epoch == int(np.argmin(rep.val_curve))
    mse, _ = evaluate(model, *splits.val, 16)
    assert mse == pytest.approx(rep.best_val_mse, rel=1e-12)


def test_metrics_do_not_depend_on_eval_batch_size(splits):
    model = TimeGS(tiny_config(), splits.C)
    ref = evaluate(model, *splits.test, batch_size=int(splits.test[0].shape[0]))
    for bs in (1, 7, 32):
        np.testing.assert_allclose(evaluate(model, *splits.test, batch_size=bs), ref, rtol=1e-10)


def test_bank_untouched_by_training(splits):
    model, rep = fit(tiny_config(epochs=1), splits)
    assert rep.bank_checksum_before == rep.bank_checksum_after == model.bank.checksum()


def test_training_leaves_no_reference_cycles(splits):
    # each step's tape points at its outputs and back; it must be freed eagerly, not by the cycle collector
    gc.collect()
    gc.disable()
    try:
        fit(tiny_config(max_steps=5, epochs=1), splits)
        assert gc.collect() == 0
    finally:
        gc.enable()


def test_divergence_names_first_bad_op(splits):
    model = TimeGS(tiny_config(), splits.C)
    model.branches[0].head.intensity_head.fc2.bias.values[:] = np.nan
    with pytest.raises(DivergenceError, match="op 'add'"):
        fit(tiny_config(max_steps=1), splits, model=model)


def test_average_matches_frozen_zero_logit_training(splits):
    cfg = tiny_config(seed=2, max_steps=8, epochs=1)
    _, ra = fit(ablation_config(cfg, "average_agg"), splits)
    _, rb = fit(cfg, splits, frozen=("fusion.gamma", "fusion.omega"))
    assert ra.loss_curve == rb.loss_curve
    assert ra.test_mse == rb.test_mse


def test_unknown_ablation_lists_valid_names():
    with pytest.raises(ValueError, match="no_multibasis"):
        ablation_config(tiny_config(), "no_fusion")


def test_last_period_baseline():
    x = np.arange(10.0)[None, :, None]
    np.testing.assert_array_equal(last_period_baseline(x, 7, 3)[0, :, 0], [7, 8, 9, 7, 8, 9, 7])


# -- CLI ---------------------------------------------------------------------

TINY_FLAGS = ["--I", "24", "--horizon", "12", "--psi-set", "4", "--M", "4", "--latent-dim", "4",
              "--base-channels", "2", "--grid-rows", "8", "--grid-cols", "8", "--h", "3", "--w", "3",
              "--synthetic-length", "240", "--max-steps", "3", "--epochs", "1"]


def test_cli_train_writes_report(tmp_path):
    cfg_path = tmp_path / "etth1.json"
    cfg_path.write_text(json.dumps({"dataset": "synthetic", "lam": 0.0}))
    out = tmp_path / "run"
    assert cli.main(["train", "--config", str(cfg_path), *TINY_FLAGS, "--output-dir", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["horizon"] == 12 and rep["config"]["lam"] == 0.0 and len(rep["loss_curve"]) == 3
    assert cli.main(["eval", "--run-dir", str(out), "--splits", "val,test"]) == 0
    ev = json.loads((out / "eval.json").read_text())
    assert ev["test"]["mse"] == pytest.approx(rep["test_mse"], rel=1e-12)


def test_cli_seeds_and_grid(tmp_path):
    out = tmp_path / "sweep"
    rc = cli.main(["train", *TINY_FLAGS, "--seeds", "0,1", "--grid", "lam=0.0,1.0", "--output-dir", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary) == 4 and {s["seed"] for s in summary} == {0, 1}


def test_cli_ablate(tmp_path):
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--variant", "no_multibasis", *TINY_FLAGS, "--output-dir", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["variant"] == "no_multibasis" and rep["config"]["decoder"] == "cholesky"
    assert cli.main(["ablate", "--variant", "bogus", *TINY_FLAGS, "--output-dir", str(out)]) == 2


def test_cli_dump_bank_round_trip(tmp_path):
    path = tmp_path / "bank.txt"
    assert cli.main(["dump-bank", "--output", str(path)]) == 0
    assert load_rasters(path).tobytes() == default_bank(16, 3.0, 9, 9).rasters.tobytes()


def test_cli_dumps(tmp_path):
    out = tmp_path / "render"
    assert cli.main(["dump-render", *TINY_FLAGS, "--output-dir", str(out)]) == 0
    lines = (out / "canvas.csv").read_text().splitlines()
    assert lines[0] == "channel,branch,component,t,value" and len(lines) == 1 + 2 * 12
    series = tmp_path / "series.csv"
    assert cli.main(["plot-data", *TINY_FLAGS, "--output", str(series)]) == 0
    assert len(series.read_text().splitlines()) == 241


def test_cli_errors(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) != 0
    assert "missing.json" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        cli.main(["train", "--no-such-flag"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])

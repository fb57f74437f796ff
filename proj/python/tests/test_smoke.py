import json
import math

import pytest

import tppbench as tb


def test_hawkes_loglik_single_event():
    p = tb.HawkesParams.univariate(0.2, 0.8, 1.0)
    seq = tb.EventSequence([1.0], [0], 2.0)
    expected = math.log(0.2) - (0.4 + 0.8 * (1 - math.exp(-1.0)))
    assert tb.hawkes_loglik(p, seq) == pytest.approx(expected, abs=1e-12)


def test_generate_is_deterministic():
    p = tb.HawkesParams.univariate(0.2, 0.8, 1.0)
    a = tb.generate_hawkes(p, 20.0, 5, 3)
    b = tb.generate_hawkes(p, 20.0, 5, 3)
    assert a == b
    assert all(s.t_end == 20.0 for s in a)


def test_otd_example():
    a = tb.EventSequence([1.0, 2.0], [0, 0], 3.0)
    b = tb.EventSequence([1.5], [0], 3.0)
    assert tb.otd(a, b, 1.0) == pytest.approx(1.5)


def test_dataset_round_trip(tmp_path):
    seqs = tb.generate_hawkes(tb.HawkesParams.univariate(0.5, 0.3, 2.0), 10.0, 4, 0)
    tb.write_dataset(tmp_path / "d.jsonl", seqs, 1)
    assert tb.load_dataset(tmp_path / "d.jsonl") == seqs


def test_errors_carry_code():
    with pytest.raises(tb.TppError, match="NonMonotoneTimestamps"):
        tb.EventSequence([2.0, 1.0], [0, 0], 3.0)


def test_train_and_evaluate(tmp_path):
    p = tb.HawkesParams.univariate(0.3, 0.5, 1.0)
    seqs = tb.generate_hawkes(p, 20.0, 40, 1)
    paths = {}
    for name, part in (("train", seqs[:24]), ("dev", seqs[24:32]), ("test", seqs[32:])):
        path = tmp_path / f"{name}.jsonl"
        tb.write_dataset(path, part, 1, name)
        paths[name] = str(path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "data": paths,
        "model": {"id": "hawkes"},
        "optimizer": {"lr": 0.05},
        "training": {"batch_size": 8, "max_epochs": 3, "patience": 2},
        "thinning": {"num_samples": 8},
        "max_eval_sequences": 3,
        "output_dir": str(tmp_path / "run"),
    }))
    cfg = tb.load_config(cfg_path, overrides=["seed=5"])
    assert cfg["seed"] == 5
    summary = tb.train(cfg)
    assert 1 <= summary["epochs"] <= 3
    report = tb.evaluate(cfg)
    ll = report["metrics"]["loglik"]
    assert math.isfinite(ll["per_event"])
    assert ll["num_sequences"] == 8
    assert "rmse" in report["metrics"]["next_event"]

import csv

import numpy as np
import pytest

from qapm import harness
from qapm.errors import ConfigError, NumericError
from qapm.gnn import GnnConfig, GnnModel, match
from qapm.graphgen import InstanceConfig, erdos_renyi, generate_records, make_instance, write_dataset
from qapm.harness import ExperimentConfig, evaluate, read_recovery_csv, report, train, write_recovery_csv

SMALL = GnnConfig(layers=3, feat=6, J=1)


def small_cfg(tmp_path, **kw):
    base = dict(n=15, p=0.3, train_size=20, epochs=2, batch=8, gnn=SMALL, seed=3, out_dir=str(tmp_path / "run"))
    base.update(kw)
    return ExperimentConfig(**base)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(model="regular", deg=4, noise_grid=[0, 0.1], train_pe=(0.01, 0.02),
                           gnn=GnnConfig(layers=2, feat=4, input_feature="two_hop_degree"), seed=9)
    cfg.save(tmp_path / "c.json")
    assert ExperimentConfig.load(tmp_path / "c.json") == cfg
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("bad", [
    {"batch": 0}, {"noise_grid": [1.5]}, {"train_pe": (0.2, 0.1)}, {"baselines": ["magic"]},
    {"decode": "greedy"}, {"model": "tree"},
])
def test_config_rejects(bad):
    with pytest.raises((ConfigError, ValueError)):
        ExperimentConfig(**bad)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"epochz": 3})


def test_train_size_zero(tmp_path):
    res = train(small_cfg(tmp_path, train_size=0))
    assert res.log == []
    assert read_csv(tmp_path / "run" / "metrics.csv") == [list(harness.METRICS_COLUMNS)]
    m, meta = GnnModel.load(res.checkpoint)
    assert meta["epoch"] == 0
    fresh = GnnModel.init(SMALL, [3, 3])
    assert all(np.array_equal(m.params[k], fresh.params[k]) for k in m.params)


def test_train_writes_log_and_checkpoint(tmp_path):
    res = train(small_cfg(tmp_path))
    rows = read_csv(tmp_path / "run" / "metrics.csv")
    assert rows[0] == list(harness.METRICS_COLUMNS) and len(rows) == 3
    _, meta = GnnModel.load(res.checkpoint)
    assert meta["epoch"] == 2
    assert ExperimentConfig.load(tmp_path / "run" / "config.json") == small_cfg(tmp_path)


@pytest.mark.parametrize("stream", [True, False])
def test_training_is_deterministic(tmp_path, stream):
    a = train(small_cfg(tmp_path, stream=stream, out_dir=str(tmp_path / "a")))
    b = train(small_cfg(tmp_path, stream=stream, out_dir=str(tmp_path / "b")))
    strip = lambda path: [r[:3] for r in read_csv(path)]  # wall_ms is timing, not content
    assert strip(tmp_path / "a" / "metrics.csv") == strip(tmp_path / "b" / "metrics.csv")
    assert all(np.array_equal(a.model.params[k], b.model.params[k]) for k in a.model.params)


def test_dataset_training(tmp_path):
    path = tmp_path / "d.jsonl"
    write_dataset(path, generate_records(InstanceConfig(n=12, p=0.3, p_e=0.05), 10, 1))
    res = train(small_cfg(tmp_path, n=12, dataset=str(path), epochs=1))
    assert len(res.log) == 1


def test_non_finite_loss_keeps_last_checkpoint(tmp_path, monkeypatch):
    real = harness.loss_and_grads
    calls = {"n": 0}

    def flaky(model, batch):
        calls["n"] += 1
        loss, grads, recs = real(model, batch)
        return (np.nan if calls["n"] > 3 else loss), grads, recs

    monkeypatch.setattr(harness, "loss_and_grads", flaky)
    cfg = small_cfg(tmp_path, epochs=3)  # 3 batches per epoch
    with pytest.raises(NumericError):
        train(cfg)
    _, meta = GnnModel.load(tmp_path / "run" / "checkpoint.json")
    assert meta["epoch"] == 1
    assert len(read_csv(tmp_path / "run" / "metrics.csv")) == 2


def test_overfit_small_corpus():
    # noise-free pairs, so every node is identifiable and the loss can approach zero
    cfg = ExperimentConfig(n=20, p=0.3, train_size=32, epochs=200, stream=False, lr=1e-2,
                           train_pe=(0.0, 0.0), gnn=GnnConfig(layers=5, feat=10), seed=0)
    res = train(cfg)
    assert res.log[-1]["mean_loss"] < 0.1 * np.log(20)


def test_evaluate_trials_zero(tmp_path):
    cfg = small_cfg(tmp_path, trials=0)
    assert evaluate(None, cfg) == []
    write_recovery_csv(tmp_path / "r.csv", [])
    assert read_csv(tmp_path / "r.csv") == [list(harness.RECOVERY_COLUMNS)]


def test_evaluate_umeyama_exact_on_friendly_graphs():
    cfg = ExperimentConfig(n=20, p=0.5, noise_grid=[0.0], trials=30, baselines=["umeyama"], seed=2)
    for t in range(30):  # the oracle's precondition holds on every drawn instance
        g1, _, _ = make_instance(cfg.instance(0.0), [2, 4, 0, t])
        w, U = np.linalg.eigh(g1.adj)
        G = np.abs(U) @ np.abs(U).T
        np.fill_diagonal(G, 0)
        assert np.min(np.diff(w)) > 1e-6 and G.max() < 1 - 1e-9
    (row,) = evaluate(None, cfg)
    assert row["mean_recovery"] == 1.0 and row["std"] == 0.0 and row["method"] == "umeyama"


def test_untrained_gnn_on_unrelated_pairs_is_chance():
    n, recs = 50, []
    for s in range(100):
        m = GnnModel.init(GnnConfig(), [5, s])
        pi = np.random.default_rng([9, s]).permutation(n)
        recs.append(match(m, erdos_renyi(n, 0.2, [7, s]), erdos_renyi(n, 0.2, [8, s]), truth=pi).recovery)
    assert abs(np.mean(recs) - 1 / n) <= 0.01


def test_evaluate_rows_and_reruns(tmp_path):
    model = GnnModel.init(SMALL, 0)
    cfg = small_cfg(tmp_path, noise_grid=[0.0, 0.1], trials=4)
    rows = evaluate(model, cfg)
    assert [(r["method"], r["p_e"]) for r in rows] == [
        ("gnn", 0.0), ("umeyama", 0.0), ("lowrank", 0.0), ("gnn", 0.1), ("umeyama", 0.1), ("lowrank", 0.1)]
    assert all(r["trials"] == 4 and r["seed"] == 3 for r in rows)
    assert evaluate(model, cfg) == rows
    model.save(tmp_path / "m.json")
    assert evaluate(str(tmp_path / "m.json"), cfg) == rows


def test_evaluate_threads_do_not_change_rows(tmp_path, monkeypatch):
    cfg = small_cfg(tmp_path, noise_grid=[0.05], trials=6)
    monkeypatch.setenv("QAPM_THREADS", "1")
    assert harness.worker_count() == 1
    one = evaluate(None, cfg)
    monkeypatch.setenv("QAPM_THREADS", "3")
    assert evaluate(None, cfg) == one


def test_evaluate_checkpoint_mismatch(tmp_path):
    GnnModel.init(SMALL, 0).save(tmp_path / "m.json")
    cfg = small_cfg(tmp_path, gnn=GnnConfig(layers=3, feat=6, J=1, input_feature="two_hop_degree"))
    with pytest.raises(ConfigError):
        evaluate(str(tmp_path / "m.json"), cfg)
    with pytest.raises(ConfigError):
        evaluate(None, cfg, methods=["gnn"])


def test_recovery_csv_and_report(tmp_path):
    rows = [
        {"method": "gnn", "p_e": 0.0, "mean_recovery": 0.9, "std": 0.1, "trials": 5, "seed": 1},
        {"method": "umeyama", "p_e": 0.0, "mean_recovery": 1.0, "std": 0.0, "trials": 5, "seed": 1},
        {"method": "gnn", "p_e": 0.05, "mean_recovery": 0.4, "std": 0.2, "trials": 5, "seed": 1},
    ]
    write_recovery_csv(tmp_path / "r.csv", rows)
    assert read_recovery_csv(tmp_path / "r.csv") == rows
    header, table = report(rows)
    assert header == ["p_e", "gnn", "umeyama"]
    assert table == [[0.0, 0.9, 1.0], [0.05, 0.4, ""]]


def test_lr_decay_schedule(tmp_path, monkeypatch):
    seen = []
    real = harness.Adamax.step

    def spy(self, params, grads):
        seen.append(self.lr)
        return real(self, params, grads)

    monkeypatch.setattr(harness.Adamax, "step", spy)
    train(small_cfg(tmp_path, lr=0.1, lr_decay=0.5, epochs=3, train_size=8))
    assert seen == [0.1, 0.05, 0.025]
    with pytest.raises(ConfigError):
        small_cfg(tmp_path, lr_decay=0.0)

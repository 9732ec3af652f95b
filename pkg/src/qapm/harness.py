"""Experiment configuration, training loop, evaluation sweeps and result files."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import BASELINES
from .diffcore import Adamax
from .errors import ConfigError, NumericError
from .gnn import GnnConfig, GnnModel, loss_and_grads, match
from .graphgen import InstanceConfig, make_instance, read_dataset, record_to_sample

log = logging.getLogger(__name__)

METRICS_COLUMNS = ("epoch", "mean_loss", "train_recovery", "wall_ms")
RECOVERY_COLUMNS = ("method", "p_e", "mean_recovery", "std", "trials", "seed")
TRAINING_FIELDS = ("model", "n", "p", "deg", "train_pe", "train_size", "epochs", "batch", "lr",
                   "lr_decay", "stream", "dataset", "gnn", "seed")


@dataclass
class ExperimentConfig:
    model: str = "er"
    n: int = 50
    p: float = 0.2
    deg: int = 10
    noise_grid: list[float] = field(default_factory=lambda: [0.0, 0.02, 0.05, 0.1])
    train_pe: tuple[float, float] = (0.0, 0.1)
    train_size: int = 20000
    epochs: int = 1
    batch: int = 32
    lr: float = 1e-3
    lr_decay: float = 1.0
    stream: bool = True
    dataset: str | None = None
    gnn: GnnConfig = field(default_factory=GnnConfig)
    baselines: list[str] = field(default_factory=lambda: ["umeyama", "lowrank"])
    lowrank_k: int = 4
    trials: int = 100
    decode: str = "argmax"
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.gnn, dict):
            self.gnn = GnnConfig.from_dict(self.gnn)
        self.train_pe = tuple(self.train_pe)
        self.noise_grid = [float(v) for v in self.noise_grid]
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if any(not 0.0 <= v <= 1.0 for v in self.noise_grid + list(self.train_pe)):
            raise ConfigError("noise levels must lie in [0, 1]")
        if len(self.train_pe) != 2 or self.train_pe[0] > self.train_pe[1]:
            raise ConfigError(f"train_pe must be a (low, high) range, got {self.train_pe}")
        unknown = set(self.baselines) - set(BASELINES)
        if unknown:
            raise ConfigError(f"unknown baselines {sorted(unknown)}; choose from {sorted(BASELINES)}")
        if self.decode not in ("argmax", "lap"):
            raise ConfigError(f"decode must be 'argmax' or 'lap', got {self.decode!r}")
        self.instance(0.0)  # validates model, n

    def instance(self, p_e: float) -> InstanceConfig:
        return InstanceConfig(model=self.model, n=self.n, p=self.p, deg=self.deg, p_e=p_e)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_pe"] = list(self.train_pe)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        return cls(**d)

    def training_fields(self) -> dict:
        """The fields that determine a trained checkpoint (evaluation settings excluded)."""
        d = self.to_dict()
        return {k: d[k] for k in TRAINING_FIELDS}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def worker_count() -> int:
    cap = os.environ.get("QAPM_THREADS")
    n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    return max(1, min(n, int(cap))) if cap else n


def training_sample(cfg: ExperimentConfig, seed):
    """One planted pair with its noise level drawn uniformly from ``cfg.train_pe``."""
    lo, hi = cfg.train_pe
    p_e = float(np.random.default_rng([*seed, 99]).uniform(lo, hi)) if hi > lo else lo
    return make_instance(cfg.instance(p_e), seed)


class SampleSource:
    """Supplies the training pairs of each epoch.

    Streaming mode draws fresh pairs every epoch; otherwise a fixed corpus
    (generated once, or read from a dataset file) is reshuffled each epoch.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.corpus = None
        if cfg.dataset:
            self.corpus = [record_to_sample(r) for r in read_dataset(cfg.dataset)]
        elif not cfg.stream:
            self.corpus = [training_sample(cfg, [cfg.seed, 0, i]) for i in range(cfg.train_size)]

    @property
    def size(self) -> int:
        return len(self.corpus) if self.corpus is not None else self.cfg.train_size

    def epoch(self, epoch: int):
        if self.corpus is not None:
            order = np.random.default_rng([self.cfg.seed, 1, epoch]).permutation(len(self.corpus))
            for i in order:
                yield self.corpus[i]
        else:
            for i in range(self.cfg.train_size):
                yield training_sample(self.cfg, [self.cfg.seed, 2, epoch, i])


def _batches(it, size):
    buf = []
    for item in it:
        buf.append(item)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


@dataclass
class TrainResult:
    model: GnnModel
    log: list[dict]
    checkpoint: Path | None


def train(cfg: ExperimentConfig, model: GnnModel | None = None) -> TrainResult:
    """Adamax training on planted pairs; writes metrics and a checkpoint per epoch.

    The step size of epoch ``e`` is ``lr * lr_decay**(e - 1)``.

    A non-finite loss aborts with :class:`NumericError` and leaves the last
    good checkpoint on disk untouched.
    """
    model = model or GnnModel.init(cfg.gnn, [cfg.seed, 3])
    out = Path(cfg.out_dir) if cfg.out_dir else None
    ckpt = out / "checkpoint.json" if out else None
    metrics = out / "metrics.csv" if out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.json")
        with open(metrics, "w", newline="") as fh:
            csv.writer(fh).writerow(METRICS_COLUMNS)
    source = SampleSource(cfg)
    if cfg.stream and not cfg.dataset:
        log.info("streaming fresh samples each epoch (%d per epoch)", source.size)
    if ckpt is not None:
        model.save(ckpt, {"epoch": 0, "experiment": cfg.to_dict()})
    opt = Adamax(lr=cfg.lr)
    rows = []
    if source.size == 0:
        return TrainResult(model, rows, ckpt)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        opt.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        losses, weights, recs = [], [], []
        for batch in _batches(source.epoch(epoch), cfg.batch):
            loss, grads, r = loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite loss in epoch {epoch}; last good checkpoint kept at {ckpt}")
            opt.step(model.params, grads)
            losses.append(loss)
            weights.append(len(batch))
            recs.extend(r)
        row = {
            "epoch": epoch,
            "mean_loss": float(np.average(losses, weights=weights)),
            "train_recovery": float(np.mean(recs)),
            "wall_ms": int(round(1000 * (time.perf_counter() - t0))),
        }
        rows.append(row)
        log.info("epoch %d loss %.4f recovery %.3f", epoch, row["mean_loss"], row["train_recovery"])
        if out:
            with open(metrics, "a", newline="") as fh:
                csv.writer(fh).writerow([row[c] for c in METRICS_COLUMNS])
            model.save(ckpt, {"epoch": epoch, "experiment": cfg.to_dict()})
    return TrainResult(model, rows, ckpt)


def _trial(model, cfg, method, p_e, seed):
    g1, g2, pi = make_instance(cfg.instance(p_e), seed)
    if method == "gnn":
        return match(model, g1, g2, truth=pi, decode_rule=cfg.decode).recovery
    kw = {"k": cfg.lowrank_k} if method == "lowrank" else {}
    return BASELINES[method](g1, g2, truth=pi, **kw).recovery


def evaluate(model: GnnModel | str | os.PathLike | None, cfg: ExperimentConfig,
             methods: Sequence[str] | None = None) -> list[dict]:
    """Mean and standard deviation of recovery per method and noise level.

    Every method sees the same ``cfg.trials`` instances per noise level.
    Pass ``model=None`` to evaluate baselines only.
    """
    if isinstance(model, (str, os.PathLike)):
        model, _ = GnnModel.load(model)
        if model.cfg.input_feature != cfg.gnn.input_feature:
            raise ConfigError("checkpoint input feature disagrees with the config")
    if methods is None:
        methods = (["gnn"] if model is not None else []) + list(cfg.baselines)
    if "gnn" in methods and model is None:
        raise ConfigError("gnn evaluation needs a checkpoint")
    rows = []
    if cfg.trials <= 0:
        return rows
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for gi, p_e in enumerate(cfg.noise_grid):
            seeds = [[cfg.seed, 4, gi, t] for t in range(cfg.trials)]
            for method in methods:
                recs = list(pool.map(lambda s: _trial(model, cfg, method, p_e, s), seeds))
                rows.append({
                    "method": method,
                    "p_e": p_e,
                    "mean_recovery": float(np.mean(recs)),
                    "std": float(np.std(recs, ddof=1)) if len(recs) > 1 else 0.0,
                    "trials": len(recs),
                    "seed": cfg.seed,
                })
    return rows


def write_recovery_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RECOVERY_COLUMNS)
        w.writeheader()
        w.writerows(rows)


def read_recovery_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [
            {**r, "p_e": float(r["p_e"]), "mean_recovery": float(r["mean_recovery"]),
             "std": float(r["std"]), "trials": int(r["trials"]), "seed": int(r["seed"])}
            for r in csv.DictReader(fh)
        ]


def report(rows: list[dict]) -> tuple[list[str], list[list]]:
    """Pivot recovery rows into one line per noise level, one column per method."""
    methods = sorted({r["method"] for r in rows}, key=lambda m: (m != "gnn", m))
    grid = sorted({r["p_e"] for r in rows})
    cell = {(r["method"], r["p_e"]): r["mean_recovery"] for r in rows}
    header = ["p_e"] + methods
    table = [[pe] + [cell.get((m, pe), "") for m in methods] for pe in grid]
    return header, table

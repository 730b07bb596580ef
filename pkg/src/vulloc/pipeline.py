"""Dataset splitting and the train / fine-tune loops.

Training is per-sample Adam with a seeded shuffle each epoch. Early stopping
watches validation loss: strict decreases (> 1e-6) reset the patience
counter, and the returned checkpoint is the epoch with the best validation
loss. Every stochastic choice flows through named PRNG streams, so a rerun
with the same inputs, config, and seed is bit-identical.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import models as M
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .codegraph import SCHEMA_VERSION, Sample
from .errors import (
    EmptyTrainSet, NonFiniteLoss, NonFiniteValue, TooFewSamples, VocabMismatch,
)
from .nn import AdamState, PrngState, adam_step
from .vocab import DEFAULT_T_MAX, EmbeddingTable, corpus_fingerprint

IMPROVE_EPS = 1e-6


class EarlyStopper:
    """Stop after `patience` consecutive epochs without a strict improvement.

    An improvement is a validation-loss decrease of more than IMPROVE_EPS
    below the best seen so far.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.since_improve = 0

    def update(self, valid_loss: float, epoch: int) -> tuple[bool, bool]:
        """Returns (improved, should_stop)."""
        if valid_loss < self.best - IMPROVE_EPS:
            self.best = valid_loss
            self.best_epoch = epoch
            self.since_improve = 0
            return True, False
        self.since_improve += 1
        return False, self.since_improve >= self.patience


@dataclass
class SplitConfig:
    ratios: tuple = (0.90, 0.05, 0.05)
    order: str = "temporal"  # temporal (sort by commit_ts) | given

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r <= 0 for r in self.ratios):
            raise ValueError("ratios must be three positive numbers")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ValueError(f"ratios must sum to 1, got {sum(self.ratios)}")
        if self.order not in ("temporal", "given"):
            raise ValueError(f"unknown order policy {self.order!r}")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    max_epochs: int = 10
    patience: int = 3
    batch_size: int = 1
    seed: int = 0
    vul_only: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


def pretrain_config(**kw) -> TrainConfig:
    return TrainConfig(**{"lr": 1e-4, "max_epochs": 10, **kw})


def finetune_config(**kw) -> TrainConfig:
    return TrainConfig(**{"lr": 1e-5, "max_epochs": 50, **kw})


def _largest_remainder_sizes(n: int, ratios) -> list[int]:
    quotas = [r * n for r in ratios]
    sizes = [int(q) for q in quotas]
    leftover = n - sum(sizes)
    order = sorted(range(3), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in range(leftover):
        sizes[order[i % 3]] += 1
    return sizes


def split_dataset(samples: list[Sample], config: SplitConfig = SplitConfig()
                  ) -> tuple[list[Sample], list[Sample], list[Sample]]:
    n = len(samples)
    if n < 3:
        raise TooFewSamples(f"need at least 3 samples to split, got {n}")
    sizes = _largest_remainder_sizes(n, config.ratios)
    if min(sizes) == 0:
        raise TooFewSamples(
            f"{n} samples with ratios {config.ratios} leave an empty split")
    if config.order == "temporal":
        order = sorted(range(n), key=lambda i: (samples[i].commit_ts, i))
        ordered = [samples[i] for i in order]
    else:
        ordered = list(samples)
    n_train, n_valid, n_test = sizes
    return (ordered[:n_train],
            ordered[n_train:n_train + n_valid],
            ordered[n_train + n_valid:])


def filter_vulnerable(samples: list[Sample]) -> list[Sample]:
    return [s for s in samples if s.label_node != 0]


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_loss: float
    wall_ms: float
    steps: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    kind: str
    config: object
    model: object
    provenance: dict
    history: list[EpochRecord] = field(default_factory=list)

    def save(self, path) -> None:
        save_checkpoint(path, self.kind, M.config_dict(self.config),
                        self.model.params.state_arrays(), self.provenance)


def _mean_valid_loss(model, samples, table, t_max, need_adj) -> float:
    total = 0.0
    for s in samples:
        prep = M.prepare(s, table, t_max=t_max, need_adjacency=need_adj)
        total += model.loss(prep, train=False).item()
    return total / len(samples)


def _run_training(model, kind: str, train_set, valid_set, config: TrainConfig,
                  table: EmbeddingTable, t_max: int) -> tuple[dict, list[EpochRecord]]:
    if not train_set:
        raise EmptyTrainSet("no training samples")
    if not valid_set:
        raise EmptyTrainSet("no validation samples")
    if config.vul_only:
        bad = [s.source_path for s in (*train_set, *valid_set) if s.label_node == 0]
        if bad:
            raise EmptyTrainSet(
                f"vul_only training got non-vulnerable samples, e.g. {bad[0]!r}")

    need_adj = kind == "ggnn"
    prng = PrngState(config.seed)
    shuffle_rng = prng.stream("shuffle")
    dropout_rng = prng.stream("dropout")
    adam = AdamState(lr=config.lr)

    stopper = EarlyStopper(config.patience)
    best_arrays = model.params.state_arrays()
    history: list[EpochRecord] = []
    steps = 0

    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(train_set))
        running = 0.0
        for idx in order:
            sample = train_set[idx]
            prep = M.prepare(sample, table, t_max=t_max, need_adjacency=need_adj)
            model.params.zero_grads()
            try:
                loss = model.loss(prep, train=True, rng=dropout_rng)
            except NonFiniteValue as exc:
                raise NonFiniteLoss(
                    f"epoch {epoch}, sample {sample.source_path!r}: {exc}") from None
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLoss(
                    f"epoch {epoch}, sample {sample.source_path!r}: loss={value}")
            loss.backward()
            adam_step(model.params, adam)
            running += value
            steps += 1
        valid_loss = _mean_valid_loss(model, valid_set, table, t_max, need_adj)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        history.append(EpochRecord(epoch, running / len(train_set), valid_loss,
                                   wall_ms, steps))
        improved, stop = stopper.update(valid_loss, epoch)
        if improved:
            best_arrays = model.params.state_arrays()
        if stop:
            break

    model.params.load_arrays(best_arrays)
    summary = {
        "best_epoch": stopper.best_epoch,
        "best_valid_loss": stopper.best if stopper.best != float("inf") else None,
        "epochs_trained": len(history),
        "final_train_loss": history[-1].train_loss if history else None,
        "total_steps": steps,
    }
    return summary, history


def train(kind: str, train_set, valid_set, config: TrainConfig,
          model_config, table: EmbeddingTable,
          t_max: int = DEFAULT_T_MAX) -> TrainResult:
    model = M.build_model(kind, model_config, seed=config.seed)
    summary, history = _run_training(model, kind, train_set, valid_set,
                                     config, table, t_max)
    provenance = {
        "schema_version": SCHEMA_VERSION,
        "embed_fp": table.fingerprint(),
        "corpus_fp": corpus_fingerprint(list(train_set)),
        "train_config": asdict(config),
        "t_max": t_max,
        "initialized_from": None,
        **summary,
    }
    return TrainResult(kind, model_config, model, provenance, history)


def finetune(base: Checkpoint, train_set, valid_set, config: TrainConfig,
             table: EmbeddingTable, t_max: int = DEFAULT_T_MAX) -> TrainResult:
    base_fp = base.provenance.get("embed_fp")
    if base_fp != table.fingerprint():
        raise VocabMismatch(
            "base model was trained against a different embedding table")
    if base.provenance.get("t_max", t_max) != t_max:
        raise VocabMismatch(
            f"base model used t_max={base.provenance.get('t_max')}, got {t_max}")
    model_config = M.config_from_dict(base.model_kind, base.config)
    model = M.build_model(base.model_kind, model_config, seed=config.seed)
    model.params.load_arrays(base.arrays)
    if config.max_epochs == 0:
        summary = {"best_epoch": 0, "best_valid_loss": None,
                   "epochs_trained": 0, "final_train_loss": None,
                   "total_steps": 0}
        history = []
    else:
        summary, history = _run_training(model, base.model_kind, train_set,
                                         valid_set, config, table, t_max)
    provenance = {
        "schema_version": SCHEMA_VERSION,
        "embed_fp": table.fingerprint(),
        "corpus_fp": corpus_fingerprint(list(train_set)),
        "train_config": asdict(config),
        "t_max": t_max,
        "initialized_from": {
            "corpus_fp": base.provenance.get("corpus_fp"),
            "best_valid_loss": base.provenance.get("best_valid_loss"),
        },
        **summary,
    }
    return TrainResult(base.model_kind, model_config, model, provenance, history)


def load_base(path) -> Checkpoint:
    return load_checkpoint(path)


def history_jsonl(history: list[EpochRecord]) -> str:
    import json
    return "".join(json.dumps(rec.as_dict(), separators=(",", ":")) + "\n"
                   for rec in history)

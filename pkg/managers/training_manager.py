#!/usr/bin/env python3
import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, fields
from typing import List, Tuple

import numpy as np
import pandas as pd
import torch

from managers.dataset_manager import TrainExample, collate, iterate_batches, split_train_validation
from managers.loss_functions import classification_accuracy, kl_loss
from managers.plateau_lr import PlateauLR
from model.checkpoint import save_checkpoint
from model.tracto_transformer import TractoTransformer
from utils.errors import EmptyDatasetError, InvalidArgumentError, NonFiniteError

METRICS_HEADER = ["epoch", "train_loss", "val_loss", "val_accuracy", "lr"]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    betas: Tuple[float, float] = (0.9, 0.999)
    epsilon: float = 1e-8
    decay_factor: float = 0.7
    plateau_epochs: int = 2
    min_improvement: float = 0.3  # accuracy percentage points
    epochs: int = 30
    batch_size: int = 20
    seed: int = 0
    val_fraction: float = 0.2
    max_len: int = 100
    window_overlap: int = 10
    use_cnn3d: bool = True
    use_reverse_aug: bool = True
    use_smooth_labels: bool = True

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InvalidArgumentError(f"unknown training config keys: {sorted(unknown)}")
        values = dict(values)
        if "betas" in values:
            values["betas"] = tuple(values["betas"])
        return cls(**values).validate()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["betas"] = list(self.betas)
        return out

    def validate(self) -> "TrainConfig":
        if not self.lr > 0:
            raise InvalidArgumentError(f"training.lr must be > 0, got {self.lr}")
        if not 0 < self.decay_factor < 1:
            raise InvalidArgumentError(f"training.decay_factor must lie in (0, 1), got {self.decay_factor}")
        if self.batch_size < 1:
            raise InvalidArgumentError("training.batch_size must be >= 1")
        if self.epochs < 0 or self.plateau_epochs < 1:
            raise InvalidArgumentError("training.epochs must be >= 0 and plateau_epochs >= 1")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise InvalidArgumentError(f"training.betas must be two values in [0, 1), got {self.betas}")
        if not 0 <= self.val_fraction < 1:
            raise InvalidArgumentError("training.val_fraction must lie in [0, 1)")
        if self.max_len < 2 or not 0 <= self.window_overlap < self.max_len:
            raise InvalidArgumentError("training.max_len must be >= 2 and window_overlap in [0, max_len)")
        return self


def make_optimizer(model: TractoTransformer, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas), eps=cfg.epsilon,
                            foreach=False)


def adam_step(model: torch.nn.Module, optimizer: torch.optim.Optimizer, lr: float = None):
    """
    One Adam update (bias-corrected, torch.optim.Adam) at learning rate `lr`. A non-finite
    gradient aborts the step before any parameter moves.
    """
    bad = [name for name, p in model.named_parameters()
           if p.grad is not None and not torch.all(torch.isfinite(p.grad))]
    if bad:
        raise NonFiniteError(f"non-finite gradient in {len(bad)} parameter(s): {', '.join(bad[:5])}")
    if lr is not None:
        for group in optimizer.param_groups:
            group["lr"] = lr
    optimizer.step()


def batch_loss(model: TractoTransformer, batch: List[TrainExample]):
    """Forward one padded batch; returns (loss, accuracy, n_valid_positions)."""
    cubes, targets, padding = collate(batch)
    logits = model(cubes, padding)
    probs = torch.softmax(logits, dim=-1)
    valid = ~padding
    loss = kl_loss(probs, targets, valid)
    accuracy = classification_accuracy(probs.detach(), targets, valid)
    return loss, accuracy, int(valid.sum())


def evaluate(model: TractoTransformer, examples: List[TrainExample], batch_size: int):
    """Position-weighted loss and accuracy over `examples` in eval mode."""
    model.eval()
    total_loss = 0.0
    total_hits = 0.0
    total = 0
    with torch.no_grad():
        for batch in iterate_batches(examples, batch_size):
            loss, accuracy, n_valid = batch_loss(model, batch)
            total_loss += float(loss) * n_valid
            total_hits += accuracy / 100.0 * n_valid
            total += n_valid
    if total == 0:
        return float("nan"), 0.0
    return total_loss / total, 100.0 * total_hits / total


class TrainingManager:
    """
    Runs the epoch loop: seeded shuffling, padded batches, KL loss, backward, Adam,
    validation accuracy, plateau LR decay, best-validation checkpoint and a CSV epoch log.
    """
    def __init__(self, model: TractoTransformer, cfg: TrainConfig,
                 checkpoint_path: str = None, metrics_log: str = None, extras: dict = None):
        self.model = model
        self.cfg = cfg
        self.checkpoint_path = checkpoint_path
        self.metrics_log = metrics_log
        self.extras = dict(extras or {})
        self.optimizer = make_optimizer(model, cfg)
        self.scheduler = PlateauLR(cfg, cfg.lr)
        self.history = []
        self.best = None

    def _start_log(self):
        if not self.metrics_log:
            return
        with open(self.metrics_log, mode="w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow(METRICS_HEADER)

    def _log_epoch(self, row: dict):
        self.history.append(row)
        logging.info(f"epoch {row['epoch']}: train_loss={row['train_loss']:.6f} val_loss={row['val_loss']:.6f} "
                     f"val_accuracy={row['val_accuracy']:.2f}% lr={row['lr']:.6g}")
        if not self.metrics_log:
            return
        with open(self.metrics_log, mode="a", newline="", encoding="utf-8") as f:
            csv.writer(f).writerow([row["epoch"]] + [repr(float(row[k])) for k in METRICS_HEADER[1:]])

    def train_step(self, batch: List[TrainExample], lr: float) -> float:
        self.model.train()
        self.optimizer.zero_grad()
        loss, _, _ = batch_loss(self.model, batch)
        if not torch.isfinite(loss):
            raise NonFiniteError(f"non-finite training loss {float(loss)}")
        loss.backward()
        adam_step(self.model, self.optimizer, lr)
        return float(loss)

    def _maybe_checkpoint(self, epoch: int, val_loss: float, val_accuracy: float):
        improved = (self.best is None or val_accuracy > self.best[1]
                    or (val_accuracy == self.best[1] and val_loss < self.best[2]))
        if not improved:
            return
        self.best = (epoch, val_accuracy, val_loss)
        if self.checkpoint_path:
            extras = dict(self.extras, epoch=epoch, val_accuracy=val_accuracy, val_loss=val_loss)
            save_checkpoint(self.model, self.checkpoint_path, extras)

    def train_loop(self, dataset: List[TrainExample]):
        if not dataset:
            raise EmptyDatasetError("train_loop needs a non-empty dataset")
        torch.manual_seed(self.cfg.seed)
        train_set, val_set = split_train_validation(dataset, self.cfg.val_fraction, self.cfg.seed)
        self._start_log()

        train_loss, _ = evaluate(self.model, train_set, self.cfg.batch_size)
        val_loss, val_accuracy = evaluate(self.model, val_set, self.cfg.batch_size)
        self._log_epoch(dict(epoch=0, train_loss=train_loss, val_loss=val_loss,
                             val_accuracy=val_accuracy, lr=self.scheduler.lr))

        for epoch in range(1, self.cfg.epochs + 1):
            rng = np.random.default_rng([self.cfg.seed, epoch])
            lr = self.scheduler.lr
            losses, weights = [], []
            for batch_index, batch in enumerate(iterate_batches(train_set, self.cfg.batch_size, rng)):
                try:
                    losses.append(self.train_step(batch, lr))
                except NonFiniteError as e:
                    raise NonFiniteError(f"epoch {epoch}, batch {batch_index}: {e}") from e
                weights.append(sum(ex.length for ex in batch))
            train_loss = float(np.average(losses, weights=weights))
            val_loss, val_accuracy = evaluate(self.model, val_set, self.cfg.batch_size)
            if not math.isfinite(val_loss):
                raise NonFiniteError(f"epoch {epoch}: non-finite validation loss")
            self._log_epoch(dict(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                                 val_accuracy=val_accuracy, lr=lr))
            self._maybe_checkpoint(epoch, val_loss, val_accuracy)
            self.scheduler.step(val_accuracy)

        if self.cfg.epochs == 0:
            self._maybe_checkpoint(0, val_loss, val_accuracy)
        return self.model, self.history


def train_loop(dataset: List[TrainExample], model: TractoTransformer, cfg: TrainConfig,
               checkpoint_path: str = None, metrics_log: str = None, extras: dict = None):
    manager = TrainingManager(model, cfg, checkpoint_path, metrics_log, extras)
    return manager.train_loop(dataset)


def summarize_metrics_log(csv_path: str) -> dict:
    """
    Reads the epoch log and reports the best epoch, its accuracy and the learning-rate
    decays that happened along the way.
    """
    if not os.path.exists(csv_path):
        logging.warning(f"No metrics log at {csv_path}")
        return {}
    df = pd.read_csv(csv_path)
    trained = df[df["epoch"] > 0]
    if trained.empty:
        return {"epochs": 0, "initial_train_loss": float(df["train_loss"].iloc[0])}
    best = trained.loc[trained["val_accuracy"].idxmax()]
    summary = {
        "epochs": int(trained["epoch"].max()),
        "initial_train_loss": float(df["train_loss"].iloc[0]),
        "final_train_loss": float(trained["train_loss"].iloc[-1]),
        "best_epoch": int(best["epoch"]),
        "best_val_accuracy": float(best["val_accuracy"]),
        "final_lr": float(trained["lr"].iloc[-1]),
        "lr_decays": int((trained["lr"].diff().fillna(0) < 0).sum()),
    }
    print("----- TRAINING SUMMARY -----")
    for key, value in summary.items():
        print(f"{key:20s} {value}")
    return summary

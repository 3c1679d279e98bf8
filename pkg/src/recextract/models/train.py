from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import autograd as ag
from ..metrics import evaluate_model, mean_metrics, sample_negatives
from ..optim import Adam

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 100
    patience: int = 10
    eval_negatives: int = 100
    seed: int = 0


def train_victim(model, split, cfg: TrainConfig):
    """Fit ``model`` on the training prefixes of ``split``; keep the epoch with best validation N@10.

    Returns the per-epoch trace: mean training loss and validation metrics.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps)
    val_neg = sample_negatives(model.n_items, split.val, n=cfg.eval_negatives, seed=cfg.seed)
    users = np.arange(split.n_users)
    trace, best, best_state, stale = [], -1.0, model.state_dict(), 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(users)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            seqs = [split.train[u] for u in order[start:start + cfg.batch_size]]
            try:
                loss = model.training_loss(seqs, rng)
                if loss is None:
                    continue
                model.zero_grad()
                loss.backward()
            except ag.NumericError as err:
                raise TrainingDiverged(f"epoch {epoch}, step {opt.state.step}: {err}") from err
            opt.step()
            losses.append(float(loss.data))
        model.eval()
        val = mean_metrics(evaluate_model(model, split.val_inputs(), split.val, val_neg))
        row = {"epoch": epoch, "loss": float(np.mean(losses)) if losses else float("nan"), **{f"val_{k}": v for k, v in val.items()}}
        trace.append(row)
        log.info("epoch %d loss %.4f val N@10 %.4f", epoch, row["loss"], val["N@10"])
        if val["N@10"] > best:
            best, best_state, stale = val["N@10"], model.state_dict(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return trace


def test_metrics(model, split, n_negatives=100, seed=0):
    neg = sample_negatives(model.n_items, split.test, n=n_negatives, seed=seed + 1)
    return mean_metrics(evaluate_model(model, split.test_inputs(), split.test, neg))

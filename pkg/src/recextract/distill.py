"""Fit a white-box surrogate to black-box top-k lists with a pairwise margin ranking loss."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .metrics import agreement, evaluate_scores, batched_scores, mean_metrics, sample_negatives, top_k
from .models import build_model
from .models.train import TrainingDiverged
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass
class DistillConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 0.01
    warmup_steps: int = 100
    margin_rank: float = 0.5    # between neighbouring black-box ranks
    margin_neg: float = 1.0     # between a ranked item and its paired negative
    patience: int = 10
    val_fraction: float = 0.1
    resample_negatives: bool = True
    seed: int = 0


def expand_subsequences(sequences, labels):
    """Prefixes ``x[:2] .. x[:T]`` of every sequence, each with the list recorded after it.

    Returns (inputs, targets, skipped) where ``skipped`` counts sequences shorter than 2.
    """
    inputs, targets, skipped = [], [], 0
    for seq, lab in zip(sequences, labels):
        if len(seq) < 2:
            skipped += 1
            continue
        for t in range(2, len(seq) + 1):
            inputs.append(list(seq[:t]))
            targets.append(list(lab[t - 1]))
    return inputs, targets, skipped


def distill_loss(ranked_scores, negative_scores, margin_rank, margin_neg):
    """Mean over rows of the neighbour-rank hinge plus the ranked-vs-negative hinge.

    ``ranked_scores`` (..., k) holds white-box scores of the black-box list in
    black-box order; ``negative_scores`` (..., k) the paired negatives.
    """
    k = ranked_scores.shape[-1]
    if k < 2:
        raise ag.ShapeError("ranking loss needs at least two ranked items")
    if negative_scores.shape != ranked_scores.shape:
        raise ag.ShapeError(f"negatives {negative_scores.shape} vs ranked {ranked_scores.shape}")
    if margin_rank < 0 or margin_neg < 0:
        raise ValueError("margins must be non-negative")
    nxt = ranked_scores[..., 1:]
    cur = ranked_scores[..., :-1]
    pair = ag.mean(ag.relu(ag.add(ag.sub(nxt, cur), margin_rank)), axis=-1)
    neg = ag.mean(ag.relu(ag.add(ag.sub(negative_scores, ranked_scores), margin_neg)), axis=-1)
    return ag.mean(ag.add(pair, neg))


def sample_excluding(rng, n_items, lists):
    """Per row, ``len(list)`` uniform items from 1..n_items that are not in the row's list."""
    lists = np.asarray(lists, dtype=np.int64)
    rows, k = lists.shape
    keys = rng.random((rows, n_items + 1))
    keys[:, 0] = np.inf
    np.put_along_axis(keys, lists, np.inf, axis=1)
    free = n_items - k
    if free >= k:
        return np.argpartition(keys, k - 1, axis=1)[:, :k]
    # tiny catalogues: fewer free items than k, so draw with replacement
    pools = np.argsort(keys, axis=1)[:, :max(free, 1)]
    return np.take_along_axis(pools, rng.integers(pools.shape[1], size=(rows, k)), axis=1)


class _Examples:
    """Training examples; causal models score all prefixes of a sequence in one pass."""

    def __init__(self, model, sequences, labels):
        self.model = model
        self.grouped = model.causal and all(len(s) <= model.item_capacity for s in sequences)
        if self.grouped:
            self.units = [(list(s), [list(lab[t - 1]) for t in range(2, len(s) + 1)])
                          for s, lab in zip(sequences, labels) if len(s) >= 2]
        else:
            inputs, targets, _ = expand_subsequences(sequences, labels)
            self.units = list(zip(inputs, targets))

    def __len__(self):
        return len(self.units)

    def negatives(self, idx, lists, rng, cache=None):
        """Fresh negatives, or the ones first drawn for these units when ``cache`` is given."""
        if cache is None:
            return sample_excluding(rng, self.model.n_items, lists)
        out, at = [], 0
        for i in idx:
            width = len(self.units[i][1]) if self.grouped else 1
            if i not in cache:
                cache[i] = sample_excluding(rng, self.model.n_items, lists[at:at + width])
            out.append(cache[i])
            at += width
        return np.concatenate(out, axis=0)

    def scores(self, idx):
        """(E, n_items+1) logits tensor and (E, k) black-box lists for the chosen units."""
        m = self.model
        if self.grouped:
            seqs = [self.units[i][0] for i in idx]
            batch = m.inputs(seqs)
            logits = m.forward_all(batch)
            t = batch.ids.shape[1]
            rows, cols, lists = [], [], []
            for b, i in enumerate(idx):
                seq, labs = self.units[i]
                start = t - len(seq)
                # prefix x[:j] ends at padded column start + j - 1, for j = 2..T
                for j, lab in enumerate(labs, start=2):
                    rows.append(b)
                    cols.append(start + j - 1)
                    lists.append(lab)
            flat = ag.reshape(logits, (logits.shape[0] * t, logits.shape[2]))
            return flat[np.asarray(rows) * t + np.asarray(cols)], np.asarray(lists, dtype=np.int64)
        seqs = [self.units[i][0] for i in idx]
        batch = m.inference_inputs(seqs)
        logits = m.score_from_embeddings(m.embed(batch), batch)
        return logits, np.asarray([self.units[i][1] for i in idx], dtype=np.int64)


def _val_agreement(model, sequences, labels, k=10):
    """Mean Agr@k between the white-box and the recorded black-box list, over held-out prefixes."""
    inputs, targets, _ = expand_subsequences(sequences, labels)
    if not inputs:
        return 0.0
    kk = min(k, len(targets[0]))
    if model.causal:
        per_seq = model.prefix_scores([s for s in sequences if len(s) >= 2])
        sc = np.concatenate([p[1:] for p in per_seq], axis=0)
    else:
        sc = batched_scores(model, inputs)
    mine = top_k(sc, kk)
    return float(np.mean([agreement(list(t[:kk]), list(w), kk) for t, w in zip(targets, mine)]))


def extract(generated, arch, n_items, cfg: DistillConfig, model_kw=None):
    """Train a white-box of architecture ``arch`` on a generated dataset; returns (model, trace)."""
    model = build_model(arch, n_items=n_items, seed=cfg.seed, **(model_kw or {}))
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(generated.sequences))
    n_val = int(round(cfg.val_fraction * len(order))) if len(order) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    tr_seqs = [generated.sequences[i] for i in train_idx]
    tr_labs = [generated.labels[i] for i in train_idx]
    va_seqs = [generated.sequences[i] for i in val_idx]
    va_labs = [generated.labels[i] for i in val_idx]
    data = _Examples(model, tr_seqs, tr_labs)
    if len(data) == 0:
        raise ValueError("no training examples: generated sequences need length >= 2")
    neg_cache = None if cfg.resample_negatives else {}
    neg_rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay, warmup_steps=cfg.warmup_steps)
    per_batch = cfg.batch_size
    if data.grouped:
        # batch_size counts prefix examples; one grouped unit holds T-1 of them
        per_unit = max(1, int(np.mean([len(u[1]) for u in data.units])))
        per_batch = max(1, cfg.batch_size // per_unit)
    trace, best, best_state, stale = [], -1.0, model.state_dict(), 0
    for epoch in range(cfg.epochs):
        model.train()
        perm = rng.permutation(len(data))
        losses = []
        for start in range(0, len(perm), per_batch):
            idx = perm[start:start + per_batch]
            try:
                logits, lists = data.scores(idx)
                neg = data.negatives(idx, lists, neg_rng, neg_cache)
                sw = ag.take_along_last(logits, lists)
                sn = ag.take_along_last(logits, neg)
                loss = distill_loss(sw, sn, cfg.margin_rank, cfg.margin_neg)
                model.zero_grad()
                loss.backward()
            except ag.NumericError as err:
                raise TrainingDiverged(f"extraction epoch {epoch}: {err}") from err
            opt.step()
            losses.append(float(loss.data))
        model.eval()
        val = _val_agreement(model, va_seqs, va_labs) if va_seqs else float("nan")
        trace.append({"epoch": epoch, "loss": float(np.mean(losses)), "val_Agr@10": val})
        log.info("extract epoch %d loss %.4f val Agr@10 %.4f", epoch, trace[-1]["loss"], val)
        if not va_seqs:
            best_state = model.state_dict()
            continue
        if val > best:
            best, best_state, stale = val, model.state_dict(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, trace


def extraction_report(whitebox, reference, split, n_negatives=100, seed=0, ks=(1, 10)):
    """Fidelity and quality of a white-box on the real test split.

    ``reference`` is anything with ``query_batch`` returning black-box lists
    (an in-process oracle or a remote client); its lists must be at least
    max(ks) long.
    """
    inputs = split.test_inputs()
    black = reference.query_batch(inputs)
    sc = batched_scores(whitebox, inputs)
    report = {}
    for k in ks:
        mine = top_k(sc, k)
        report[f"Agr@{k}"] = float(np.mean([agreement(list(b[:k]), list(w), k) for b, w in zip(black, mine)]))
    neg = sample_negatives(whitebox.n_items, split.test, n=n_negatives, seed=seed + 1)
    q = mean_metrics(evaluate_scores(sc, split.test, neg))
    report.update({"N@10": q["N@10"], "R@10": q["R@10"], "N@1": q["N@1"], "R@1": q["R@1"]})
    return report

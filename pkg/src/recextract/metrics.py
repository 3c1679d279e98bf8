"""Ranking metrics, agreement, exposure, popularity buckets and target selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


def ndcg_recall(ranked, positive, k):
    """(NDCG@k, Recall@k) for a single positive within a ranked candidate list."""
    ranked = list(ranked)
    if positive not in ranked:
        raise ValueError(f"positive item {positive} is not among the candidates")
    rank = ranked.index(positive) + 1
    if rank > k:
        return 0.0, 0.0
    return 1.0 / math.log2(rank + 1), 1.0


def agreement(black, white, k):
    """|top-k(black) & top-k(white)| / k; order inside the top-k is irrelevant."""
    if len(black) < k or len(white) < k:
        raise ValueError(f"both lists need at least {k} items")
    if len(set(black)) != len(black) or len(set(white)) != len(white):
        raise ValueError("ranked lists must not contain duplicates")
    return len(set(black[:k]) & set(white[:k])) / k


def top_k(scores, k):
    """Top-k item ids per row (descending score, ties by ascending id); column 0 is skipped."""
    scores = np.atleast_2d(scores)
    order = np.argsort(-scores[:, 1:], axis=1, kind="stable")[:, :k] + 1
    return order


def candidate_ranks(scores, positives, negatives):
    """1-indexed rank of each positive among itself plus its negatives.

    ``scores`` is (U, n_items+1); ties are broken by ascending item id, the
    same convention as the black-box ranking.
    """
    ranks = np.empty(len(positives), dtype=np.int64)
    for u, (pos, neg) in enumerate(zip(positives, negatives)):
        s = scores[u]
        sp = s[pos]
        sn = s[neg]
        ranks[u] = 1 + int(np.sum(sn > sp)) + int(np.sum((sn == sp) & (neg < pos)))
    return ranks


def metrics_from_ranks(ranks, ks=(1, 10)):
    ranks = np.asarray(ranks)
    out = {}
    for k in ks:
        hit = ranks <= k
        out[f"N@{k}"] = np.where(hit, 1.0 / np.log2(ranks + 1.0), 0.0)
        out[f"R@{k}"] = hit.astype(np.float64)
    return out


def sample_negatives(n_items, positives, n=100, seed=0, exclude=None):
    """Uniform negatives per user, without replacement, never containing the positive.

    ``exclude`` optionally adds per-user item collections to avoid (e.g. the
    training history). When fewer than ``n`` items remain, all of them are used.
    """
    rng = np.random.default_rng(seed)
    out = []
    for u, pos in enumerate(positives):
        banned = np.zeros(n_items + 1, dtype=bool)
        banned[0] = True
        banned[np.atleast_1d(pos)] = True
        if exclude is not None:
            banned[np.asarray(list(exclude[u]), dtype=np.int64)] = True
        pool = np.flatnonzero(~banned)
        take = min(n, pool.size)
        out.append(np.sort(rng.choice(pool, size=take, replace=False)))
    return out


def evaluate_scores(scores, positives, negatives, ks=(1, 10)):
    """Per-user N@k / R@k arrays from a full score matrix."""
    return metrics_from_ranks(candidate_ranks(scores, positives, negatives), ks)


def batched_scores(model, seqs, batch_size=256):
    parts = [model.scores(seqs[i:i + batch_size]) for i in range(0, len(seqs), batch_size)]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, model.n_items + 1))


def evaluate_model(model, inputs, positives, negatives, ks=(1, 10), batch_size=256):
    return evaluate_scores(batched_scores(model, inputs, batch_size), positives, negatives, ks)


def mean_metrics(per_user):
    return {k: float(np.mean(v)) if len(v) else 0.0 for k, v in per_user.items()}


def exposure_negatives(n_items, split, target, n=100, seed=0):
    """Per-user negatives for ranking ``target``: exclude the target and the held-out test item."""
    banned = [[split.test[u]] for u in range(split.n_users)]
    return sample_negatives(n_items, [target] * split.n_users, n=n, seed=seed + 7919 * int(target),
                            exclude=banned)


def select_targets(counts, count=25):
    """Every ``floor(|I| / count)``-th item down the popularity ranking, from the most popular.

    ``counts`` is indexed by item id (index 0 ignored). Ties in popularity are
    ordered by ascending item id.
    """
    counts = np.asarray(counts)
    n_items = counts.shape[0] - 1
    if n_items < count:
        raise ValueError(f"need at least {count} items, have {n_items}")
    ranking = popularity_ranking(counts)
    stride = n_items // count
    return [int(ranking[r]) for r in range(0, stride * count, stride)]


def popularity_ranking(counts):
    counts = np.asarray(counts)
    ids = np.arange(1, counts.shape[0])
    return ids[np.lexsort((ids, -counts[1:]))]


@dataclass
class PopularityBuckets:
    head: list
    middle: list
    tail: list

    def bucket_of(self, item):
        for name in ("head", "middle", "tail"):
            if item in getattr(self, name):
                return name
        raise KeyError(item)


def bucket_popularity(train_counts) -> PopularityBuckets:
    """Head = top 20% of items by training frequency, tail = bottom 20%, middle = the rest."""
    ranking = popularity_ranking(train_counts)
    n = len(ranking)
    cut = int(round(0.2 * n))
    return PopularityBuckets([int(i) for i in ranking[:cut]],
                             [int(i) for i in ranking[cut:n - cut]],
                             [int(i) for i in ranking[n - cut:]])


def write_report(path, metrics: dict, header: dict | None = None):
    """Structured text: one ``name<TAB>value`` line per metric, sorted by name."""
    lines = []
    for k, v in sorted((header or {}).items()):
        lines.append(f"# {k}\t{v}")
    for k in sorted(metrics):
        v = metrics[k]
        lines.append(f"{k}\t{_fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        k, v = line.split("\t", 1)
        try:
            out[k] = float(v)
        except ValueError:
            out[k] = v
    return out


def write_table(path, rows, columns=None, delimiter=","):
    """Delimited table for plotting; ``rows`` is a list of dicts."""
    columns = columns or sorted({k for r in rows for k in r})
    with Path(path).open("w") as fh:
        fh.write(delimiter.join(columns) + "\n")
        for r in rows:
            fh.write(delimiter.join(_fmt(r.get(c, "")) for c in columns) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)

"""Interaction-log ingestion, k-core filtering, leave-last-two splits and the toy benchmark.

Processed datasets live in a directory::

    meta.json       n_users, n_items, max_len, drop counts
    sequences.txt   one user per line: ``user_id<TAB>i1,i2,...`` (chronological)
    items.tsv       ``item_id<TAB>raw_id``
    users.tsv       ``user_id<TAB>raw_id``

Item ids are 1..n_items; 0 is reserved for padding.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PAD = 0


class SchemaError(ValueError):
    pass


class EmptyDatasetError(ValueError):
    pass


@dataclass
class InteractionLog:
    users: list
    items: list
    timestamps: list
    ratings: list | None = None

    def __len__(self):
        return len(self.users)

    def subset(self, keep):
        pick = lambda xs: [x for x, k in zip(xs, keep) if k]  # noqa: E731
        return InteractionLog(
            pick(self.users), pick(self.items), pick(self.timestamps),
            pick(self.ratings) if self.ratings is not None else None,
        )


@dataclass
class SequenceDataset:
    sequences: list  # index = user id, each a chronological list of item ids
    n_items: int
    max_len: int = 50
    user_raw: list = field(default_factory=list)
    item_raw: list = field(default_factory=list)  # index i -> raw id of item i (index 0 unused)
    dropped_users: int = 0

    @property
    def n_users(self):
        return len(self.sequences)

    def item_counts(self):
        counts = np.zeros(self.n_items + 1, dtype=np.int64)
        for seq in self.sequences:
            np.add.at(counts, np.asarray(seq, dtype=np.int64), 1)
        return counts


@dataclass
class SplitDataset:
    train: list
    val: list
    test: list
    n_items: int
    max_len: int = 50

    @property
    def n_users(self):
        return len(self.train)

    def val_inputs(self):
        return self.train

    def test_inputs(self):
        return [tr + [v] for tr, v in zip(self.train, self.val)]

    def full(self, u):
        return self.train[u] + [self.val[u], self.test[u]]

    def train_item_counts(self):
        counts = np.zeros(self.n_items + 1, dtype=np.int64)
        for seq in self.train:
            np.add.at(counts, np.asarray(seq, dtype=np.int64), 1)
        return counts

    def item_counts(self):
        counts = self.train_item_counts()
        np.add.at(counts, np.asarray(self.val, dtype=np.int64), 1)
        np.add.at(counts, np.asarray(self.test, dtype=np.int64), 1)
        return counts


def load_csv(path, user_col="user_id", item_col="item_id", time_col="timestamp",
             rating_col=None, delimiter=",", names=None):
    """Read a delimited interaction file.

    The first line is the header unless ``names`` supplies the column names
    (for headerless files such as the raw MovieLens ``ratings.dat`` with
    ``delimiter="::"``). Every row must parse; errors carry the line number.
    """
    path = Path(path)
    users, items, stamps, ratings = [], [], [], [] if rating_col else None
    with path.open(encoding="utf-8") as fh:
        header = names
        start = 1
        if header is None:
            first = fh.readline()
            header = [c.strip() for c in first.rstrip("\r\n").split(delimiter)]
            start = 2
        header = list(header)
        wanted = [user_col, item_col, time_col] + ([rating_col] if rating_col else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        ui, ii, ti = header.index(user_col), header.index(item_col), header.index(time_col)
        ri = header.index(rating_col) if rating_col else None
        for lineno, line in enumerate(fh, start=start):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split(delimiter)
            if len(parts) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(parts)}")
            try:
                stamp = float(parts[ti])
                rating = float(parts[ri]) if ri is not None else None
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: unparseable row {line!r}") from None
            users.append(parts[ui].strip())
            items.append(parts[ii].strip())
            stamps.append(stamp)
            if ratings is not None:
                ratings.append(rating)
    return InteractionLog(users, items, stamps, ratings)


def kcore_filter(interactions: InteractionLog, k: int) -> InteractionLog:
    """Drop users, then items, with fewer than ``k`` interactions until both passes are stable."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cur = interactions
    while True:
        uc = Counter(cur.users)
        after_users = cur.subset([uc[u] >= k for u in cur.users])
        ic = Counter(after_users.items)
        after_items = after_users.subset([ic[i] >= k for i in after_users.items])
        if len(after_items) == 0:
            raise EmptyDatasetError(f"{k}-core filtering removed every interaction")
        if len(after_items) == len(cur):
            return after_items
        cur = after_items


def _sort_key(raw):
    try:
        return (0, float(raw), str(raw))
    except (TypeError, ValueError):
        return (1, 0.0, str(raw))


def build_sequences(interactions: InteractionLog, max_len=50, min_len=3) -> SequenceDataset:
    """Remap ids densely and order each user's items by timestamp.

    Users are numbered 0..U-1 and items 1..|I| in ascending raw-id order.
    Every interaction is kept regardless of rating. Users with fewer than
    ``min_len`` interactions are dropped and counted.
    """
    if len(interactions) == 0:
        raise EmptyDatasetError("no interactions")
    per_user = {}
    for pos, (u, i, t) in enumerate(zip(interactions.users, interactions.items, interactions.timestamps)):
        per_user.setdefault(u, []).append((t, pos, i))
    kept = {u: ev for u, ev in per_user.items() if len(ev) >= min_len}
    dropped = len(per_user) - len(kept)
    if dropped:
        log.warning("dropping %d users with fewer than %d interactions", dropped, min_len)
    if not kept:
        raise EmptyDatasetError("no user has enough interactions")
    item_raw = sorted({i for ev in kept.values() for _, _, i in ev}, key=_sort_key)
    item_id = {raw: n for n, raw in enumerate(item_raw, start=1)}
    user_raw = sorted(kept, key=_sort_key)
    sequences = [[item_id[i] for _, _, i in sorted(kept[u])] for u in user_raw]
    return SequenceDataset(sequences, len(item_raw), max_len, user_raw, [None] + item_raw, dropped)


def split_leave_two(dataset: SequenceDataset) -> SplitDataset:
    """train = x[:-2], val = x[-2], test = x[-1]; users shorter than 3 are skipped."""
    train, val, test = [], [], []
    short = 0
    for seq in dataset.sequences:
        if len(seq) < 3:
            short += 1
            continue
        train.append(list(seq[:-2]))
        val.append(seq[-2])
        test.append(seq[-1])
    if short:
        log.warning("split skipped %d users shorter than 3 items", short)
    return SplitDataset(train, val, test, dataset.n_items, dataset.max_len)


def save_dataset(dataset: SequenceDataset, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"n_users": dataset.n_users, "n_items": dataset.n_items, "max_len": dataset.max_len,
            "dropped_users": dataset.dropped_users}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_sequences(out / "sequences.txt", dataset.sequences)
    users = dataset.user_raw or list(range(dataset.n_users))
    (out / "users.tsv").write_text("".join(f"{n}\t{raw}\n" for n, raw in enumerate(users)))
    items = dataset.item_raw[1:] if dataset.item_raw else list(range(1, dataset.n_items + 1))
    (out / "items.tsv").write_text("".join(f"{n}\t{raw}\n" for n, raw in enumerate(items, start=1)))


def load_dataset(path) -> SequenceDataset:
    path = Path(path)
    meta_file = path / "meta.json"
    if not meta_file.exists():
        raise FileNotFoundError(f"{path} is not a processed dataset (run `recextract ingest` first)")
    meta = json.loads(meta_file.read_text())
    seqs = read_sequences(path / "sequences.txt")
    return SequenceDataset(seqs, meta["n_items"], meta["max_len"], dropped_users=meta.get("dropped_users", 0))


def write_sequences(path, sequences):
    with Path(path).open("w") as fh:
        for u, seq in enumerate(sequences):
            fh.write(f"{u}\t{','.join(map(str, seq))}\n")


def read_sequences(path):
    seqs = []
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                uid, items = line.split("\t")
                seq = [int(i) for i in items.split(",")] if items else []
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: malformed sequence line") from None
            if int(uid) != len(seqs):
                raise SchemaError(f"{path}:{lineno}: user ids must be consecutive from 0")
            seqs.append(seq)
    return seqs


def make_toy_dataset(n_users=200, n_items=50, seed=0, min_len=12, max_len_seq=30, max_len=20,
                     n_clusters=5, n_successors=3, follow_prob=0.6, home_prob=0.8, zipf=1.1) -> SequenceDataset:
    """Synthetic benchmark with planted sequential and long-range structure.

    Items are split into ``n_clusters`` equal groups and every user has a home
    group. Each item has ``n_successors`` preferred next items inside its own
    group; a user follows one with probability ``follow_prob``, otherwise jumps
    to a popularity-weighted (Zipf) item, from the home group with probability
    ``home_prob``. The next item thus depends on the last item and on the
    history (which reveals the home group).
    """
    rng = np.random.default_rng(seed)
    pop = 1.0 / np.arange(1, n_items + 1) ** zipf
    pop = pop[rng.permutation(n_items)]
    pop /= pop.sum()
    group = np.arange(n_items) % n_clusters
    members = [np.flatnonzero(group == g) for g in range(n_clusters)]
    in_group = [pop[m] / pop[m].sum() for m in members]
    succ = np.stack([rng.choice(members[group[i]], size=n_successors, replace=False, p=in_group[group[i]])
                     for i in range(n_items)])
    succ_w = np.linspace(2.0, 1.0, n_successors)
    succ_w /= succ_w.sum()
    sequences = []
    for _ in range(n_users):
        home = int(rng.integers(n_clusters))
        length = int(rng.integers(min_len, max_len_seq + 1))
        cur = int(rng.choice(members[home], p=in_group[home]))
        seq = [cur]
        while len(seq) < length:
            r = rng.random()
            if r < follow_prob:
                cur = int(succ[cur][rng.choice(n_successors, p=succ_w)])
            elif rng.random() < home_prob:
                cur = int(rng.choice(members[home], p=in_group[home]))
            else:
                cur = int(rng.choice(n_items, p=pop))
            seq.append(cur)
        sequences.append([i + 1 for i in seq])
    return SequenceDataset(sequences, n_items, max_len, list(range(n_users)), [None] + list(range(1, n_items + 1)))

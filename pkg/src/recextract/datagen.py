"""Data-free query generation: synthetic sequences plus the oracle's per-prefix top-k labels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SchemaError, read_sequences, write_sequences

RANDOM = "random"
AUTOREGRESSIVE = "autoregressive"


class UniformSampler:
    """Pick uniformly among the returned top-k items."""

    name = "uniform"

    def __init__(self, rng):
        self.rng = rng

    def __call__(self, topk):
        if not topk:
            raise ValueError("empty ranked list")
        return int(topk[self.rng.integers(len(topk))])


class GeometricSampler:
    """Rank r (1-indexed) is drawn with probability proportional to decay**(r-1)."""

    name = "geometric"

    def __init__(self, rng, decay=0.95):
        if not 0 < decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        self.rng = rng
        self.decay = decay

    def __call__(self, topk):
        if not topk:
            raise ValueError("empty ranked list")
        w = self.decay ** np.arange(len(topk))
        return int(topk[self.rng.choice(len(topk), p=w / w.sum())])


SAMPLERS = {"uniform": UniformSampler, "geometric": GeometricSampler}


def make_sampler(name, rng, **kw):
    try:
        return SAMPLERS[name](rng, **kw)
    except KeyError:
        raise ValueError(f"unknown sampler {name!r}") from None


@dataclass
class GeneratedDataset:
    """Query sequences and ``labels[b][t-1]`` = the black-box top-k after prefix ``sequences[b][:t]``."""

    sequences: list
    labels: list
    generator: str
    sampler: str = ""
    length_policy: str = "fixed"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sequences)

    def save(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sequences(out / "sequences.txt", self.sequences)
        with (out / "labels.txt").open("w") as fh:
            for b, per_seq in enumerate(self.labels):
                for t, top in enumerate(per_seq, start=1):
                    fh.write(f"{b}\t{t}\t{','.join(map(str, top))}\n")
        info = {"generator": self.generator, "sampler": self.sampler,
                "length_policy": self.length_policy, **self.meta}
        (out / "generated.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        seqs = read_sequences(path / "sequences.txt")
        labels = [[] for _ in seqs]
        with (path / "labels.txt").open() as fh:
            for lineno, line in enumerate(fh, start=1):
                try:
                    b, t, items = line.rstrip("\n").split("\t")
                    b, t = int(b), int(t)
                    top = [int(i) for i in items.split(",")]
                except ValueError:
                    raise SchemaError(f"{path}/labels.txt:{lineno}: malformed label line") from None
                if t != len(labels[b]) + 1:
                    raise SchemaError(f"{path}/labels.txt:{lineno}: prefix lengths out of order")
                labels[b].append(top)
        for b, (s, lab) in enumerate(zip(seqs, labels)):
            if len(s) != len(lab):
                raise SchemaError(f"{path}: sequence {b} has {len(s)} items but {len(lab)} label lists")
        info = json.loads((path / "generated.json").read_text())
        gen, samp, pol = info.pop("generator"), info.pop("sampler"), info.pop("length_policy")
        return cls(seqs, labels, gen, samp, pol, info)


def _lengths(budget, length, policy, rng):
    if policy == "fixed":
        return [length] * budget
    if policy == "uniform":
        return [int(v) for v in rng.integers(min(5, length), length + 1, size=budget)]
    raise ValueError(f"unknown length policy {policy!r}")


def _session(oracle):
    # in-process oracles hand out sessions; a remote client already is one (its connection)
    return oracle.session() if hasattr(oracle, "session") else oracle


def generate_random(oracle, budget, length, seed=0, length_policy="fixed"):
    """``budget`` uniform-random sequences, labelled with one prefix trace each."""
    rng = np.random.default_rng(seed)
    lens = _lengths(budget, length, length_policy, rng)
    seqs = [[int(i) for i in rng.integers(1, oracle.n_items + 1, size=n)] for n in lens]
    labels = _session(oracle).trace_batch(seqs) if seqs else []
    return GeneratedDataset(seqs, labels, RANDOM, "", length_policy, {"seed": seed, "length": length})


def generate_autoregressive(oracle, budget, length, sampler="uniform", seed=0, length_policy="fixed",
                            **sampler_kw):
    """Grow ``budget`` sequences from random start items, each next item sampled from the current top-k.

    All sequences advance in lockstep so each step is one batched query.
    """
    rng = np.random.default_rng(seed)
    lens = _lengths(budget, length, length_policy, rng)
    draw = make_sampler(sampler, rng, **sampler_kw) if isinstance(sampler, str) else sampler
    seqs = [[int(rng.integers(1, oracle.n_items + 1))] for _ in lens]
    labels = [[] for _ in lens]
    session = _session(oracle)
    for step in range(1, max(lens, default=0) + 1):
        active = [b for b, n in enumerate(lens) if n >= step]
        tops = session.query_batch([seqs[b] for b in active])
        for b, top in zip(active, tops):
            labels[b].append(top)
            if step < lens[b]:
                seqs[b].append(draw(top))
    return GeneratedDataset(seqs, labels, AUTOREGRESSIVE, getattr(draw, "name", "custom"), length_policy,
                            {"seed": seed, "length": length})


def generate(oracle, method, budget, length, seed=0, sampler="uniform", length_policy="fixed"):
    if method == RANDOM:
        return generate_random(oracle, budget, length, seed, length_policy)
    if method == AUTOREGRESSIVE:
        return generate_autoregressive(oracle, budget, length, sampler, seed, length_policy)
    raise ValueError(f"unknown generator {method!r}")

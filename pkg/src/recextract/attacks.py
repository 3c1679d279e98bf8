"""Promotion attacks crafted on a white-box recommender: profile pollution and data poisoning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .metrics import evaluate_scores, batched_scores, exposure_negatives, mean_metrics


@dataclass
class AttackSpec:
    target: int
    n_append: int = 2
    eps: float = 1.0
    n_candidates: int = 10

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be > 0")
        if self.n_candidates < 1:
            raise ValueError("n_candidates must be >= 1")


@dataclass
class PollutedProfile:
    original: list
    polluted: list

    @property
    def injected(self):
        return self.polluted[len(self.original):]

    @property
    def positions(self):
        return list(range(len(self.original), len(self.polluted)))


@dataclass
class PoisonProfileSet:
    profiles: list
    targets: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.profiles)


def poison_count(n_users, fraction=0.01):
    """Number of fake profiles: ``floor(fraction * n_users)``."""
    return int(math.floor(fraction * n_users + 1e-9))


def _unit(x):
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), 1e-12)


def perturbed_similarity(model, seqs, labels, eps):
    """Cosine similarity of the last real position's T-FGSM-perturbed vector to every item (B, n_items+1).

    The perturbed vector is ``e - eps * sign(grad)`` where ``grad`` is the
    gradient of next-item cross-entropy (label ``labels``) w.r.t. the input
    embeddings. Positional terms are removed before comparing with the item
    table so like is compared with like. Column 0 (padding) is -inf.
    """
    model.eval()
    batch = model.inference_inputs(seqs)
    with ag.no_grad():
        emb = model.embed(batch).data
    leaf = ag.Tensor(emb, requires_grad=True)
    loss = ag.cross_entropy(model.score_from_embeddings(leaf, batch), np.asarray(labels, dtype=np.int64))
    loss.backward()
    model.zero_grad()
    row = -1 - model.suffix_tokens
    vec = emb[:, row] - eps * np.sign(leaf.grad[:, row])
    if "embedding.positions" in model.params:
        vec = vec - model.p("embedding.positions").data[batch.pos[:, row]]
    table = model.p("embedding.items").data[1:model.n_items + 1]
    sim = _unit(vec) @ _unit(table).T
    out = np.full((len(seqs), model.n_items + 1), -np.inf)
    out[:, 1:] = sim
    return out


def _ranked(sim, n, lowest=False):
    """Top-n item ids by similarity (descending, or ascending for ``lowest``), ties by ascending id."""
    key = sim[:, 1:] if lowest else -sim[:, 1:]
    return np.argsort(key, axis=1, kind="stable")[:, :n] + 1


def pollute_batch(whitebox, seqs, spec: AttackSpec):
    """Append ``spec.n_append`` adversarial items to each sequence (one greedy choice per step)."""
    t = spec.target
    if not 1 <= t <= whitebox.n_items:
        raise ValueError(f"target {t} outside 1..{whitebox.n_items}")
    z = [list(s) for s in seqs]
    for _ in range(spec.n_append):
        trial = [s + [t] for s in z]
        sim = perturbed_similarity(whitebox, trial, [t] * len(z), spec.eps)
        for b, s in enumerate(z):
            if s and s[-1] == t:
                sim[b, t] = -np.inf
        if np.all(np.isneginf(sim[:, 1:]), axis=1).any():
            raise ValueError("no admissible candidate besides the target")
        n = min(spec.n_candidates, whitebox.n_items)
        cands = _ranked(sim, n)
        flat = [z[b] + [int(c)] for b in range(len(z)) for c in cands[b] if np.isfinite(sim[b, c])]
        owner = [b for b in range(len(z)) for c in cands[b] if np.isfinite(sim[b, c])]
        scores = batched_scores(whitebox, flat)[:, t]
        best = {}
        for j, b in enumerate(owner):
            if b not in best or scores[j] > scores[best[b]]:
                best[b] = j
        z = [flat[best[b]] for b in range(len(z))]
    return [PollutedProfile(list(x), s) for x, s in zip(seqs, z)]


def pollute(whitebox, seq, spec: AttackSpec):
    return pollute_batch(whitebox, [seq], spec)[0]


def filler_candidates(whitebox, seqs, labels, placeholders, eps, n):
    """For each ``seq + [placeholder]``, the ``n`` items least similar to the perturbed placeholder vector.

    The filler sits between two targets, so the preceding item and the label
    are never candidates.
    """
    trial = [list(s) + [p] for s, p in zip(seqs, placeholders)]
    sim = perturbed_similarity(whitebox, trial, labels, eps)
    sim[:, 0] = np.inf
    for b, s in enumerate(seqs):
        sim[b, s[-1]] = np.inf
        sim[b, labels[b]] = np.inf
    cands = _ranked(sim, min(n, whitebox.n_items), lowest=True)
    out = []
    for b in range(len(seqs)):
        ok = [int(c) for c in cands[b] if np.isfinite(sim[b, c])]
        if not ok:
            raise ValueError("no admissible filler item")
        out.append(ok)
    return out


def poison_generate(whitebox, targets, n_profiles, length, eps=1.0, n_candidates=10, seed=0):
    """Fake profiles alternating a target with a filler the white-box finds least similar.

    Each profile starts with a target; every iteration appends a random
    placeholder, replaces it by a sample from the ``n_candidates`` lowest-cosine
    items, then appends a target. With several targets the target is redrawn
    uniformly at every iteration. Profiles are cut to exactly ``length``.
    """
    targets = [int(x) for x in np.atleast_1d(targets)]
    if length < 1:
        raise ValueError("profile length must be >= 1")
    rng = np.random.default_rng(seed)
    n_items = whitebox.n_items
    pick = lambda: targets[int(rng.integers(len(targets)))]  # noqa: E731
    z = [[pick()] for _ in range(n_profiles)]
    while z and len(z[0]) < length:
        label = [pick() for _ in z]
        placeholder = [int(rng.integers(1, n_items + 1)) for _ in z]
        for b, cands in enumerate(filler_candidates(whitebox, z, label, placeholder, eps, n_candidates)):
            z[b].append(cands[int(rng.integers(len(cands)))])
            z[b].append(label[b])
    profiles = [s[:length] for s in z]
    return PoisonProfileSet(profiles, targets, {"eps": eps, "n_candidates": n_candidates, "seed": seed})


def randalter(targets, n_items, length, rng):
    """[r, t, r, t, ...]: uniform random non-target fillers at odd positions, targets at even (1-indexed)."""
    targets = [int(x) for x in np.atleast_1d(targets)]
    fillers = np.setdiff1d(np.arange(1, n_items + 1), targets)
    out = []
    for pos in range(1, length + 1):
        if pos % 2 == 0:
            out.append(targets[int(rng.integers(len(targets)))])
        else:
            out.append(int(fillers[rng.integers(len(fillers))]))
    return out


def similar_items(whitebox, target, count):
    """Items closest to ``target`` by cosine of white-box item embeddings (target excluded)."""
    table = _unit(whitebox.p("embedding.items").data[:whitebox.n_items + 1])
    sim = table @ table[target]
    sim[0] = -np.inf
    sim[target] = -np.inf
    order = np.argsort(-sim[1:], kind="stable") + 1
    return [int(i) for i in order[:count]]


def simalter(whitebox, target, length):
    """[s1, t, s2, t, ...] with s_i the nearest white-box neighbours of ``target`` in order."""
    n_fill = (length + 1) // 2
    fill = similar_items(whitebox, target, n_fill)
    out, it = [], iter(fill)
    for pos in range(1, length + 1):
        out.append(target if pos % 2 == 0 else next(it))
    return out


# ---------------------------------------------------------------- measurement


def exposure(model_or_scores, inputs, target, negatives, ks=(10,)):
    """Mean N@k / R@k of ``target`` for each input sequence, ranked against per-user negatives."""
    sc = model_or_scores if isinstance(model_or_scores, np.ndarray) else batched_scores(model_or_scores, inputs)
    return mean_metrics(evaluate_scores(sc, [target] * len(inputs), negatives, ks))


def pollution_experiment(victim, whitebox, split, targets, n_append, eps=1.0, n_candidates=10, seed=0,
                         users=None, n_negatives=100):
    """Per-target exposure on the victim: before attack, after white-box pollution, after RandAlter.

    Returns a list of dicts, one per target. Inputs are each user's test-time
    history (train + validation item); the victim is only read.
    """
    users = list(range(split.n_users)) if users is None else list(users)
    base = split.test_inputs()
    inputs = [base[u] for u in users]
    rows = []
    for target in targets:
        neg_all = exposure_negatives(split.n_items, split, target, n=n_negatives, seed=seed)
        neg = [neg_all[u] for u in users]
        before = exposure(victim, inputs, target, neg)
        spec = AttackSpec(target, n_append, eps, n_candidates)
        polluted = [p.polluted for p in pollute_batch(whitebox, inputs, spec)]
        after = exposure(victim, polluted, target, neg)
        rng = np.random.default_rng([seed, target])
        rand = [s + randalter(target, split.n_items, n_append, rng) for s in inputs]
        rand_m = exposure(victim, rand, target, neg)
        sim_suffix = simalter(whitebox, target, n_append)
        sim_m = exposure(victim, [s + sim_suffix for s in inputs], target, neg)
        rows.append({"target": target,
                     "before_N@10": before["N@10"], "before_R@10": before["R@10"],
                     "attack_N@10": after["N@10"], "attack_R@10": after["R@10"],
                     "randalter_N@10": rand_m["N@10"], "randalter_R@10": rand_m["R@10"],
                     "simalter_N@10": sim_m["N@10"], "simalter_R@10": sim_m["R@10"]})
    return rows


def poisoned_split(split, profiles):
    """A copy of ``split`` whose training data also contains the fake profiles (as full training sequences).

    Fake users only contribute training sequences; evaluation stays on the
    real users, who keep indices 0..n_users-1.
    """
    from .data import SplitDataset

    train = list(split.train) + [list(p) for p in profiles]
    return SplitDataset(train, list(split.val), list(split.test), split.n_items, split.max_len)

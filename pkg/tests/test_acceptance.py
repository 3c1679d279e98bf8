"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The toy-benchmark criteria (4-7) share one set of victims and extractions,
built with the bundled ``toy`` preset for seeds 0, 1, 2. Expect about
8 minutes on one CPU core. Criterion 10 runs only when real datasets are
available (see README).
"""
import json
import math
import os
import threading
import time
from functools import lru_cache

import numpy as np
import pytest

from recextract import autograd as ag
from recextract import config as C
from recextract.attacks import exposure, poison_count, poison_generate, poisoned_split, pollution_experiment
from recextract.cli import main
from recextract.data import make_toy_dataset, split_leave_two
from recextract.datagen import generate
from recextract.distill import distill_loss, extract, extraction_report
from recextract.gradcheck import check_grads, directional_check
from recextract.metrics import (agreement, candidate_ranks, exposure_negatives, metrics_from_ranks,
                                ndcg_recall, select_targets)
from recextract.models import build_model
from recextract.models.train import train_victim
from recextract.oracle import Oracle, OracleServer, RemoteOracle, send_raw

from test_autograd import CASES
from test_models import _gradcheck_model, _random_seqs

SEEDS = (0, 1, 2)
ARCHS = ("narm", "sasrec", "bert4rec")


# ---------------------------------------------------------------- 1-3: exact oracles


def test_criterion_1_gradients(record):
    t0 = time.time()
    worst_op = 0.0
    for case in CASES:
        for seed in range(20):
            with ag.precision(np.float64):
                tensors, fn = case(np.random.default_rng(seed))
                worst_op = max(worst_op, check_grads(fn, tensors))
    worst_model = 0.0
    for arch in ARCHS:
        for seed in range(20):
            rng = np.random.default_rng(seed)
            m = _gradcheck_model(arch, seed)  # d=8, 2 layers (NARM: its single GRU layer), float64
            seqs = _random_seqs(rng, 12, 3, lo=2, hi=6)
            loss = lambda: m.training_loss(seqs, np.random.default_rng(seed))  # noqa: E731
            worst_model = max(worst_model, directional_check(loss, list(m.params.values()), rng, h=1e-5, floor=1e-4))
    took = time.time() - t0
    ok = worst_op < 1e-5 and worst_model < 1e-5 and took < 60
    record(1, ok, f"{len(CASES)} ops x 20 seeds max rel err {worst_op:.2e}; 3 models x 20 seeds "
                  f"max rel err {worst_model:.2e}; {took:.1f}s (< 1e-5, < 60s)")
    assert ok


def _brute_ndcg_recall(candidates, scores, positive, k):
    # sort the candidate set by score, ties by id, and read off the position
    order = sorted(candidates, key=lambda i: (-scores[i], i))
    rank = order.index(positive) + 1
    return (1.0 / math.log2(rank + 1), 1.0) if rank <= k else (0.0, 0.0)


def test_criterion_2_metric_oracles(record):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        n_items = int(rng.integers(5, 200))
        n_neg = int(rng.integers(1, min(100, n_items - 1) + 1))
        k = int(rng.integers(1, 21))
        scores = rng.integers(-5, 6, size=n_items + 1).astype(float)  # coarse values force ties
        pos = int(rng.integers(1, n_items + 1))
        negs = rng.choice(np.setdiff1d(np.arange(1, n_items + 1), [pos]), n_neg, replace=False)
        want_n, want_r = _brute_ndcg_recall([pos, *negs.tolist()], scores, pos, k)
        rank = candidate_ranks(scores[None], [pos], [np.sort(negs)])[0]
        got = metrics_from_ranks(np.array([rank]), ks=(k,))
        ranked = sorted([pos, *negs.tolist()], key=lambda i: (-scores[i], i))
        n2, r2 = ndcg_recall(ranked, pos, k)
        worst = max(worst, abs(got[f"N@{k}"][0] - want_n), abs(got[f"R@{k}"][0] - want_r),
                    abs(n2 - want_n), abs(r2 - want_r))
        a = rng.choice(np.arange(1, n_items + 1), min(k, n_items), replace=False).tolist()
        b = rng.choice(np.arange(1, n_items + 1), min(k, n_items), replace=False).tolist()
        kk = len(a)
        shared = sum(1 for x in a for y in b if x == y)
        worst = max(worst, abs(agreement(a, b, kk) - shared / kk))
    ok = worst <= 1e-9
    record(2, ok, f"N@K, R@K, Agr@K vs brute force on 1000 configurations, max abs diff {worst:.1e} (<= 1e-9)")
    assert ok


def _hand_loss(sw, sn, l1, l2):
    k = len(sw)
    return (sum(max(0.0, sw[i + 1] - sw[i] + l1) for i in range(k - 1)) / (k - 1)
            + sum(max(0.0, sn[i] - sw[i] + l2) for i in range(k)) / k)


def test_criterion_3_distillation_loss(record):
    rng = np.random.default_rng(3)
    worst = 0.0
    zero_ok = True
    for _ in range(100):
        k = int(rng.integers(2, 20))
        sw, sn = rng.standard_normal(k), rng.standard_normal(k)
        l1, l2 = rng.uniform(0, 2, size=2)
        with ag.precision(np.float64):
            got = float(distill_loss(ag.Tensor(sw), ag.Tensor(sn), l1, l2).data)
        worst = max(worst, abs(got - _hand_loss(sw, sn, l1, l2)))
        # zero iff every ranking and negative margin holds; check on a satisfying construction too
        sat = np.arange(k, 0, -1) * (l1 + 0.1)
        with ag.precision(np.float64):
            z = float(distill_loss(ag.Tensor(sat), ag.Tensor(sat - l2 - 0.01), l1, l2).data)
            nz = float(distill_loss(ag.Tensor(sat), ag.Tensor(sat - l2 + 0.01), l1, l2).data)
        satisfied = all(sw[i] - sw[i + 1] >= l1 for i in range(k - 1)) and all(sw - sn >= l2)
        zero_ok &= z == 0.0 and nz > 0 and ((got == 0) == satisfied)
    ok = worst < 1e-6 and zero_ok
    record(3, ok, f"ranking loss vs hand evaluation on 100 instances, max abs diff {worst:.1e} (< 1e-6); "
                  f"zero-loss characterization {'holds' if zero_ok else 'violated'}")
    assert ok


# ---------------------------------------------------------------- 4-7: toy benchmark


def _toy_cfg(seed):
    return C.load_config(preset="toy", overrides=[f"seed={seed}"])


@lru_cache(maxsize=None)
def _split():
    cfg = _toy_cfg(0)
    toy = cfg["dataset"]["toy"]
    return split_leave_two(make_toy_dataset(n_users=toy["n_users"], n_items=toy["n_items"], seed=toy["seed"],
                                            max_len=cfg["dataset"]["max_len"]))


@lru_cache(maxsize=None)
def _victim(seed):
    cfg, split = _toy_cfg(seed), _split()
    m = build_model(cfg["victim"]["arch"], **C.victim_hparams(cfg, split.n_items, cfg["dataset"]["max_len"]))
    train_victim(m, split, C.train_config(cfg))
    return m


@lru_cache(maxsize=None)
def _extraction(seed, method, budget):
    cfg, split, victim = _toy_cfg(seed), _split(), _victim(seed)
    t0 = time.time()
    k = cfg["oracle"]["topk"]
    gen = generate(Oracle(victim, k=k, budget=budget), method, budget, cfg["generate"]["length"], seed=seed)
    wb, _ = extract(gen, C.whitebox_arch(cfg), split.n_items, C.distill_config(cfg),
                    C.whitebox_hparams(cfg, cfg["dataset"]["max_len"]))
    report = extraction_report(wb, Oracle(victim, k=k), split, seed=seed)
    return wb, report, time.time() - t0


def test_criterion_4_extraction_works(record):
    t0 = time.time()  # includes victim training when this test runs first
    rows = {(s, m): _extraction(s, m, 1000) for s in SEEDS for m in ("autoregressive", "random")}
    agr = {key: r[1]["Agr@10"] for key, r in rows.items()}
    ar = np.mean([agr[(s, "autoregressive")] for s in SEEDS])
    rnd = np.mean([agr[(s, "random")] for s in SEEDS])
    took = time.time() - t0
    floor = 10 / 50 + 0.15
    ok = min(agr.values()) >= floor and ar > rnd and took < 15 * 60
    record(4, ok, f"B=1000, 3 seeds: autoregressive Agr@10 {ar:.3f} vs random {rnd:.3f}; "
                  f"lowest single run {min(agr.values()):.3f} (>= {floor:.2f}); {took:.0f}s (< 900s)")
    assert ok


def test_criterion_5_budget_monotonic(record):
    means = [np.mean([_extraction(s, "autoregressive", b)[1]["Agr@10"] for s in SEEDS]) for b in (200, 1000, 5000)]
    drops = [a - b for a, b in zip(means, means[1:]) if b < a]
    ok = len(drops) <= 1 and all(d <= 0.02 for d in drops)
    record(5, ok, "mean Agr@10 at B=200/1000/5000: " + " / ".join(f"{m:.3f}" for m in means)
           + f" ({len(drops)} inversion(s), allowed one <= 0.02)")
    assert ok


def test_criterion_6_pollution_transfer(record):
    split = _split()
    targets = select_targets(split.train_item_counts(), 25)
    rows = []
    for s in SEEDS:
        a = _toy_cfg(s)["attack"]
        wb = _extraction(s, "autoregressive", 1000)[0]
        rows += pollution_experiment(_victim(s), wb, split, targets, a["n_append"], a["eps"], a["n_candidates"],
                                     seed=s)
    m = {k: np.mean([r[k] for r in rows]) for k in ("before_N@10", "attack_N@10", "randalter_N@10", "simalter_N@10")}
    ok = m["attack_N@10"] > m["before_N@10"] and m["attack_N@10"] > m["randalter_N@10"]
    record(6, ok, f"mean target N@10 over 3 seeds x 25 targets: before {m['before_N@10']:.4f}, "
                  f"white-box attack {m['attack_N@10']:.4f}, RandAlter {m['randalter_N@10']:.4f} "
                  f"(SimAlter {m['simalter_N@10']:.4f})")
    assert ok


def test_criterion_7_poisoning_lift(record):
    split = _split()
    targets = select_targets(split.train_item_counts(), 25)
    inputs = split.test_inputs()
    pairs = []
    for s in SEEDS:
        cfg, a = _toy_cfg(s), _toy_cfg(s)["attack"]
        wb = _extraction(s, "autoregressive", 1000)[0]
        n_fake = poison_count(split.n_users, a["poison_fraction"])
        profiles = poison_generate(wb, targets, n_fake, a["profile_length"], a["eps"], a["n_candidates"], seed=s)
        poisoned = build_model(cfg["victim"]["arch"], **C.victim_hparams(cfg, split.n_items, cfg["dataset"]["max_len"]))
        train_victim(poisoned, poisoned_split(split, profiles.profiles), C.train_config(cfg))
        # the clean retrain with this seed is exactly the victim already trained for it
        clean = _victim(s)
        negs = {t: exposure_negatives(split.n_items, split, t, seed=s) for t in targets}
        before = np.mean([exposure(clean, inputs, t, negs[t])["N@10"] for t in targets])
        after = np.mean([exposure(poisoned, inputs, t, negs[t])["N@10"] for t in targets])
        pairs.append((before, after))
    b, a_ = np.mean([p[0] for p in pairs]), np.mean([p[1] for p in pairs])
    ok = a_ > b
    record(7, ok, f"{n_fake} fake profiles (1% of users), mean target N@10 clean {b:.4f} -> poisoned {a_:.4f}; "
                  "per seed " + ", ".join(f"{x:.4f}->{y:.4f}" for x, y in pairs))
    assert ok


# ---------------------------------------------------------------- 8-9: protocol and determinism


def _has_float(x):
    if isinstance(x, float):
        return True
    if isinstance(x, dict):
        return any(_has_float(v) for v in x.values())
    if isinstance(x, list):
        return any(_has_float(v) for v in x)
    return False


def test_criterion_8_oracle_protocol(record):
    rng = np.random.default_rng(8)
    victim = build_model("sasrec", n_items=50, hidden=16, n_heads=2, max_len=20, seed=8)
    seqs = _random_seqs(rng, 50, 200, lo=1, hi=20)
    local = Oracle(victim, k=20)
    server = OracleServer(Oracle(victim, k=20)).start()
    try:
        with RemoteOracle("127.0.0.1", server.port, 50, 20) as r:
            identical = r.query_batch(seqs) == local.query_batch(seqs) and \
                r.trace_batch(seqs[:30]) == local.trace_batch(seqs[:30])
    finally:
        server.stop()

    cap = 150
    capped = Oracle(victim, k=20, budget=cap)
    server = OracleServer(capped).start()
    served, refused = [], []
    raw_lines = []

    def client(offset):
        lines = [json.dumps({"id": i, "op": "query", "seq": [1 + (offset + i) % 50, 2 + i % 40]}) + "\n"
                 for i in range(120)]
        replies = send_raw("127.0.0.1", server.port, lines)
        raw_lines.extend(replies)
        decoded = [json.loads(x) for x in replies]
        served.append(sum("topk" in d for d in decoded))
        refused.append(sum(d.get("error") == "BUDGET" for d in decoded))

    try:
        threads = [threading.Thread(target=client, args=(o,)) for o in (0, 7)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    finally:
        server.stop()
    ledger_ok = sum(served) == cap and capped.budget.consumed == cap and sum(refused) == 240 - cap
    no_scores = not any(_has_float(json.loads(x)) or "score" in x for x in raw_lines)
    ok = identical and ledger_ok and no_scores
    record(8, ok, f"remote == in-process on 200 queries + 30 traces: {identical}; 2 clients x 120 queries "
                  f"against cap {cap}: served {sum(served)}, refused {sum(refused)}, ledger {capped.budget.consumed}; "
                  f"no scores in responses: {no_scores}")
    assert ok


def test_criterion_9_determinism(record, tmp_path):
    args = ["--preset", "toy", "--set", "generate.budget=200"]
    codes = [main(["pipeline", "--run-dir", str(tmp_path / name), *args]) for name in ("a", "b")]
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.parts[-2] != "report")
    differ = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = codes == [0, 0] and not differ and len(files) > 20
    record(9, ok, f"toy pipeline run twice: {len(files)} artifacts (reports, checkpoints, generated data), "
                  f"{len(differ)} differ {differ[:3]}")
    assert ok


# ---------------------------------------------------------------- 10: full-scale recipes (optional)

REFERENCE_TOL = 0.05


def _full_scale_root():
    root = os.environ.get(C.DATA_ROOT_ENV)
    return root if root and os.environ.get("RECEXTRACT_FULL_SCALE") == "1" else None


def test_criterion_10_full_scale_recipes(record, tmp_path):
    root = _full_scale_root()
    if root is None:
        record(10, None, "full-scale recipes not run (set RECEXTRACT_FULL_SCALE=1 and "
                         f"{C.DATA_ROOT_ENV} with ml-1m/ and beauty/); reference values carry a +-{REFERENCE_TOL} tolerance")
        pytest.skip("full-scale datasets not configured")
    results = []
    run = tmp_path / "ml1m"
    assert main(["pipeline", "--run-dir", str(run), "--preset", "ml-1m", "--skip-poison"]) == 0
    from recextract.metrics import read_report
    bb = read_report(run / "victim/metrics.txt")["N@10"]
    agr = read_report(run / "whitebox/metrics.txt")["Agr@10"]
    results += [("ML-1M NARM black-box N@10", bb, 0.625), ("ML-1M NARM autoregressive Agr@10", agr, 0.747)]
    before, after = [], []
    for arch in ARCHS:
        d = tmp_path / f"beauty-{arch}"
        assert main(["ingest", "--run-dir", str(d), "--preset", "beauty", "--set", f"victim.arch={arch}"]) == 0
        for stage in ("train-victim", "generate", "extract", "poison"):
            assert main([stage, "--run-dir", str(d)]) == 0
        rep = read_report(d / "poison/metrics.txt")
        before.append(rep["clean_N@10"])
        after.append(rep["poisoned_N@10"])
    results += [("Beauty poisoning N@10 before", np.mean(before), 0.066),
                ("Beauty poisoning N@10 after", np.mean(after), 0.240)]
    ok = all(abs(v - ref) <= REFERENCE_TOL for _, v, ref in results)
    record(10, ok, "; ".join(f"{name} {v:.3f} (ref {ref:.3f})" for name, v, ref in results))
    assert ok

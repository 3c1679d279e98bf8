"""Command-line experiment runner.

Every subcommand works inside a run directory::

    config.yaml     resolved config (written by the first stage, fixed afterwards)
    run.json        name, seed, config hash
    data/           processed dataset                       (ingest)
    victim/         model.ckpt, metrics.txt, trace.csv      (train-victim)
    generated/      sequences.txt, labels.txt, item_freq.csv (generate)
    whitebox/       model.ckpt, metrics.txt, trace.csv      (extract)
    pollution/      metrics.txt, targets.csv                (pollute)
    poison/         profiles.txt, metrics.txt, targets.csv  (poison)
    eval/           <model>.txt, <model>_buckets.csv        (evaluate)

``report`` reads any number of run directories and writes tables elsewhere.
Exit codes: 0 success, 1 user error (bad config, missing artifact, bad input),
2 internal error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import signal
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import config as C
from .attacks import exposure, poison_count, poison_generate, poisoned_split, pollution_experiment, randalter
from .data import (EmptyDatasetError, SchemaError, build_sequences, kcore_filter, load_csv, load_dataset,
                   make_toy_dataset, save_dataset, split_leave_two, write_sequences)
from .datagen import GeneratedDataset, generate
from .distill import extract, extraction_report
from .metrics import (bucket_popularity, evaluate_model, exposure_negatives, mean_metrics,
                      read_report, sample_negatives, select_targets, write_report, write_table)
from .models import build_model
from .models.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .models.train import TrainingDiverged, test_metrics, train_victim
from .oracle import BudgetExhausted, Oracle, OracleServer, QueryBudget, RemoteError, RemoteOracle

log = logging.getLogger("recextract")

STAGES = {
    "data": ("data/meta.json", "ingest"),
    "victim": ("victim/model.ckpt", "train-victim"),
    "generated": ("generated/generated.json", "generate"),
    "whitebox": ("whitebox/model.ckpt", "extract"),
}


class UserError(Exception):
    pass


class MissingArtifact(UserError):
    pass


# ------------------------------------------------------------------ run directories


class Run:
    def __init__(self, path, cfg):
        self.path = Path(path)
        self.cfg = cfg
        self.hash = C.config_hash(cfg)

    @property
    def seed(self):
        return self.cfg["seed"]

    def stage(self, name):
        d = self.path / name
        d.mkdir(parents=True, exist_ok=True)
        return d

    def need(self, key):
        rel, producer = STAGES[key]
        p = self.path / rel
        if not p.exists():
            raise MissingArtifact(f"missing {p}: run `recextract {producer} --run-dir {self.path}` first")
        return p.parent

    def header(self, *inputs):
        h = {"config_hash": self.hash, "seed": self.seed}
        if inputs:
            h["inputs_hash"] = hash_files(inputs)
        return h

    def split(self):
        return split_leave_two(load_dataset(self.need("data")))

    def victim(self):
        return load_checkpoint(self.need("victim") / "model.ckpt")

    def whitebox(self):
        return load_checkpoint(self.need("whitebox") / "model.ckpt")


def hash_files(paths):
    h = hashlib.sha256()
    for p in sorted(Path(x) for x in paths):
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()[:16]


def open_run(args, create=True):
    """Resolve the config for ``args.run_dir``: stored config, or CLI config on first use."""
    run_dir = Path(args.run_dir)
    stored = run_dir / "config.yaml"
    given = args.config is not None or args.preset is not None or args.set or args.seed is not None
    overrides = list(args.set or []) + ([f"seed={args.seed}"] if args.seed is not None else [])
    if stored.exists():
        cfg = C.load_config(stored)
        if given:
            fresh = C.load_config(args.config or (stored if args.preset is None else None), args.preset, overrides)
            if C.config_hash(fresh) != C.config_hash(cfg):
                raise UserError(f"{run_dir} was created with config {C.config_hash(cfg)}; the given config "
                                f"hashes to {C.config_hash(fresh)}. Use a new --run-dir.")
        return Run(run_dir, cfg)
    if not create:
        raise MissingArtifact(f"{run_dir} is not a run directory (no config.yaml)")
    cfg = C.load_config(args.config, args.preset or (None if args.config else "toy"), overrides)
    run_dir.mkdir(parents=True, exist_ok=True)
    stored.write_text(C.dump_config(cfg))
    info = {"name": cfg["name"], "seed": cfg["seed"], "config_hash": C.config_hash(cfg)}
    (run_dir / "run.json").write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    return Run(run_dir, cfg)


def parse_endpoint(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise UserError(f"oracle endpoint {text!r} must look like host:port")
    return host, int(port)


def _oracle_for(run, args, split, budget):
    """In-process oracle over the run's victim, or a client for ``--oracle host:port``."""
    k = run.cfg["oracle"]["topk"]
    if getattr(args, "oracle", None):
        host, port = parse_endpoint(args.oracle)
        try:
            return RemoteOracle(host, port, split.n_items, min(k, split.n_items))
        except OSError as err:
            raise UserError(f"cannot reach oracle at {args.oracle}: {err}") from None
    model = load_checkpoint(args.checkpoint) if getattr(args, "checkpoint", None) else run.victim()
    return Oracle(model, k=k, budget=budget, accounting=run.cfg["oracle"]["accounting"])


def _close(oracle):
    if isinstance(oracle, RemoteOracle):
        oracle.close()


def _seq_len(cfg, key):
    return cfg[key[0]][key[1]] or cfg["dataset"]["max_len"]


# ------------------------------------------------------------------ stages


def cmd_ingest(args):
    run = open_run(args)
    ds_cfg = run.cfg["dataset"]
    if ds_cfg["source"] == "toy":
        toy = ds_cfg["toy"]
        ds = make_toy_dataset(n_users=toy["n_users"], n_items=toy["n_items"], seed=toy["seed"],
                              max_len=ds_cfg["max_len"])
    else:
        path = C.resolve_data_path(ds_cfg["path"])
        if not path.exists():
            raise UserError(f"dataset file {path} not found (relative paths resolve against ${C.DATA_ROOT_ENV})")
        inter = load_csv(path, ds_cfg["user_col"], ds_cfg["item_col"], ds_cfg["time_col"],
                         delimiter=ds_cfg["delimiter"], names=ds_cfg["names"])
        if ds_cfg["kcore"]:
            inter = kcore_filter(inter, ds_cfg["kcore"])
        ds = build_sequences(inter, max_len=ds_cfg["max_len"], min_len=ds_cfg["min_len"])
    out = run.stage("data")
    save_dataset(ds, out)
    lengths = [len(s) for s in ds.sequences]
    stats = {"users": ds.n_users, "items": ds.n_items, "interactions": int(sum(lengths)),
             "avg_len": float(np.mean(lengths)), "dropped_users": ds.dropped_users,
             "density": float(sum(lengths)) / (ds.n_users * ds.n_items)}
    write_report(out / "metrics.txt", stats, run.header())
    log.info("ingested %d users, %d items", ds.n_users, ds.n_items)
    return stats


def cmd_train_victim(args):
    run = open_run(args)
    split = run.split()
    cfg = run.cfg
    model = build_model(cfg["victim"]["arch"], **C.victim_hparams(cfg, split.n_items, cfg["dataset"]["max_len"]))
    trace = train_victim(model, split, C.train_config(cfg))
    out = run.stage("victim")
    save_checkpoint(model, out / "model.ckpt")
    write_table(out / "trace.csv", trace)
    metrics = test_metrics(model, split, cfg["eval"]["n_negatives"], seed=cfg["seed"])
    metrics["epochs_run"] = len(trace)
    write_report(out / "metrics.txt", metrics, run.header(run.path / "data"))
    return metrics


def cmd_serve_oracle(args):
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    elif args.run_dir:
        model = open_run(args, create=False).victim()
    else:
        raise UserError("serve-oracle needs --checkpoint or --run-dir")
    oracle = Oracle(model, k=args.topk, budget=args.budget, accounting=args.accounting)
    server = OracleServer(oracle, args.host, args.port)
    print(f"listening on {args.host}:{server.port}", flush=True)
    signal.signal(signal.SIGTERM, lambda *a: (_ for _ in ()).throw(KeyboardInterrupt()))
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    log.info("served %d budget units", oracle.budget.consumed)
    return {}


def cmd_generate(args):
    run = open_run(args)
    split = run.split()
    g = run.cfg["generate"]
    cap = run.cfg["oracle"]["budget"]
    oracle = _oracle_for(run, args, split, QueryBudget(cap if cap is not None else g["budget"]))
    try:
        data = generate(oracle, g["method"], g["budget"], _seq_len(run.cfg, ("generate", "length")),
                        seed=run.seed, sampler=g["sampler"], length_policy=g["length_policy"])
    finally:
        _close(oracle)
    out = run.stage("generated")
    data.meta = {"budget": g["budget"], "k": len(data.labels[0][0]) if len(data) else 0}
    data.save(out)
    # item frequency of generated vs real training data (distribution comparison)
    real = split.train_item_counts()
    fake = np.zeros_like(real)
    for s in data.sequences:
        np.add.at(fake, np.asarray(s, dtype=np.int64), 1)
    rows = [{"item": i, "real_count": int(real[i]), "generated_count": int(fake[i])} for i in range(1, len(real))]
    write_table(out / "item_freq.csv", rows, ["item", "real_count", "generated_count"])
    metrics = {"sequences": len(data), "items_generated": int(fake.sum())}
    write_report(out / "metrics.txt", metrics, run.header(run.path / "data"))
    return metrics


def cmd_extract(args):
    run = open_run(args)
    split = run.split()
    gen = GeneratedDataset.load(run.need("generated"))
    cfg = run.cfg
    model, trace = extract(gen, C.whitebox_arch(cfg), split.n_items, C.distill_config(cfg),
                           C.whitebox_hparams(cfg, cfg["dataset"]["max_len"]))
    out = run.stage("whitebox")
    save_checkpoint(model, out / "model.ckpt")
    write_table(out / "trace.csv", trace)
    # fidelity is measured on real test histories; this is evaluation, not training data
    reference = _oracle_for(run, args, split, None)
    try:
        report = extraction_report(model, reference, split, cfg["eval"]["n_negatives"], seed=cfg["seed"])
    finally:
        _close(reference)
    report["epochs_run"] = len(trace)
    write_report(out / "metrics.txt", report, run.header(run.path / "data", run.path / "generated"))
    return report


def _bucket_means(rows, buckets, keys):
    out = {}
    for name in ("head", "middle", "tail"):
        sel = [r for r in rows if buckets.bucket_of(r["target"]) == name]
        for k in keys:
            out[f"{name}/{k}"] = float(np.mean([r[k] for r in sel])) if sel else 0.0
    return out


def cmd_pollute(args):
    run = open_run(args)
    split = run.split()
    cfg, a = run.cfg, run.cfg["attack"]
    victim, whitebox = run.victim(), run.whitebox()
    counts = split.train_item_counts()
    targets = select_targets(counts, a["n_targets"])
    rows = pollution_experiment(victim, whitebox, split, targets, a["n_append"], a["eps"], a["n_candidates"],
                                seed=cfg["seed"], n_negatives=cfg["eval"]["n_negatives"])
    keys = [k for k in rows[0] if k != "target"]
    metrics = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    metrics.update(_bucket_means(rows, bucket_popularity(counts), keys))
    out = run.stage("pollution")
    write_table(out / "targets.csv", rows, ["target"] + keys)
    write_report(out / "metrics.txt", metrics,
                 run.header(run.path / "data", run.path / "victim", run.path / "whitebox"))
    return metrics


def _retrain(cfg, split):
    model = build_model(cfg["victim"]["arch"], **C.victim_hparams(cfg, split.n_items, cfg["dataset"]["max_len"]))
    train_victim(model, split, C.train_config(cfg))
    return model


def cmd_poison(args):
    """Fake profiles for the whole target group, then three retrains with paired seeds: clean, poisoned, RandAlter."""
    run = open_run(args)
    split = run.split()
    cfg, a = run.cfg, run.cfg["attack"]
    whitebox = run.whitebox()
    counts = split.train_item_counts()
    targets = select_targets(counts, a["n_targets"])
    n_fake = poison_count(split.n_users, a["poison_fraction"])
    if n_fake < 1:
        raise UserError(f"poison_fraction {a['poison_fraction']} of {split.n_users} users is below one profile")
    length = _seq_len(cfg, ("attack", "profile_length"))
    profiles = poison_generate(whitebox, targets, n_fake, length, a["eps"], a["n_candidates"], seed=cfg["seed"])
    rng = np.random.default_rng([cfg["seed"], 2])
    rand_profiles = [randalter(targets, split.n_items, length, rng) for _ in range(n_fake)]
    out = run.stage("poison")
    write_sequences(out / "profiles.txt", profiles.profiles)
    write_sequences(out / "randalter_profiles.txt", rand_profiles)
    models = {"clean": _retrain(cfg, split),
              "poisoned": _retrain(cfg, poisoned_split(split, profiles.profiles)),
              "randalter": _retrain(cfg, poisoned_split(split, rand_profiles))}
    inputs = split.test_inputs()
    rows = []
    for t in targets:
        neg = exposure_negatives(split.n_items, split, t, n=cfg["eval"]["n_negatives"], seed=cfg["seed"])
        row = {"target": t}
        for name, m in models.items():
            e = exposure(m, inputs, t, neg)
            row[f"{name}_N@10"], row[f"{name}_R@10"] = e["N@10"], e["R@10"]
        rows.append(row)
    keys = [k for k in rows[0] if k != "target"]
    metrics = {k: float(np.mean([r[k] for r in rows])) for k in keys}
    metrics.update(_bucket_means(rows, bucket_popularity(counts), keys))
    metrics["profiles"] = n_fake
    write_table(out / "targets.csv", rows, ["target"] + keys)
    write_report(out / "metrics.txt", metrics, run.header(run.path / "data", run.path / "whitebox"))
    return metrics


def cmd_evaluate(args):
    run = open_run(args)
    split = run.split()
    cfg = run.cfg
    if args.checkpoint:
        model, name = load_checkpoint(args.checkpoint), Path(args.checkpoint).stem
    else:
        model, name = (run.victim() if args.model == "victim" else run.whitebox()), args.model
    neg = sample_negatives(split.n_items, split.test, n=cfg["eval"]["n_negatives"], seed=cfg["seed"] + 1)
    per_user = evaluate_model(model, split.test_inputs(), split.test, neg)
    metrics = mean_metrics(per_user)
    buckets = bucket_popularity(split.train_item_counts())
    rows = []
    for b in ("head", "middle", "tail"):
        sel = np.array([buckets.bucket_of(i) == b for i in split.test])
        row = {"bucket": b, "users": int(sel.sum())}
        for k, v in per_user.items():
            row[k] = float(np.mean(np.asarray(v)[sel])) if sel.any() else 0.0
            metrics[f"{b}/{k}"] = row[k]
        rows.append(row)
    out = run.stage("eval")
    write_table(out / f"{name}_buckets.csv", rows, ["bucket", "users"] + sorted(per_user))
    write_report(out / f"{name}.txt", metrics, run.header(run.path / "data"))
    return metrics


# ------------------------------------------------------------------ report


def _maybe(path):
    return read_report(path) if path.exists() else None


def collect(run_dirs):
    runs = []
    for d in sorted({Path(x) for x in run_dirs}):
        if not (d / "config.yaml").exists():
            raise MissingArtifact(f"{d} is not a run directory (no config.yaml)")
        cfg = C.load_config(d / "config.yaml")
        runs.append({"dir": d, "cfg": cfg, "victim": _maybe(d / "victim/metrics.txt"),
                     "whitebox": _maybe(d / "whitebox/metrics.txt"),
                     "pollution": _maybe(d / "pollution/metrics.txt"),
                     "poison": _maybe(d / "poison/metrics.txt")})
    return runs


def build_report(run_dirs, out_dir):
    """Aggregate run directories into plot-ready tables; a pure function of the artifacts."""
    runs = collect(run_dirs)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext_rows, poll_rows, pois_rows = [], [], []
    for r in runs:
        cfg = r["cfg"]
        base = {"run": r["dir"].name, "dataset": cfg["name"], "victim": cfg["victim"]["arch"],
                "whitebox": C.whitebox_arch(cfg), "method": cfg["generate"]["method"],
                "budget": cfg["generate"]["budget"], "seed": cfg["seed"]}
        if r["victim"] and r["whitebox"]:
            ext_rows.append({**base, "bb_N@10": r["victim"]["N@10"], "bb_R@10": r["victim"]["R@10"],
                             "wb_N@10": r["whitebox"]["N@10"], "wb_R@10": r["whitebox"]["R@10"],
                             "Agr@1": r["whitebox"]["Agr@1"], "Agr@10": r["whitebox"]["Agr@10"]})
        if r["pollution"]:
            poll_rows.append({**base, **{k: v for k, v in r["pollution"].items() if "/" not in k}})
        if r["poison"]:
            pois_rows.append({**base, **{k: v for k, v in r["poison"].items() if "/" not in k}})
    key_cols = ["run", "dataset", "victim", "whitebox", "method", "budget", "seed"]
    written = {}
    if ext_rows:
        write_table(out / "extraction.csv", ext_rows,
                    key_cols + ["bb_N@10", "bb_R@10", "wb_N@10", "wb_R@10", "Agr@1", "Agr@10"])
        curve = defaultdict(list)
        for row in ext_rows:
            curve[(row["dataset"], row["victim"], row["whitebox"], row["method"], row["budget"])].append(row["Agr@10"])
        write_table(out / "budget_curve.csv",
                    [{"dataset": k[0], "victim": k[1], "whitebox": k[2], "method": k[3], "budget": k[4],
                      "seeds": len(v), "mean_Agr@10": float(np.mean(v)), "std_Agr@10": float(np.std(v))}
                     for k, v in sorted(curve.items(), key=lambda kv: tuple(map(str, kv[0])))],
                    ["dataset", "victim", "whitebox", "method", "budget", "seeds", "mean_Agr@10", "std_Agr@10"])
        written["extraction"] = len(ext_rows)
    if poll_rows:
        write_table(out / "pollution.csv", poll_rows, key_cols + sorted(k for k in poll_rows[0] if k not in key_cols))
        written["pollution"] = len(poll_rows)
    if pois_rows:
        write_table(out / "poisoning.csv", pois_rows, key_cols + sorted(k for k in pois_rows[0] if k not in key_cols))
        written["poisoning"] = len(pois_rows)
    dist = []
    for r in runs:
        f = r["dir"] / "generated" / "item_freq.csv"
        if f.exists():
            lines = f.read_text().splitlines()[1:]
            for line in lines:
                item, real, fake = line.split(",")
                dist.append({"run": r["dir"].name, "item": item, "real_count": real, "generated_count": fake})
    if dist:
        write_table(out / "distribution.csv", dist, ["run", "item", "real_count", "generated_count"])
    summary = {f"{k}_rows": v for k, v in written.items()}
    summary["runs"] = len(runs)
    write_report(out / "summary.txt", summary)
    return summary


def cmd_report(args):
    return build_report(args.runs, args.out)


def cmd_pipeline(args):
    stages = [cmd_ingest, cmd_train_victim, cmd_generate, cmd_extract, cmd_pollute]
    if not args.skip_poison:
        stages.append(cmd_poison)
    for fn in stages:
        log.info("stage %s", fn.__name__[4:].replace("_", "-"))
        fn(args)
    args.model, args.checkpoint = "victim", None
    cmd_evaluate(args)
    args.model = "whitebox"
    cmd_evaluate(args)
    return build_report([args.run_dir], Path(args.run_dir) / "report")


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _run_args(p, run_required=True):
    p.add_argument("--run-dir", required=run_required, help="run directory (created on first use)")
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--preset", help=f"bundled preset: {', '.join(C.list_presets())}")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. generate.budget=200")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")


def build_parser():
    parser = _Parser(prog="recextract", description="Data-free extraction of sequential recommenders "
                     "and transfer attacks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="load raw interactions (or the toy benchmark) into <run>/data")
    _run_args(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train-victim", help="train the black-box model; needs ingest")
    _run_args(p)
    p.set_defaults(fn=cmd_train_victim)

    p = sub.add_parser("serve-oracle", help="serve a checkpoint as a rank-only, budget-limited TCP oracle")
    _run_args(p, run_required=False)
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0, help="0 picks a free port (printed on stdout)")
    p.add_argument("--topk", type=int, default=100)
    p.add_argument("--budget", type=int, default=None, help="query budget; unlimited if omitted")
    p.add_argument("--accounting", choices=["sequence", "query"], default="sequence")
    p.set_defaults(fn=cmd_serve_oracle)

    p = sub.add_parser("generate", help="query the oracle to build synthetic training data; needs train-victim "
                       "or --oracle")
    _run_args(p)
    p.add_argument("--oracle", metavar="HOST:PORT", help="remote oracle instead of the run's victim")
    p.add_argument("--checkpoint", help="in-process oracle over this checkpoint instead of the run's victim")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("extract", help="distill a white-box from generated data; needs generate")
    _run_args(p)
    p.add_argument("--oracle", metavar="HOST:PORT", help="remote oracle used for the fidelity report")
    p.add_argument("--checkpoint", help="black-box checkpoint used for the fidelity report")
    p.set_defaults(fn=cmd_extract)

    p = sub.add_parser("pollute", help="profile pollution with the white-box against the victim; needs extract")
    _run_args(p)
    p.set_defaults(fn=cmd_pollute)

    p = sub.add_parser("poison", help="craft fake profiles, retrain and measure exposure; needs extract")
    _run_args(p)
    p.set_defaults(fn=cmd_poison)

    p = sub.add_parser("evaluate", help="test-split metrics with popularity-bucket breakdown")
    _run_args(p)
    p.add_argument("--model", choices=["victim", "whitebox"], default="victim")
    p.add_argument("--checkpoint", help="evaluate this checkpoint instead")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate run directories into tables")
    p.add_argument("runs", nargs="+", help="run directories")
    p.add_argument("--out", required=True, help="output directory for the tables")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("pipeline", help="every stage in one run directory, then a report")
    _run_args(p)
    p.add_argument("--skip-poison", action="store_true", help="skip the (retraining) poisoning stage")
    p.set_defaults(fn=cmd_pipeline)
    return parser


USER_ERRORS = (UserError, C.ConfigError, SchemaError, EmptyDatasetError, CheckpointError, BudgetExhausted,
               RemoteError, TrainingDiverged, FileNotFoundError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        result = args.fn(args)
    except USER_ERRORS as err:
        print(f"recextract: error: {err}", file=sys.stderr)
        return 1
    except Exception:
        log.exception("internal error")
        return 2
    for k, v in sorted((result or {}).items()):
        if "/" not in k:
            print(f"{k}\t{v:.6f}" if isinstance(v, float) else f"{k}\t{v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

import json
import subprocess
import sys

import pytest
import yaml

from recextract import config as C
from recextract.cli import main
from recextract.models.checkpoint import load_checkpoint
from recextract.oracle import Oracle, OracleServer, send_raw

FAST = ["--set", "victim.epochs=4", "--set", "extract.epochs=3", "--set", "generate.budget=60",
        "--set", "attack.n_targets=5", "--set", "victim.hidden=16", "--set", "generate.length=10"]
REPORTS = ["data/metrics.txt", "victim/metrics.txt", "generated/metrics.txt", "whitebox/metrics.txt",
           "pollution/metrics.txt", "poison/metrics.txt", "eval/victim.txt", "eval/whitebox.txt",
           "report/extraction.csv", "report/budget_curve.csv", "report/pollution.csv", "report/poisoning.csv",
           "report/distribution.csv", "pollution/targets.csv", "poison/targets.csv", "victim/model.ckpt",
           "whitebox/model.ckpt", "generated/labels.txt", "poison/profiles.txt"]


@pytest.fixture(scope="module")
def toy_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("runs") / "a"
    assert main(["pipeline", "--run-dir", str(d), "--preset", "toy", *FAST]) == 0
    return d


def test_pipeline_smoke(toy_run):
    for rel in REPORTS:
        assert (toy_run / rel).exists(), rel
    cfg = yaml.safe_load((toy_run / "config.yaml").read_text())
    head = (toy_run / "victim/metrics.txt").read_text().splitlines()[0]
    assert head == f"# config_hash\t{C.config_hash(cfg)}"


def test_rerun_is_byte_identical(toy_run, tmp_path):
    d = tmp_path / "b"
    assert main(["pipeline", "--run-dir", str(d), "--preset", "toy", *FAST]) == 0
    for rel in REPORTS:
        if rel.startswith("report/"):
            continue  # the report table names the run directory
        assert (d / rel).read_bytes() == (toy_run / rel).read_bytes(), rel
    a = (toy_run / "report/extraction.csv").read_text().splitlines()
    b = (d / "report/extraction.csv").read_text().splitlines()
    assert [x.split(",", 1)[1] for x in a] == [x.split(",", 1)[1] for x in b]


def test_report_is_reproducible_from_artifacts(toy_run, tmp_path):
    assert main(["report", str(toy_run), "--out", str(tmp_path / "rep")]) == 0
    for name in ("extraction.csv", "pollution.csv", "poisoning.csv", "distribution.csv", "budget_curve.csv"):
        assert (tmp_path / "rep" / name).read_bytes() == (toy_run / "report" / name).read_bytes()


def test_remote_and_in_process_extract_agree(toy_run, tmp_path):
    victim = load_checkpoint(toy_run / "victim/model.ckpt")
    server = OracleServer(Oracle(victim, k=20)).start()
    try:
        d = tmp_path / "remote"
        args = ["--run-dir", str(d), "--preset", "toy", *FAST]
        assert main(["ingest", *args]) == 0
        # generation and the fidelity report both go through the remote endpoint
        assert main(["generate", *args, "--oracle", f"127.0.0.1:{server.port}"]) == 0
        assert main(["extract", *args, "--oracle", f"127.0.0.1:{server.port}"]) == 0
    finally:
        server.stop()
    for rel in ("generated/sequences.txt", "generated/labels.txt", "whitebox/model.ckpt"):
        assert (d / rel).read_bytes() == (toy_run / rel).read_bytes(), rel
    remote = (d / "whitebox/metrics.txt").read_text().splitlines()
    local = (toy_run / "whitebox/metrics.txt").read_text().splitlines()
    # the inputs hash covers the victim-free generated data, so every line matches
    assert remote == local


def test_missing_artifact_names_producer(tmp_path, capsys):
    d = tmp_path / "fresh"
    assert main(["extract", "--run-dir", str(d), "--preset", "toy"]) == 1
    err = capsys.readouterr().err
    assert "recextract ingest" in err
    assert main(["ingest", "--run-dir", str(d)]) == 0
    assert main(["pollute", "--run-dir", str(d)]) == 1
    assert "recextract train-victim" in capsys.readouterr().err


def test_config_errors_listed_together(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("victim: {arch: gru4rec, hidden: -3}\noracle: {topk: 0}\nbogus: 1\n")
    assert main(["ingest", "--run-dir", str(tmp_path / "x"), "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    for piece in ("victim.arch", "victim.hidden", "oracle.topk", "bogus"):
        assert piece in err
    assert not (tmp_path / "x").exists()


def test_config_hash_mismatch_is_refused(tmp_path, capsys):
    d = tmp_path / "r"
    assert main(["ingest", "--run-dir", str(d), "--preset", "toy"]) == 0
    assert main(["ingest", "--run-dir", str(d), "--preset", "toy", "--seed", "3"]) == 1
    assert "new --run-dir" in capsys.readouterr().err
    assert main(["ingest", "--run-dir", str(d)]) == 0


def test_usage_errors_exit_one(capsys):
    assert _exit(["frobnicate"]) == 1
    assert _exit(["serve-oracle", "--port", "x"]) == 1


def _exit(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    return info.value.code


def test_csv_ingest_with_data_root(tmp_path, monkeypatch):
    root = tmp_path / "data"
    root.mkdir()
    rows = ["user_id,item_id,timestamp"] + [f"u{u},i{(u + t) % 7},{t}" for u in range(6) for t in range(5)]
    (root / "log.csv").write_text("\n".join(rows) + "\n")
    cfg = tmp_path / "c.yaml"
    cfg.write_text("dataset: {source: csv, path: log.csv, max_len: 10}\n")
    monkeypatch.setenv(C.DATA_ROOT_ENV, str(root))
    assert main(["ingest", "--run-dir", str(tmp_path / "r"), "--config", str(cfg)]) == 0
    seqs = (tmp_path / "r/data/sequences.txt").read_text().splitlines()
    assert len(seqs) == 6
    monkeypatch.delenv(C.DATA_ROOT_ENV)
    assert main(["ingest", "--run-dir", str(tmp_path / "r2"), "--config", str(cfg)]) == 1


def test_presets_carry_dataset_settings():
    rows = {p: C.load_config(preset=p) for p in ("ml-1m", "steam", "beauty")}
    assert [rows[p]["dataset"]["max_len"] for p in rows] == [200, 50, 50]
    assert [rows[p]["victim"]["dropout"] for p in rows] == [0.1, 0.2, 0.5]
    assert [rows[p]["victim"]["mask_prob"] for p in rows] == [0.2, 0.2, 0.6]
    assert [(rows[p]["extract"]["margin_rank"], rows[p]["extract"]["margin_neg"]) for p in rows] == \
        [(0.75, 1.5), (0.5, 1.0), (0.5, 0.5)]
    assert [rows[p]["attack"]["n_append"] for p in rows] == [10, 2, 2]
    assert all(r["attack"]["eps"] == 1.0 and r["attack"]["n_candidates"] == 10 for r in rows.values())
    assert all(r["victim"]["hidden"] == 64 and r["oracle"]["topk"] == 100 for r in rows.values())


def test_serve_oracle_process(toy_run):
    proc = subprocess.Popen([sys.executable, "-m", "recextract.cli", "serve-oracle", "--checkpoint",
                             str(toy_run / "victim/model.ckpt"), "--port", "0", "--topk", "5", "--budget", "1"],
                            stdout=subprocess.PIPE, text=True)
    try:
        line = proc.stdout.readline()
        assert line.startswith("listening on 127.0.0.1:")
        port = int(line.rsplit(":", 1)[1])
        lines = ['{"id":1,"op":"query","seq":[1,2]}\n', '{"id":2,"op":"query","seq":[3]}\n', "not json\n"]
        replies = [json.loads(r) for r in send_raw("127.0.0.1", port, lines)]
        assert len(replies[0]["topk"][0]) == 5
        assert replies[1] == {"id": 2, "error": "BUDGET"}
        assert replies[2]["error"] == "PARSE"
    finally:
        proc.terminate()
        proc.wait(timeout=10)
    assert proc.returncode == 0

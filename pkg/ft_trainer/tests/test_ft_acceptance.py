"""Acceptance: a 50-record toy run trains with decreasing loss, the served
endpoint speaks the chat protocol, and the retrieval pipeline completes
end-to-end against it (consuming this package only over the wire).
"""

import json
import subprocess
import sys
import threading
from contextlib import contextmanager

import pytest
import requests

from ft_trainer.serve import make_server
from ft_trainer.train import TrainConfig, train


@contextmanager
def criterion(number, title):
    try:
        yield
    except BaseException:
        print(f"[FAIL] criterion {number}: {title}")
        raise
    print(f"[PASS] criterion {number}: {title}")


def _toy_supervision_file(path, n=50):
    subjects = ["tides", "glaciers", "magnets", "enzymes", "comets"]
    with path.open("w") as fh:
        for i in range(n):
            subject = subjects[i % len(subjects)]
            record = {
                "input_text": (
                    f"Q: what causes {subject}?\n"
                    f"A: {subject} are shaped by natural forces.\n"
                    f"New question: tell me more about {subject}"
                ),
                "target_text": f"{subject} causes explained",
                "turn_id": f"toy_{i}",
                "selection_score": 1.0,
            }
            fh.write(json.dumps(record) + "\n")
    return path


def _write_pipeline_fixtures(base):
    collection = base / "collection.tsv"
    collection.write_text(
        "c01\tTides are caused by the gravitational pull of the moon and the sun.\n"
        "c02\tGlaciers are rivers of ice that carve valleys over centuries.\n"
        "c03\tMagnets align iron filings along invisible field lines.\n"
        "c04\tEnzymes speed up chemical reactions inside living cells.\n"
        "c05\tComets are icy bodies that grow tails near the sun.\n",
        encoding="utf-8",
    )
    sessions = base / "sessions.jsonl"
    sessions.write_text(
        json.dumps({
            "session_id": "e1", "turn_id": "e1_2",
            "history": [{"question": "what causes tides?",
                         "response": "tides are shaped by natural forces."}],
            "question": "tell me more about tides",
        }) + "\n",
        encoding="utf-8",
    )
    qrels = base / "qrels.txt"
    qrels.write_text("e1_2 0 c01 1\n", encoding="utf-8")
    return collection, sessions, qrels


def _chiq(*argv):
    return subprocess.run(
        [sys.executable, "-m", "chiq.cli", *argv],
        capture_output=True, text=True, timeout=300,
    )


def test_criterion_8_train_serve_and_integrate(tmp_path):
    with criterion(8, "50-record training run, protocol serving, pipeline integration"):
        data = _toy_supervision_file(tmp_path / "ft.jsonl")
        checkpoint = tmp_path / "ckpt"
        log = train(data, checkpoint, TrainConfig(base_model="tiny", epochs=3))
        assert log["epochs_completed"] == 3
        assert log["losses"][-1] < log["losses"][0]  # final < initial

        server = make_server(checkpoint, port=0)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            url = f"http://127.0.0.1:{server.server_address[1]}"
            probe = requests.post(url, json={
                "model": "x",
                "messages": [{"role": "user", "content": "tell me more about tides"}],
                "max_tokens": 32,
            }, timeout=60)
            assert probe.status_code == 200
            content = probe.json()["choices"][0]["message"]["content"]
            assert isinstance(content, str) and content.strip()
            assert len(content.split()) <= 32

            base = tmp_path / "pipeline"
            base.mkdir()
            collection, sessions, qrels = _write_pipeline_fixtures(base)
            index_dir = base / "idx"
            rewrites = base / "rw.jsonl"
            run_path = base / "run.trec"
            metrics = base / "metrics.json"

            steps = [
                ["index", "--collection", str(collection), "--out", str(index_dir)],
                ["rewrite", "--sessions", str(sessions), "--baseline",
                 "--llm-url", url, "--llm-model", "tiny", "--out", str(rewrites)],
                ["retrieve", "--queries", str(rewrites), "--index", str(index_dir),
                 "--out", str(run_path), "--k", "5"],
                ["evaluate", "--run", str(run_path), "--qrels", str(qrels),
                 "--json-out", str(metrics)],
            ]
            for step in steps:
                result = _chiq(*step)
                assert result.returncode == 0, (step[0], result.stderr)
            payload = json.loads(metrics.read_text())
            assert "means" in payload
            rewrite_record = json.loads(rewrites.read_text().splitlines()[0])
            assert rewrite_record["query"].strip()
        finally:
            server.shutdown()

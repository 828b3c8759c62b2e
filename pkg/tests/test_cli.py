import json

import pytest

from chiq.cli import main
from chiq.corpus import read_run
from chiq.toydata import toy_path


def _run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_config_dump_qrecc(capsys):
    code, out, _ = _run(capsys, "config-dump", "--preset", "qrecc")
    assert code == 0
    payload = json.loads(out)
    assert payload["k1"] == 0.82
    assert payload["b"] == 0.68


def test_config_dump_cast20_threshold(capsys):
    code, out, _ = _run(capsys, "config-dump", "--preset", "cast20")
    assert json.loads(out)["binary_threshold"] == 2


def test_unknown_flag_is_machine_parseable(capsys):
    code, out, err = _run(capsys, "config-dump", "--nope")
    assert code == 2
    assert json.loads(err.strip())["error"]


def test_runtime_error_is_machine_parseable(capsys, tmp_path):
    code, out, err = _run(
        capsys, "evaluate", "--run", str(tmp_path / "missing.trec"),
        "--qrels", str(toy_path("qrels.txt")),
    )
    assert code == 1
    assert "error" in json.loads(err.strip())


@pytest.fixture
def toy_pipeline(tmp_path, capsys):
    """Run index -> enhance -> rewrite -> retrieve on the bundled toy data."""
    index_dir = tmp_path / "index"
    enhanced = tmp_path / "enhanced.jsonl"
    rewrites = tmp_path / "rewrites.jsonl"
    run_path = tmp_path / "run.trec"
    mock = str(toy_path("mock_rules.json"))
    assert main(["index", "--collection", str(toy_path("collection.tsv")),
                 "--out", str(index_dir)]) == 0
    assert main(["enhance", "--sessions", str(toy_path("sessions.jsonl")),
                 "--out", str(enhanced), "--mock-rules", mock]) == 0
    assert main(["rewrite", "--sessions", str(toy_path("sessions.jsonl")),
                 "--enhanced", str(enhanced), "--out", str(rewrites),
                 "--mock-rules", mock]) == 0
    assert main(["retrieve", "--queries", str(rewrites), "--index", str(index_dir),
                 "--out", str(run_path), "--k", "10"]) == 0
    capsys.readouterr()
    return {
        "index": index_dir, "enhanced": enhanced,
        "rewrites": rewrites, "run": run_path, "mock": mock,
    }


def test_toy_pipeline_artifacts(toy_pipeline):
    enhanced_records = [
        json.loads(line)
        for line in toy_pipeline["enhanced"].read_text().splitlines() if line
    ]
    assert {r["turn_id"] for r in enhanced_records} == {"t1_3", "t2_1"}
    by_turn = {r["turn_id"]: r for r in enhanced_records}
    assert by_turn["t1_3"]["topic_switched"] is False
    assert by_turn["t1_3"]["summary"] is not None
    assert "adrenaline" in by_turn["t1_3"]["disambiguated_question"]

    rewrites = [
        json.loads(line)
        for line in toy_pipeline["rewrites"].read_text().splitlines() if line
    ]
    queries = {r["turn_id"]: r["query"] for r in rewrites}
    assert "adrenaline" in queries["t1_3"]
    assert all(r["source"] == "llm" for r in rewrites)
    assert "UNMATCHED" not in toy_pipeline["rewrites"].read_text()

    run = read_run(toy_pipeline["run"])
    top_by_query = {e.query_id: e.doc_id for e in run if e.rank == 1}
    assert top_by_query["t1_3"] == "p07"
    assert top_by_query["t2_1"] == "p11"


def test_toy_baseline_misses_gold(toy_pipeline, tmp_path, capsys):
    rewrites = tmp_path / "baseline_rewrites.jsonl"
    run_path = tmp_path / "baseline_run.trec"
    assert main(["rewrite", "--sessions", str(toy_path("sessions.jsonl")),
                 "--out", str(rewrites), "--baseline",
                 "--mock-rules", toy_pipeline["mock"]]) == 0
    assert main(["retrieve", "--queries", str(rewrites),
                 "--index", str(toy_pipeline["index"]),
                 "--out", str(run_path), "--k", "10"]) == 0
    run = read_run(run_path)
    top = next(e.doc_id for e in run if e.query_id == "t1_3" and e.rank == 1)
    assert top != "p07"


def test_evaluate_outputs(toy_pipeline, tmp_path, capsys):
    json_out = tmp_path / "metrics.json"
    tsv_out = tmp_path / "per_query.tsv"
    plot_out = tmp_path / "metrics.png"
    code, out, _ = _run(
        capsys, "evaluate", "--run", str(toy_pipeline["run"]),
        "--qrels", str(toy_path("qrels.txt")),
        "--json-out", str(json_out), "--tsv-out", str(tsv_out),
        "--plot-out", str(plot_out),
    )
    assert code == 0
    assert "mean" in out
    payload = json.loads(json_out.read_text())
    assert payload["means"]["mrr"] == 1.0
    assert tsv_out.read_text().startswith("query_id\tmrr\tndcg\trecall\n")
    assert plot_out.stat().st_size > 0


def test_evaluate_preset_threshold(toy_pipeline, tmp_path, capsys):
    json_out = tmp_path / "metrics.json"
    code, _, _ = _run(
        capsys, "evaluate", "--run", str(toy_pipeline["run"]),
        "--qrels", str(toy_path("qrels.txt")), "--preset", "cast20",
        "--json-out", str(json_out),
    )
    assert code == 0
    assert json.loads(json_out.read_text())["config"]["binary_threshold"] == 2


def test_fuse_cli(toy_pipeline, tmp_path, capsys):
    fused = tmp_path / "fused.trec"
    code, _, _ = _run(
        capsys, "fuse", "--run-a", str(toy_pipeline["run"]),
        "--run-b", str(toy_pipeline["run"]), "--out", str(fused),
        "--alpha", "1.0", "--depth", "10",
    )
    assert code == 0
    original = read_run(toy_pipeline["run"])
    fused_entries = read_run(fused)
    assert [e.doc_id for e in fused_entries if e.query_id == "t1_3"] == [
        e.doc_id for e in original if e.query_id == "t1_3"
    ]


def test_supervise_cli(toy_pipeline, tmp_path, capsys):
    out = tmp_path / "ft.jsonl"
    code, stdout, _ = _run(
        capsys, "supervise", "--sessions", str(toy_path("sessions.jsonl")),
        "--enhanced", str(toy_pipeline["enhanced"]),
        "--index", str(toy_pipeline["index"]),
        "--collection", str(toy_path("collection.tsv")),
        "--qrels", str(toy_path("qrels.txt")),
        "--out", str(out), "--mock-rules", toy_pipeline["mock"],
    )
    assert code == 0
    records = [json.loads(line) for line in out.read_text().splitlines() if line]
    assert len(records) == 2
    by_turn = {r["turn_id"]: r for r in records}
    # candidate "adrenaline fear feeling response" hits p07 -> top score
    assert "adrenaline" in by_turn["t1_3"]["target_text"]
    assert by_turn["t1_3"]["selection_score"] > 0


def test_supervise_no_gold_ablation(toy_pipeline, tmp_path, capsys):
    out = tmp_path / "ft_no_gold.jsonl"
    code, _, _ = _run(
        capsys, "supervise", "--sessions", str(toy_path("sessions.jsonl")),
        "--enhanced", str(toy_pipeline["enhanced"]),
        "--index", str(toy_pipeline["index"]),
        "--collection", str(toy_path("collection.tsv")),
        "--qrels", str(toy_path("qrels.txt")),
        "--out", str(out), "--mock-rules", toy_pipeline["mock"],
        "--ablate", "no-gold",
    )
    assert code == 0
    assert len(out.read_text().splitlines()) == 2


def test_repl_smoke(tmp_path, capsys, monkeypatch):
    import io

    monkeypatch.setattr("sys.stdin", io.StringIO("What is adrenaline?\n\n/quit\n"))
    code = main(["repl", "--mock-rules", str(toy_path("mock_rules.json"))])
    captured = capsys.readouterr()
    assert code == 0
    assert "query>" in captured.out


def test_dense_pipeline_cli(tmp_path, capsys):
    index_dir = tmp_path / "dense_index"
    assert main(["index", "--collection", str(toy_path("collection.tsv")),
                 "--out", str(index_dir), "--retriever", "dense"]) == 0
    rewrites = tmp_path / "queries.jsonl"
    rewrites.write_text(json.dumps(
        {"turn_id": "t1_3", "query": "adrenaline feeling", "source": "llm",
         "config": "baseline"}) + "\n")
    run_path = tmp_path / "dense_run.trec"
    assert main(["retrieve", "--queries", str(rewrites), "--index", str(index_dir),
                 "--out", str(run_path), "--k", "5"]) == 0
    entries = read_run(run_path)
    assert len(entries) == 5
    capsys.readouterr()

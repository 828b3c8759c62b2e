"""Command-line surface: reproducible pipelines over file contracts.

Stages communicate exclusively through files (json-lines and TREC
formats), so any stage can be swapped for an external tool. Every
subcommand is idempotent given identical inputs and cache state, and all
errors leave through a one-line JSON message on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import corpus, fusion, metrics, report, rewrite, supervision
from .config import PipelineConfig, resolve_config
from .enhance import EnhanceConfig, Enhancer, read_enhanced, write_enhanced
from .errors import ChiqError, ConfigError
from .gateway import (
    GenerationConfig,
    HttpBackend,
    LlmGateway,
    MockBackend,
    load_mock_rules,
)
from .retrieval import (
    AnalyzerConfig,
    Bm25Params,
    RankedList,
    HashEmbedder,
    HttpEmbedder,
    build_index,
    build_vector_index,
    load_index,
    ranked_lists_from_run,
    load_vector_index,
    save_index,
    save_vector_index,
    search_dense,
    search_sparse,
)
from .tokens import keep_first_tokens


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise _UsageError(message)


def _emit_error(message: str) -> None:
    sys.stderr.write(json.dumps({"error": message}, ensure_ascii=False) + "\n")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", default="custom",
                        help="dataset preset (topiocqa, qrecc, cast19, cast20, cast21, custom)")
    parser.add_argument("--config", default=None, help="TOML/JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--llm-url", default=None)
    parser.add_argument("--llm-model", default=None)
    parser.add_argument("--llm-key", default=None)
    parser.add_argument("--cache-dir", default=None)
    parser.add_argument("--mock-rules", default=None, help="JSON mock-rule file (forces the mock backend)")
    parser.add_argument("--concurrency", type=int, default=None)


def _resolve(args: argparse.Namespace, extra: dict | None = None) -> PipelineConfig:
    overrides: dict = dict(extra or {})
    if args.seed is not None:
        overrides["seed"] = args.seed
    gateway = {
        key: value
        for key, value in (
            ("llm_url", args.llm_url),
            ("llm_model", args.llm_model),
            ("llm_key", args.llm_key),
            ("cache_dir", args.cache_dir),
            ("mock_rules", args.mock_rules),
            ("concurrency", args.concurrency),
        )
        if value is not None
    }
    if gateway:
        overrides["gateway"] = gateway
    return resolve_config(preset=args.preset, config_file=args.config, overrides=overrides)


def _build_gateway(cfg: PipelineConfig) -> LlmGateway:
    gw = cfg.gateway
    if gw.mock_rules or not gw.llm_url:
        backend = MockBackend(load_mock_rules(gw.mock_rules) if gw.mock_rules else [])
    else:
        backend = HttpBackend(
            url=gw.llm_url, model=gw.llm_model, api_key=gw.llm_key, max_retries=gw.max_retries
        )
    return LlmGateway(backend, cache_dir=gw.cache_dir, max_concurrency=gw.concurrency)


def _analyzer(cfg: PipelineConfig) -> AnalyzerConfig:
    return AnalyzerConfig(stemmer=cfg.stemmer, stopword_list=cfg.stopword_list)


def _enhance_config(cfg: PipelineConfig, disable: str | None) -> EnhanceConfig:
    disabled = {part.strip().lower() for part in (disable or "").split(",") if part.strip()}
    unknown = disabled - {"qd", "re", "pr", "ts", "hs"}
    if unknown:
        raise ConfigError(f"unknown steps in --disable: {sorted(unknown)}")
    return EnhanceConfig(
        use_qd="qd" not in disabled,
        use_re="re" not in disabled,
        use_pr="pr" not in disabled,
        use_ts="ts" not in disabled,
        use_hs="hs" not in disabled,
        temperature=cfg.temperature,
        seed=cfg.seed,
    )


def _embedder(cfg: PipelineConfig):
    if cfg.gateway.embed_url:
        return HttpEmbedder(cfg.gateway.embed_url, cache_dir=cfg.gateway.cache_dir)
    return HashEmbedder(dim=cfg.gateway.embed_mock_dim)


# ---------------------------------------------------------------- commands


def _cmd_index(args) -> int:
    cfg = _resolve(args)
    passages = corpus.load_collection(args.collection, format=args.format)
    out = Path(args.out)
    if args.retriever == "sparse":
        index = build_index(passages, _analyzer(cfg), cfg.passage_token_limit)
        save_index(index, out, default_params=Bm25Params(k1=cfg.k1, b=cfg.b))
        print(f"indexed {index.n_docs} passages -> {out}")
    else:
        embedder = _embedder(cfg)
        items = (
            (p.doc_id, embedder.embed(keep_first_tokens(p.text, cfg.passage_token_limit)))
            for p in passages
        )
        vindex = build_vector_index(items, similarity=args.similarity)
        save_vector_index(vindex, out)
        print(f"embedded {len(vindex.doc_ids)} passages (d={vindex.dim}) -> {out}")
    return 0


def _cmd_enhance(args) -> int:
    cfg = _resolve(args)
    sessions = corpus.load_sessions(args.sessions)
    if args.qrels:
        qrels = corpus.load_qrels(args.qrels, threshold=cfg.binary_threshold)
        sessions, dropped = corpus.filter_with_gold(sessions, qrels)
        if dropped:
            print(f"dropped {dropped} sample(s) without gold passages", file=sys.stderr)
    gateway = _build_gateway(cfg)
    enhancer = Enhancer(gateway, _enhance_config(cfg, args.disable))
    with ThreadPoolExecutor(max_workers=cfg.gateway.concurrency) as pool:
        enhanced = list(pool.map(enhancer.enhance_history, sessions))
    write_enhanced(enhanced, args.out)
    print(f"enhanced {len(enhanced)} turn(s) -> {args.out}")
    return 0


def _cmd_rewrite(args) -> int:
    cfg = _resolve(args)
    sessions = corpus.load_sessions(args.sessions)
    enhanced_map = read_enhanced(args.enhanced) if args.enhanced else {}
    if not args.baseline and not enhanced_map:
        raise ConfigError("rewrite needs --enhanced unless --baseline is set")
    gateway = _build_gateway(cfg)
    enhance_config = _enhance_config(cfg, args.disable)
    generation = GenerationConfig(
        temperature=cfg.temperature, max_new_tokens=64, seed=cfg.seed
    )
    results = []
    for session in sessions:
        enhanced = None if args.baseline else enhanced_map.get(session.turn_id)
        if not args.baseline and enhanced is None:
            raise ChiqError(f"no enhanced record for turn {session.turn_id!r}")
        rewritten = rewrite.rewrite_query(
            gateway,
            session,
            enhanced=enhanced,
            enhance_config=enhance_config,
            generation=generation,
            query_token_limit=cfg.query_token_limit,
            input_token_limit=cfg.input_token_limit,
        )
        results.append((session.turn_id, rewritten))
    rewrite.write_rewrites(results, args.out)
    print(f"rewrote {len(results)} turn(s) -> {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    cfg = _resolve(args)
    queries = rewrite.read_rewrites(args.queries)
    index_dir = Path(args.index)
    with (index_dir / "manifest.json").open("r", encoding="utf-8") as fh:
        kind = json.load(fh).get("kind", "sparse")
    entries: list[corpus.RunEntry] = []
    if kind == "sparse":
        index = load_index(index_dir)
        params = Bm25Params(k1=cfg.k1, b=cfg.b)
        for record in queries:
            ranked = search_sparse(
                index,
                params,
                record["query"],
                k=args.k,
                query_id=record["turn_id"],
                query_token_limit=cfg.query_token_limit,
            )
            entries.extend(ranked.to_run_entries(tag=args.tag))
    else:
        vindex = load_vector_index(index_dir)
        embedder = _embedder(cfg)
        for record in queries:
            vector = embedder.embed(keep_first_tokens(record["query"], cfg.query_token_limit))
            ranked = search_dense(vindex, vector, k=args.k, query_id=record["turn_id"])
            entries.extend(ranked.to_run_entries(tag=args.tag))
    corpus.write_run(entries, args.out)
    print(f"retrieved {len(queries)} quer(ies) -> {args.out}")
    return 0


def _cmd_fuse(args) -> int:
    cfg = _resolve(args, extra={"fusion_alpha": args.alpha} if args.alpha is not None else None)
    lists_a = ranked_lists_from_run(corpus.read_run(args.run_a))
    lists_b = ranked_lists_from_run(corpus.read_run(args.run_b))
    config = fusion.FusionConfig(alpha=cfg.fusion_alpha, depth=args.depth)
    entries: list[corpus.RunEntry] = []
    for qid in sorted(set(lists_a) | set(lists_b)):
        empty = RankedList(query_id=qid, hits=(), depth=args.depth)
        fused = fusion.fuse(lists_a.get(qid, empty), lists_b.get(qid, empty), config)
        entries.extend(fused.to_run_entries(tag=args.tag))
    corpus.write_run(entries, args.out)
    print(f"fused {len(set(lists_a) | set(lists_b))} quer(ies) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _resolve(args)
    threshold = args.threshold if args.threshold is not None else cfg.binary_threshold
    qrels = corpus.load_qrels(args.qrels, threshold=threshold)
    run = corpus.read_run(args.run)
    eval_config = metrics.EvalConfig(
        ndcg_cutoff=args.ndcg_k if args.ndcg_k is not None else cfg.ndcg_cutoff,
        recall_cutoff=args.recall_k if args.recall_k is not None else cfg.recall_cutoff,
        mrr_depth=args.mrr_depth,
        binary_threshold=threshold,
    )
    result = metrics.evaluate_run(run, qrels, eval_config)
    print(metrics.format_table(result))
    if args.json_out:
        Path(args.json_out).write_text(result.to_json(), encoding="utf-8")
    if args.tsv_out:
        report.write_per_query_tsv(result, args.tsv_out)
    if args.plot_out:
        report.render_eval_figure(result, args.plot_out)
    return 0


def _cmd_supervise(args) -> int:
    cfg = _resolve(args)
    sessions = corpus.load_sessions(args.sessions)
    enhanced_map = read_enhanced(args.enhanced) if args.enhanced else {}
    qrels = corpus.load_qrels(args.qrels, threshold=cfg.binary_threshold)
    passages = {
        p.doc_id: p for p in corpus.load_collection(args.collection, format=args.format)
    }
    index = load_index(args.index)
    params = Bm25Params(k1=cfg.k1, b=cfg.b)

    def retriever(query: str, k: int, query_id: str):
        return search_sparse(index, params, query, k=k, query_id=query_id,
                             query_token_limit=cfg.query_token_limit)

    sup_config = supervision.SupervisionConfig(
        candidate_count=args.m if args.m is not None else cfg.candidate_count,
        history_source=args.history,
        ablation=args.ablate,
        retrieval_depth=cfg.retrieval_depth,
        ndcg_cutoff=cfg.ndcg_cutoff,
        temperature=cfg.temperature,
        seed=cfg.seed,
    )
    gateway = _build_gateway(cfg)
    stats = supervision.build_ft_dataset(
        sessions, enhanced_map, retriever, qrels, passages, sup_config, gateway, args.out
    )
    print(
        f"wrote {stats.records} record(s) -> {args.out} "
        f"(skipped {stats.skipped_no_gold} without gold, {stats.zero_signal} zero-signal)"
    )
    return 0


def _cmd_config_dump(args) -> int:
    cfg = _resolve(args)
    sys.stdout.write(cfg.dump_json())
    return 0


def _cmd_repl(args) -> int:
    cfg = _resolve(args)
    gateway = _build_gateway(cfg)
    enhancer = Enhancer(gateway, _enhance_config(cfg, args.disable))
    index = load_index(args.index) if args.index else None
    params = Bm25Params(k1=cfg.k1, b=cfg.b)
    turns: list[corpus.ConversationTurn] = []
    counter = 0
    print("interactive session; enter a question, /reset to clear, /quit to exit")
    while True:
        try:
            line = input("you> ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line == "/quit":
            break
        if line == "/reset":
            turns = []
            counter = 0
            print("history cleared")
            continue
        counter += 1
        session = corpus.ConversationSession(
            session_id="repl", turns=tuple(turns),
            current_question=line, turn_id=f"repl_{counter}",
        )
        enhanced = enhancer.enhance_history(session)
        if enhanced.topic_switched:
            print(f"[TS] topic switch detected; history truncated to {len(enhanced.turns)} turn(s)")
        if enhanced.disambiguated_question:
            print(f"[QD] {enhanced.disambiguated_question}")
        if enhanced.expanded_last_response:
            print(f"[RE] {enhanced.expanded_last_response}")
        if enhanced.pseudo_response:
            print(f"[PR] {enhanced.pseudo_response}")
        if enhanced.summary:
            print(f"[HS] {enhanced.summary}")
        rewritten = rewrite.rewrite_query(
            gateway, session, enhanced=enhanced, enhance_config=enhancer.config,
            generation=GenerationConfig(temperature=cfg.temperature, max_new_tokens=64,
                                        seed=cfg.seed),
        )
        print(f"query> {rewritten.text}  (source={rewritten.source})")
        if index is not None:
            ranked = search_sparse(index, params, rewritten.text, k=5,
                                   query_id=session.turn_id)
            for rank, (doc_id, score) in enumerate(ranked.hits, start=1):
                print(f"  {rank}. {doc_id}  {score:.4f}")
        try:
            response = input("response (blank to skip)> ").strip()
        except EOFError:
            response = ""
        turns.append(corpus.ConversationTurn(question=line, response=response))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="chiq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a sparse or dense passage index")
    _add_common_flags(p)
    p.add_argument("--collection", required=True)
    p.add_argument("--format", choices=("tsv", "jsonl"), default="tsv")
    p.add_argument("--out", required=True)
    p.add_argument("--retriever", choices=("sparse", "dense"), default="sparse")
    p.add_argument("--similarity", choices=("dot", "cosine"), default="dot")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("enhance", help="run history enhancement over sessions")
    _add_common_flags(p)
    p.add_argument("--sessions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--qrels", default=None, help="drop samples without gold passages")
    p.add_argument("--disable", default=None, help="comma list of steps to skip (qd,re,pr,ts,hs)")
    p.set_defaults(func=_cmd_enhance)

    p = sub.add_parser("rewrite", help="generate search queries per turn")
    _add_common_flags(p)
    p.add_argument("--sessions", required=True)
    p.add_argument("--enhanced", default=None, help="enhancement dump (json-lines)")
    p.add_argument("--out", required=True)
    p.add_argument("--baseline", action="store_true", help="rewrite over the original history")
    p.add_argument("--disable", default=None, help="ignore enhanced ingredients (qd,re,pr,ts,hs)")
    p.set_defaults(func=_cmd_rewrite)

    p = sub.add_parser("retrieve", help="run queries against an index, emit a TREC run")
    _add_common_flags(p)
    p.add_argument("--queries", required=True, help="rewrite dump (json-lines)")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--tag", default="chiq")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("fuse", help="fuse two TREC run files")
    _add_common_flags(p)
    p.add_argument("--run-a", required=True)
    p.add_argument("--run-b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--tag", default="fusion")
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("evaluate", help="score a run against qrels")
    _add_common_flags(p)
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--threshold", type=int, default=None)
    p.add_argument("--ndcg-k", type=int, default=None)
    p.add_argument("--recall-k", type=int, default=None)
    p.add_argument("--mrr-depth", type=int, default=None)
    p.add_argument("--json-out", default=None)
    p.add_argument("--tsv-out", default=None)
    p.add_argument("--plot-out", default=None, help="render per-query metrics to an image file")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("supervise", help="build the pseudo-supervision dataset")
    _add_common_flags(p)
    p.add_argument("--sessions", required=True)
    p.add_argument("--enhanced", default=None)
    p.add_argument("--index", required=True)
    p.add_argument("--collection", required=True)
    p.add_argument("--format", choices=("tsv", "jsonl"), default="tsv")
    p.add_argument("--qrels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--m", type=int, default=None, help="candidates per turn")
    p.add_argument("--history", choices=("original", "enhanced"), default="original")
    p.add_argument("--ablate", choices=("none", "no-hprime", "no-multi", "no-gold"),
                   default="none")
    p.set_defaults(func=_cmd_supervise)

    p = sub.add_parser("repl", help="interactive conversational search loop")
    _add_common_flags(p)
    p.add_argument("--index", default=None)
    p.add_argument("--disable", default=None)
    p.set_defaults(func=_cmd_repl)

    p = sub.add_parser("config-dump", help="print the fully resolved configuration")
    _add_common_flags(p)
    p.set_defaults(func=_cmd_config_dump)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error(f"usage: {exc}")
        return 2
    try:
        return args.func(args)
    except (ChiqError, OSError, ValueError) as exc:
        _emit_error(str(exc))
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

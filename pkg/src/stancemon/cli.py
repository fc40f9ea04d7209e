"""Command-line entry point; every subcommand writes a run manifest.

Exit codes: 0 success, 2 validation/usage, 3 backend or network failure,
4 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import annotation, classify, evaluate, pipeline, trends
from .config import ManifestWriter, PipelineConfig
from .corpus import ArticleStore, ingest_articles
from .errors import BackendError, ValidationError


def load_config(args) -> PipelineConfig:
    if args.config:
        return PipelineConfig.from_file(args.config)
    return PipelineConfig(data_dir=Path(args.data_dir))


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a pipeline config file")
    parser.add_argument("--data-dir", default="data", help="data directory when no config file is given")


def cmd_ingest(args) -> int:
    config = load_config(args)
    store = ArticleStore(config.corpus_dir)
    manifest = ManifestWriter(config.corpus_dir, "ingest", config, seed=None)
    manifest.add_input(Path(args.input))
    with open(args.input, "rb") as fh:
        report = ingest_articles(
            fh, args.format, args.publisher, store,
            languages=config.languages,
            window=(config.window_start, config.window_end),
            publisher_registry=config.publishers,
        )
    for path in sorted(config.corpus_dir.glob("articles_*")):
        manifest.add_output(path)
    manifest.write()
    print(f"ingested {report.accepted} articles, {len(report.rejects)} rejects")
    for row_no, art_id, reason in report.rejects:
        print(f"  row {row_no} ({art_id or '-'}): {reason}", file=sys.stderr)
    return 0


def cmd_extract(args) -> int:
    config = load_config(args)
    manifest = ManifestWriter(config.extract_dir, "extract", config, seed=None)
    if config.lexicon_path:
        manifest.add_input(config.lexicon_path)
    counts = pipeline.extract_corpus(config)
    manifest.add_output(config.sentences_path)
    manifest.add_output(config.hits_path)
    manifest.write()
    print(f"segmented {counts['sentences']} sentences, "
          f"{counts['topical']} topical, {counts['hits']} group hits")
    return 0


def cmd_sample(args) -> int:
    config = load_config(args)
    seed = args.seed if args.seed is not None else config.seed
    units = pipeline.sampling_units(config)
    batch = annotation.sample_for_annotation(units, n=args.n, seed=seed)
    annotators = [a.strip() for a in args.annotators.split(",") if a.strip()]
    batches = annotation.assign_batches(
        batch.sentence_ids, annotators, overlap_n=args.overlap, seed=seed, mode=args.mode,
    )
    config.annotation_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(config.annotation_dir, "sample", config, seed=seed)
    manifest.add_input(config.sentences_path)
    out_path = config.annotation_dir / "batches.json"
    with out_path.open("w", encoding="utf-8") as fh:
        json.dump([asdict(b) for b in batches], fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    manifest.add_output(out_path)
    manifest.write()
    print(f"sampled {len(batch.sentence_ids)} sentences into {len(batches)} batches")
    return 0


def cmd_annotate_export(args) -> int:
    config = load_config(args)
    store = annotation.AnnotationStore(config.annotation_dir)
    records = sorted(store.live_records().values(),
                     key=lambda r: (r.sentence_id, r.annotator_id))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        if args.with_text:
            texts = dict(pipeline.sentence_texts(config, topical_only=False))
            rows = pipeline.labeled_rows_from_records(
                records, texts, include_ambiguous=args.include_ambiguous)
            count = pipeline.write_labeled_csv(rows, fh)
        else:
            count = annotation.export_annotations(records, fh)
    totals, total = annotation.class_totals(records)
    print(f"exported {count} records; class totals {totals} (sum {total})")
    return 0


def cmd_annotate_import(args) -> int:
    config = load_config(args)
    store = annotation.AnnotationStore(config.annotation_dir)
    with open(args.input, encoding="utf-8", newline="") as fh:
        records, rejects = annotation.import_annotations(fh)
    for rec in records:
        store.append(rec)
    totals, total = annotation.class_totals(store.live_records().values())
    print(f"imported {len(records)} records, {len(rejects)} rejects; "
          f"class totals {totals} (sum {total})")
    for row_no, reason in rejects:
        print(f"  row {row_no}: {reason}", file=sys.stderr)
    return 0


def cmd_train_nb(args) -> int:
    config = load_config(args)
    examples, ambiguous = pipeline.load_labeled_csv(args.labels)
    model = classify.nb_train(examples, alpha=config.nb_alpha)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(model.to_json() + "\n", encoding="utf-8")
    manifest = ManifestWriter(out_path.parent, "train-nb", config, seed=None)
    manifest.add_input(Path(args.labels))
    manifest.add_output(out_path)
    manifest.write()
    print(f"trained on {len(examples)} examples ({ambiguous} ambiguous skipped); "
          f"model {model.version} -> {out_path}")
    return 0


def cmd_classify(args) -> int:
    config = load_config(args)
    items = pipeline.sentence_texts(config, topical_only=True)
    failures: list[classify.PredictionFailure] = []
    if args.backend == "nb":
        if not args.model:
            raise ValidationError("the nb backend needs --model pointing at a trained model file")
        model = classify.NBModel.from_json(Path(args.model).read_text(encoding="utf-8"))
        predictions = [classify.nb_predict(model, sid, text) for sid, text in items]
    elif args.backend == "remote":
        if not config.remote_url:
            raise ValidationError("remote backend needs remote_url in the config")
        client = classify.RemoteClient(classify.RemoteEndpointConfig(
            url=config.remote_url, model=config.remote_model))
        predictions = []
        for start in range(0, len(items), client.config.max_batch):
            preds, fails = client.predict(items[start:start + client.config.max_batch])
            predictions.extend(preds)
            failures.extend(fails)
    elif args.backend == "zeroshot":
        if not config.chat_url:
            raise ValidationError("zeroshot backend needs chat_url in the config")
        client = classify.ChatCompletionClient(classify.ChatEndpointConfig(
            base_url=config.chat_url, model=config.chat_model,
            temperature=config.chat_temperature, token_env=config.chat_token_env,
            parse_retry_limit=config.retry_limit,
            audit_path=config.data_dir / "logs" / "zeroshot_audit.jsonl"))
        template = classify.PromptTemplate()
        predictions, failures = classify.zeroshot_classify(client, template, items)
    else:
        raise ValidationError(f"unknown backend: {args.backend!r}")
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_path.parent, "classify", config, seed=config.seed)
    manifest.add_input(config.sentences_path)
    with out_path.open("w", encoding="utf-8", newline="") as fh:
        count = classify.write_predictions_csv(predictions, fh)
    manifest.add_output(out_path)
    if failures:
        fail_path = out_path.with_suffix(".failures.csv")
        with fail_path.open("w", encoding="utf-8", newline="") as fh:
            fh.write("sentence_id,reason,attempts\n")
            for f in failures:
                fh.write(f"{f.sentence_id},{f.reason.replace(',', ';')},{f.attempts}\n")
        manifest.add_output(fail_path)
    manifest.write()
    print(f"classified {count} sentences with {args.backend}; {len(failures)} failures")
    return 0


def cmd_eval(args) -> int:
    config = load_config(args)
    examples, ambiguous = pipeline.load_labeled_csv(args.labels)
    if args.backend != "nb":
        raise ValidationError("only the nb backend trains natively; others are remote-only")
    seed = args.seed if args.seed is not None else config.seed
    result = evaluate.cross_validate(
        lambda: classify.NBBackend(alpha=config.nb_alpha), examples, k=args.k, seed=seed)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "eval", config, seed=seed)
    manifest.add_input(Path(args.labels))
    report_csv = out_dir / "eval_report.csv"
    with report_csv.open("w", encoding="utf-8", newline="") as fh:
        evaluate.report_to_csv(result, fh)
    report_json = out_dir / "eval_report.json"
    with report_json.open("w", encoding="utf-8") as fh:
        evaluate.report_to_json(result, fh)
    confusion_csv = out_dir / "confusion_fold0.csv"
    with confusion_csv.open("w", encoding="utf-8", newline="") as fh:
        evaluate.confusion_to_csv(result.fold_matrices[0], fh)
    for path in (report_csv, report_json, confusion_csv):
        manifest.add_output(path)
    manifest.write()
    print(f"eval over {len(examples)} examples ({ambiguous} ambiguous skipped): "
          f"macro F1 {result.mean.macro['f1']:.3f} ± {result.std['macro_f1']:.3f}")
    return 0


def cmd_compare(args) -> int:
    config = load_config(args)
    with open(args.a, encoding="utf-8", newline="") as fh:
        preds_a = classify.read_predictions_csv(fh)
    with open(args.b, encoding="utf-8", newline="") as fh:
        preds_b = classify.read_predictions_csv(fh)
    result = evaluate.compare_predictions(preds_a, preds_b)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "compare", config, seed=None)
    manifest.add_input(Path(args.a))
    manifest.add_input(Path(args.b))
    table_path = out_dir / "agreement_table.csv"
    with table_path.open("w", encoding="utf-8", newline="") as fh:
        evaluate.confusion_to_csv(result.cross_table, fh)
    summary_path = out_dir / "agreement.json"
    with summary_path.open("w", encoding="utf-8") as fh:
        json.dump({"kappa": result.kappa, "n": result.n,
                   "only_in_a": result.only_in_a, "only_in_b": result.only_in_b},
                  fh, indent=2)
        fh.write("\n")
    manifest.add_output(table_path)
    manifest.add_output(summary_path)
    manifest.write()
    print(f"kappa {result.kappa:.4f} over {result.n} shared sentences")
    return 0


def _publishers_in(observations) -> list[str]:
    return sorted({o.publisher for o in observations})


def cmd_trends(args) -> int:
    config = load_config(args)
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        predictions = classify.read_predictions_csv(fh)
    observations = pipeline.build_observations(config, predictions)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "trends", config, seed=config.seed)
    manifest.add_input(Path(args.predictions))
    manifest.add_input(config.sentences_path)

    def emit(name, writer, points):
        path = out_dir / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer(points, fh)
        manifest.add_output(path)

    tau = args.tau if args.tau is not None else None
    emit("stance_shares.csv", trends.write_trend_csv,
         trends.stance_shares(observations, args.granularity, tau=tau))
    emit("sentence_counts.csv", trends.write_count_csv,
         trends.sentence_counts(observations, args.granularity))
    emit("group_stance_shares.csv", trends.write_trend_csv,
         trends.group_stance_shares(observations, "year"))
    emit("article_mention_share.csv", trends.write_mention_share_csv,
         trends.article_mention_share(pipeline.article_topicality(config), args.granularity))

    if args.plot_data:
        publishers = _publishers_in(observations)
        emit("fig1.csv", trends.write_count_csv, trends.sentence_counts(observations, "month"))
        emit("s4.csv", trends.write_count_csv, trends.sentence_counts(observations, "week"))
        emit("fig3.csv", trends.write_mention_share_csv,
             trends.article_mention_share(pipeline.article_topicality(config), "month"))
        for fig, pub in zip(("fig4", "fig5"), publishers):
            emit(f"{fig}.csv", trends.write_trend_csv,
                 trends.stance_shares(observations, "month", publisher=pub))
        group_points = trends.group_stance_shares(observations, "year")
        # s6/s7: yearly Against share per keyword group; s8/s9: Supportive
        for figs, stance in ((("s6", "s7"), "Against"), (("s8", "s9"), "Supportive")):
            for fig, pub in zip(figs, publishers):
                path = out_dir / f"{fig}.csv"
                with path.open("w", encoding="utf-8", newline="") as fh:
                    trends.write_trend_csv(
                        [p for p in group_points if p.publisher == pub], fh,
                        stances=(stance,))
                manifest.add_output(path)
        has_distribution = all(o.has_distribution for o in observations)
        for fig, pub in zip(("s10", "s11"), publishers):
            if has_distribution:
                emit(f"{fig}.csv", trends.write_trend_csv,
                     trends.stance_shares(observations, "month", publisher=pub, tau=config.tau))
    manifest.write()
    print(f"trend series written to {out_dir}")
    return 0


def cmd_similarity(args) -> int:
    from . import similarity as sim
    config = load_config(args)
    with open(args.predictions, encoding="utf-8", newline="") as fh:
        predictions = classify.read_predictions_csv(fh)
    observations = pipeline.build_observations(config, predictions)
    texts = dict(pipeline.sentence_texts(config, topical_only=False))
    wanted = [(o.sentence_id, texts[o.sentence_id]) for o in observations]
    cache = sim.EmbeddingCache(config.cache_dir, config.embed_provider)
    if args.cached_only:
        embeddings = cache.get_many([sid for sid, _ in wanted])
    else:
        if not config.embed_url:
            raise ValidationError("similarity needs embed_url in the config (or --cached-only)")
        client = sim.EmbeddingProviderClient(sim.EmbeddingProviderConfig(
            url=config.embed_url, provider=config.embed_provider,
            batch_limit=config.embed_batch_limit, token_env=config.embed_token_env))
        embeddings = sim.fetch_embeddings(client, cache, wanted)
    publishers = _publishers_in(observations)
    if len(publishers) != 2:
        raise ValidationError(f"similarity series needs exactly 2 publishers, found {publishers}")
    points = sim.similarity_series(embeddings, observations, (publishers[0], publishers[1]),
                                   seed=config.seed, sampling_cap=config.sampling_cap)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = ManifestWriter(out_dir, "similarity", config, seed=config.seed)
    manifest.add_input(Path(args.predictions))

    def emit(name, selected):
        path = out_dir / name
        with path.open("w", encoding="utf-8", newline="") as fh:
            sim.write_similarity_csv(selected, fh)
        manifest.add_output(path)

    emit("similarity.csv", points)
    if args.plot_data:
        emit("fig6.csv", [p for p in points if p.mode == "cross_publisher"])
        emit("s12.csv", [p for p in points if p.mode.startswith("within:")])
    manifest.write()
    print(f"{len(points)} similarity points written to {out_dir}")
    return 0


def cmd_emit_train_config(args) -> int:
    cfg = classify.emit_training_config(args.model)
    payload = json.dumps(asdict(cfg), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"training config for {args.model} -> {args.out}")
    else:
        print(payload, end="")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from .service import create_app
    config = load_config(args)
    app = create_app(config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stancemon",
                                     description="stance detection and media monitoring pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load articles from CSV/JSONL into the store")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("csv", "jsonl"), required=True)
    p.add_argument("--publisher", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="segment sentences and tag keyword groups")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("sample", help="draw a balanced annotation sample")
    _add_common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--annotators", required=True, help="comma-separated annotator ids")
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--mode", choices=("disjoint", "interleaved"), default="disjoint")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("annotate-export", help="dump annotation records to CSV")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--with-text", action="store_true",
                   help="emit a labeled training dataset instead of raw records")
    p.add_argument("--include-ambiguous", action="store_true")
    p.set_defaults(func=cmd_annotate_export)

    p = sub.add_parser("annotate-import", help="load annotation records from CSV")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(func=cmd_annotate_import)

    p = sub.add_parser("train-nb", help="train the Naive Bayes baseline")
    _add_common(p)
    p.add_argument("--labels", required=True, help="CSV with sentence_id,text,label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_nb)

    p = sub.add_parser("classify", help="predict stances for topical sentences")
    _add_common(p)
    p.add_argument("--backend", choices=("nb", "remote", "zeroshot"), required=True)
    p.add_argument("--model", help="NB model file (nb backend)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="cross-validate a backend")
    _add_common(p)
    p.add_argument("--backend", default="nb")
    p.add_argument("--labels", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="agreement between two prediction files")
    _add_common(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trends", help="diachronic stance series")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--granularity", choices=("week", "month", "year"), default="month")
    p.add_argument("--tau", type=float)
    p.add_argument("--plot-data", action="store_true",
                   help="also write one CSV per figure analog")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("similarity", help="embedding similarity series")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--cached-only", action="store_true")
    p.add_argument("--plot-data", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("emit-train-config", help="hyperparameters for an external trainer")
    p.add_argument("--model", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_emit_train_config)

    p = sub.add_parser("serve", help="run the annotation/jobs HTTP service")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

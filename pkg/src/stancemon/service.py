"""HTTP service: annotation task dispatch, job orchestration, series export.

Annotation submissions are durable (fsynced) before they are acknowledged;
the latest record per (sentence, annotator) wins. Long-running work goes
through an asynchronous job pool polled via /jobs/{id}.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Union

from fastapi import Depends, FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import annotation, classify, evaluate, pipeline, trends
from .annotation import AnnotationBatch, AnnotationStore, make_record
from .config import PipelineConfig
from .corpus import ArticleStore, ingest_articles
from .errors import ValidationError

JOB_KINDS = ("classify", "evaluate", "trends", "similarity")
SERIES_FILES = {
    "fig1": "fig1.csv",
    "fig3": "fig3.csv",
    "stance": "stance_shares.csv",
    "groups": "group_stance_shares.csv",
    "similarity": "similarity.csv",
}


def _error(status: int, code: str, message: str, details: Optional[dict] = None):
    return HTTPException(status_code=status, detail={
        "code": code, "message": message, "details": details or {},
    })


class IngestBody(BaseModel):
    path: str
    format: str
    publisher: str


class SubmitBody(BaseModel):
    sentence_id: str
    annotator: str
    rating: Union[int, str]
    guideline_version: Optional[str] = None


class JobBody(BaseModel):
    params: dict = {}


class Job:
    def __init__(self, kind: str):
        self.id = uuid.uuid4().hex[:12]
        self.kind = kind
        self.status = "queued"
        self.progress: dict = {}
        self.error: Optional[str] = None
        self.log_path: Optional[str] = None
        self.cancel_event = threading.Event()
        self._lock = threading.Lock()

    def transition(self, status: str) -> None:
        allowed = {"queued": {"running"}, "running": {"done", "failed"}}
        with self._lock:
            if status not in allowed.get(self.status, set()):
                raise ValidationError(f"illegal job transition {self.status} -> {status}")
            self.status = status

    def view(self) -> dict:
        return {"id": self.id, "kind": self.kind, "status": self.status,
                "progress": self.progress, "error": self.error, "log": self.log_path}


class JobManager:
    def __init__(self, workers: int = 2):
        self.pool = ThreadPoolExecutor(max_workers=workers)
        self.jobs: dict[str, Job] = {}

    def submit(self, kind: str, fn, *args) -> Job:
        job = Job(kind)
        self.jobs[job.id] = job

        def run():
            job.transition("running")
            try:
                job.progress = fn(job, *args) or {}
                job.transition("done")
            except Exception as exc:
                job.error = str(exc)
                job.transition("failed")

        self.pool.submit(run)
        return job

    def cancel(self, job_id: str) -> None:
        self.jobs[job_id].cancel_event.set()


def interleave_overlap(main: list[str], overlap: list[str]) -> list[str]:
    """Spread overlap sentences evenly through an annotator's own batch."""
    if not overlap:
        return list(main)
    if not main:
        return list(overlap)
    merged: list[str] = []
    step = max(1, len(main) // len(overlap))
    overlap_iter = iter(overlap)
    pending = next(overlap_iter, None)
    for i, sid in enumerate(main):
        merged.append(sid)
        if pending is not None and (i + 1) % step == 0:
            merged.append(pending)
            pending = next(overlap_iter, None)
    while pending is not None:
        merged.append(pending)
        pending = next(overlap_iter, None)
    return merged


def load_batches(config: PipelineConfig) -> list[AnnotationBatch]:
    path = config.annotation_dir / "batches.json"
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as fh:
        return [AnnotationBatch(
            id=row["id"], sentence_ids=tuple(row["sentence_ids"]),
            annotators=tuple(row["annotators"]), overlap=row["overlap"],
        ) for row in json.load(fh)]


def queue_for(batches: list[AnnotationBatch], annotator: str) -> list[str]:
    main: list[str] = []
    overlap: list[str] = []
    for batch in batches:
        if annotator not in batch.annotators:
            continue
        if batch.overlap:
            overlap.extend(batch.sentence_ids)
        else:
            main.extend(batch.sentence_ids)
    return interleave_overlap(main, overlap)


def create_app(config: PipelineConfig) -> FastAPI:
    store = AnnotationStore(config.annotation_dir)
    try:
        store.history()
    except (json.JSONDecodeError, ValidationError) as exc:
        raise ValidationError(f"corrupt annotation store, refusing to serve: {exc}") from exc

    app = FastAPI(title="stancemon service")
    # The annotation UI is served from another origin (file:// or a static
    # host); auth stays with the bearer token.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    jobs = JobManager()
    texts_cache: dict[str, str] = {}

    def sentence_text(sentence_id: str) -> Optional[str]:
        if not texts_cache and config.sentences_path.exists():
            texts_cache.update(dict(pipeline.sentence_texts(config, topical_only=False)))
        return texts_cache.get(sentence_id)

    def check_auth(request: Request) -> None:
        expected = os.environ.get(config.service_token_env, "")
        if not expected:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {expected}":
            raise _error(401, "unauthorized", "missing or invalid bearer token")

    @app.exception_handler(ValidationError)
    async def on_validation_error(_req, exc: ValidationError):
        from fastapi.responses import JSONResponse
        return JSONResponse(status_code=422, content={
            "code": "validation", "message": str(exc), "details": {},
        })

    @app.post("/ingest")
    def ingest(body: IngestBody, _=Depends(check_auth)):
        articles = ArticleStore(config.corpus_dir)
        source = Path(body.path)
        if not source.exists():
            raise _error(422, "validation", f"no such input file: {body.path}")
        with source.open("rb") as fh:
            report = ingest_articles(
                fh, body.format, body.publisher, articles,
                languages=config.languages,
                window=(config.window_start, config.window_end),
                publisher_registry=config.publishers,
            )
        return {"accepted": report.accepted,
                "rejects": [{"row": r, "id": i, "reason": why} for r, i, why in report.rejects]}

    @app.post("/extract")
    def extract(_=Depends(check_auth)):
        counts = pipeline.extract_corpus(config)
        texts_cache.clear()
        return counts

    @app.get("/annotation/next")
    def annotation_next(annotator: str, _=Depends(check_auth)):
        queue = queue_for(load_batches(config), annotator)
        if not queue:
            raise _error(422, "validation", f"no batches assigned to {annotator!r}")
        done = store.annotated_by(annotator)
        pending = [sid for sid in queue if sid not in done]
        if not pending:
            return Response(status_code=204)
        sid = pending[0]
        return {
            "sentence_id": sid,
            "text": sentence_text(sid),
            "done": len(queue) - len(pending),
            "total": len(queue),
            "guideline_version": config.guideline_version,
            "allowed_ratings": list(annotation.RAW_RATINGS),
            # rating -> collapsed label, so the UI hint never duplicates logic
            "rating_labels": {r: annotation.collapse_rating(r)
                              for r in annotation.RAW_RATINGS},
        }

    @app.post("/annotation/submit")
    def annotation_submit(body: SubmitBody, _=Depends(check_auth)):
        record = make_record(
            sentence_id=body.sentence_id,
            annotator_id=body.annotator,
            raw=body.rating,
            guideline_version=body.guideline_version or config.guideline_version,
        )
        store.append(record)  # fsynced before the acknowledgment below
        return {"sentence_id": record.sentence_id, "annotator": record.annotator_id,
                "raw_rating": record.raw, "label": record.label,
                "created_at": record.created_at}

    @app.get("/annotation/progress")
    def annotation_progress(_=Depends(check_auth)):
        batches = load_batches(config)
        annotators = sorted({a for b in batches for a in b.annotators})
        out = {}
        for annotator in annotators:
            queue = queue_for(batches, annotator)
            done = store.annotated_by(annotator)
            out[annotator] = {
                "assigned": len(queue),
                "done": len([sid for sid in queue if sid in done]),
            }
        return {"annotators": out, "live_records": len(store.live_records())}

    @app.get("/agreement")
    def agreement(_=Depends(check_auth)):
        live = store.live_records()
        by_sentence: dict[str, dict[str, str]] = {}
        for (sid, annotator), rec in live.items():
            by_sentence.setdefault(sid, {})[annotator] = rec.raw
        pairs: dict[tuple[str, str], tuple[list, list]] = {}
        for sid, ratings in by_sentence.items():
            annotators = sorted(ratings)
            for i in range(len(annotators)):
                for j in range(i + 1, len(annotators)):
                    key = (annotators[i], annotators[j])
                    a, b = pairs.setdefault(key, ([], []))
                    a.append(ratings[key[0]])
                    b.append(ratings[key[1]])
        result = []
        for (ann_a, ann_b), (raw_a, raw_b) in sorted(pairs.items()):
            variants = annotation.kappa_variants(raw_a, raw_b)
            result.append({"annotators": [ann_a, ann_b], "variants": variants})
        return {"pairs": result}

    def job_classify(job: Job, params: dict) -> dict:
        backend = params.get("backend", "nb")
        if backend != "nb":
            raise ValidationError("service jobs support the nb backend; remote backends run via the CLI")
        model = classify.NBModel.from_json(Path(params["model_path"]).read_text(encoding="utf-8"))
        items = pipeline.sentence_texts(config, topical_only=True)
        predictions = [classify.nb_predict(model, sid, text) for sid, text in items]
        out_path = _job_dir(job) / "predictions.csv"
        with out_path.open("w", encoding="utf-8", newline="") as fh:
            count = classify.write_predictions_csv(predictions, fh)
        return {"predictions": count, "output": str(out_path)}

    def job_evaluate(job: Job, params: dict) -> dict:
        examples, _ = pipeline.load_labeled_csv(params["labels_path"])
        result = evaluate.cross_validate(
            lambda: classify.NBBackend(alpha=config.nb_alpha),
            examples, k=int(params.get("k", 5)), seed=int(params.get("seed", config.seed)))
        out_path = _job_dir(job) / "eval_report.json"
        with out_path.open("w", encoding="utf-8") as fh:
            evaluate.report_to_json(result, fh)
        return {"macro_f1": result.mean.macro["f1"], "output": str(out_path)}

    def job_trends(job: Job, params: dict) -> dict:
        with open(params["predictions_path"], encoding="utf-8", newline="") as fh:
            predictions = classify.read_predictions_csv(fh)
        observations = pipeline.build_observations(config, predictions)
        series_dir = config.data_dir / "series"
        series_dir.mkdir(parents=True, exist_ok=True)
        granularity = params.get("granularity", "month")
        outputs = {
            "fig1.csv": (trends.write_count_csv, trends.sentence_counts(observations, "month")),
            "fig3.csv": (trends.write_mention_share_csv,
                         trends.article_mention_share(pipeline.article_topicality(config), "month")),
            "stance_shares.csv": (trends.write_trend_csv,
                                  trends.stance_shares(observations, granularity,
                                                       tau=params.get("tau"))),
            "group_stance_shares.csv": (trends.write_trend_csv,
                                        trends.group_stance_shares(observations, "year")),
        }
        for name, (writer, points) in outputs.items():
            with (series_dir / name).open("w", encoding="utf-8", newline="") as fh:
                writer(points, fh)
        return {"series": sorted(outputs)}

    def job_similarity(job: Job, params: dict) -> dict:
        from . import similarity as sim
        with open(params["predictions_path"], encoding="utf-8", newline="") as fh:
            predictions = classify.read_predictions_csv(fh)
        observations = pipeline.build_observations(config, predictions)
        cache = sim.EmbeddingCache(config.cache_dir, config.embed_provider)
        embeddings = cache.get_many([o.sentence_id for o in observations])
        publishers = sorted({o.publisher for o in observations})
        if len(publishers) != 2:
            raise ValidationError("similarity needs exactly two publishers")
        points = sim.similarity_series(embeddings, observations,
                                       (publishers[0], publishers[1]),
                                       seed=config.seed, sampling_cap=config.sampling_cap)
        series_dir = config.data_dir / "series"
        series_dir.mkdir(parents=True, exist_ok=True)
        with (series_dir / "similarity.csv").open("w", encoding="utf-8", newline="") as fh:
            sim.write_similarity_csv(points, fh)
        return {"points": len(points)}

    def _job_dir(job: Job) -> Path:
        path = config.data_dir / "jobs" / job.id
        path.mkdir(parents=True, exist_ok=True)
        job.log_path = str(path)
        return path

    runners = {"classify": job_classify, "evaluate": job_evaluate,
               "trends": job_trends, "similarity": job_similarity}

    @app.post("/jobs/{kind}")
    def submit_job(kind: str, body: JobBody, _=Depends(check_auth)):
        if kind not in JOB_KINDS:
            raise _error(422, "validation", f"unknown job kind {kind!r}", {"kinds": list(JOB_KINDS)})
        job = jobs.submit(kind, runners[kind], body.params)
        return job.view()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str, _=Depends(check_auth)):
        job = jobs.jobs.get(job_id)
        if job is None:
            raise _error(404, "not_found", f"no job {job_id!r}")
        return job.view()

    @app.get("/series/{name}.csv")
    def series(name: str, _=Depends(check_auth)):
        if name not in SERIES_FILES:
            raise _error(404, "not_found", f"unknown series {name!r}",
                         {"series": sorted(SERIES_FILES)})
        path = config.data_dir / "series" / SERIES_FILES[name]
        if not path.exists():
            raise _error(404, "not_found", f"series {name!r} not generated yet")
        return Response(content=path.read_text(encoding="utf-8"), media_type="text/csv")

    return app

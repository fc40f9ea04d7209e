import json
import time

import pytest
from fastapi.testclient import TestClient

from stancemon import annotation, classify, pipeline
from stancemon.service import create_app, interleave_overlap


@pytest.fixture
def served(pipeline_dir):
    config, labels_path = pipeline_dir
    units = pipeline.sampling_units(config)
    batch = annotation.sample_for_annotation(units, n=12, seed=1)
    batches = annotation.assign_batches(batch.sentence_ids, ["anna", "beth"],
                                        overlap_n=4, seed=1)
    config.annotation_dir.mkdir(parents=True, exist_ok=True)
    with (config.annotation_dir / "batches.json").open("w", encoding="utf-8") as fh:
        from dataclasses import asdict
        json.dump([asdict(b) for b in batches], fh)
    app = create_app(config)
    return config, labels_path, TestClient(app)


def wait_for_job(client, job_id, timeout=15.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        view = client.get(f"/jobs/{job_id}").json()
        if view["status"] in ("done", "failed"):
            return view
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} did not finish")


class TestAnnotationEndpoints:
    def test_next_then_submit_supportive(self, served):
        _, _, client = served
        task = client.get("/annotation/next", params={"annotator": "anna"}).json()
        assert set(task) >= {"sentence_id", "text", "done", "total",
                             "guideline_version", "allowed_ratings"}
        assert task["allowed_ratings"] == ["1", "2", "3", "4", "5", "Ambiguous"]
        resp = client.post("/annotation/submit", json={
            "sentence_id": task["sentence_id"], "annotator": "anna", "rating": 4})
        assert resp.status_code == 200
        assert resp.json()["label"] == "Supportive"

    def test_invalid_rating_rejected(self, served):
        _, _, client = served
        resp = client.post("/annotation/submit", json={
            "sentence_id": "x:0", "annotator": "anna", "rating": 7})
        assert resp.status_code == 422
        assert resp.json()["code"] == "validation"

    def test_same_task_until_submitted(self, served):
        _, _, client = served
        first = client.get("/annotation/next", params={"annotator": "anna"}).json()
        again = client.get("/annotation/next", params={"annotator": "anna"}).json()
        assert first["sentence_id"] == again["sentence_id"]

    def test_exhausted_queue_gives_204(self, served):
        _, _, client = served
        while True:
            resp = client.get("/annotation/next", params={"annotator": "anna"})
            if resp.status_code == 204:
                break
            task = resp.json()
            client.post("/annotation/submit", json={
                "sentence_id": task["sentence_id"], "annotator": "anna", "rating": 3})
        progress = client.get("/annotation/progress").json()
        anna = progress["annotators"]["anna"]
        assert anna["done"] == anna["assigned"]

    def test_durability_across_restart(self, served):
        config, _, client = served
        task = client.get("/annotation/next", params={"annotator": "anna"}).json()
        client.post("/annotation/submit", json={
            "sentence_id": task["sentence_id"], "annotator": "anna", "rating": 5})
        fresh = TestClient(create_app(config))
        progress = fresh.get("/annotation/progress").json()
        assert progress["annotators"]["anna"]["done"] == 1

    def test_supersession_keeps_one_live_record(self, served):
        _, _, client = served
        task = client.get("/annotation/next", params={"annotator": "anna"}).json()
        for rating in (2, 4):
            client.post("/annotation/submit", json={
                "sentence_id": task["sentence_id"], "annotator": "anna", "rating": rating})
        progress = client.get("/annotation/progress").json()
        assert progress["annotators"]["anna"]["done"] == 1

    def test_agreement_over_overlap(self, served):
        config, _, client = served
        batches = json.loads((config.annotation_dir / "batches.json").read_text())
        overlap = next(b for b in batches if b["overlap"])
        for sid in overlap["sentence_ids"]:
            for annotator in ("anna", "beth"):
                client.post("/annotation/submit", json={
                    "sentence_id": sid, "annotator": annotator, "rating": 2})
        report = client.get("/agreement").json()
        pair = next(p for p in report["pairs"]
                    if p["annotators"] == ["anna", "beth"])
        assert pair["variants"]["four_category"]["kappa"] == 1.0
        assert pair["variants"]["six_category"]["n"] == len(overlap["sentence_ids"])


class TestJobsAndSeries:
    def test_evaluate_job_lifecycle(self, served):
        _, labels_path, client = served
        resp = client.post("/jobs/evaluate", json={"params": {"labels_path": str(labels_path),
                                                              "k": 3}})
        assert resp.status_code == 200
        view = wait_for_job(client, resp.json()["id"])
        assert view["status"] == "done"
        assert 0.0 <= view["progress"]["macro_f1"] <= 1.0

    def test_unknown_job_kind(self, served):
        _, _, client = served
        resp = client.post("/jobs/frobnicate", json={"params": {}})
        assert resp.status_code == 422

    def test_unknown_job_id(self, served):
        _, _, client = served
        assert client.get("/jobs/nope").status_code == 404

    def test_trends_job_then_series(self, served, tmp_path):
        config, labels_path, client = served
        examples, _ = pipeline.load_labeled_csv(labels_path)
        model = classify.nb_train(examples)
        items = pipeline.sentence_texts(config, topical_only=True)
        preds = [classify.nb_predict(model, sid, text) for sid, text in items]
        preds_path = tmp_path / "preds.csv"
        with preds_path.open("w", newline="") as fh:
            classify.write_predictions_csv(preds, fh)

        assert client.get("/series/stance.csv").status_code == 404
        resp = client.post("/jobs/trends", json={
            "params": {"predictions_path": str(preds_path)}})
        view = wait_for_job(client, resp.json()["id"])
        assert view["status"] == "done", view
        series = client.get("/series/stance.csv")
        assert series.status_code == 200
        assert series.text.startswith("bucket,publisher,group,stance,count,share,empty")
        assert client.get("/series/fig1.csv").status_code == 200
        assert client.get("/series/unknown.csv").status_code == 404

    def test_similarity_job_from_cache(self, served, tmp_path):
        import numpy as np
        from stancemon.similarity import EmbeddingCache, EmbeddingVector
        config, labels_path, client = served
        examples, _ = pipeline.load_labeled_csv(labels_path)
        model = classify.nb_train(examples)
        items = pipeline.sentence_texts(config, topical_only=True)
        preds = [classify.nb_predict(model, sid, text) for sid, text in items]
        preds_path = tmp_path / "preds.csv"
        with preds_path.open("w", newline="") as fh:
            classify.write_predictions_csv(preds, fh)
        rng = np.random.default_rng(3)
        cache = EmbeddingCache(config.cache_dir, config.embed_provider)
        cache.put([
            EmbeddingVector(p.sentence_id, 6, tuple(rng.normal(size=6)), config.embed_provider)
            for p in preds
        ])
        resp = client.post("/jobs/similarity", json={
            "params": {"predictions_path": str(preds_path)}})
        view = wait_for_job(client, resp.json()["id"])
        assert view["status"] == "done", view
        assert view["progress"]["points"] > 0
        series = client.get("/series/similarity.csv")
        assert series.status_code == 200
        assert series.text.startswith("month,stance,mode,mean_cosine,pair_count,sampled")

    def test_classify_job_with_nb_model(self, served, tmp_path):
        config, labels_path, client = served
        examples, _ = pipeline.load_labeled_csv(labels_path)
        model = classify.nb_train(examples)
        model_path = tmp_path / "nb.json"
        model_path.write_text(model.to_json(), encoding="utf-8")
        resp = client.post("/jobs/classify", json={
            "params": {"backend": "nb", "model_path": str(model_path)}})
        view = wait_for_job(client, resp.json()["id"])
        assert view["status"] == "done", view
        assert view["progress"]["predictions"] > 0

    def test_failed_job_reports_error(self, served):
        _, _, client = served
        resp = client.post("/jobs/evaluate", json={"params": {"labels_path": "/nope.csv"}})
        view = wait_for_job(client, resp.json()["id"])
        assert view["status"] == "failed"
        assert view["error"]

    def test_extract_endpoint(self, served):
        _, _, client = served
        counts = client.post("/extract").json()
        assert counts["topical"] > 0


class TestStartupGuard:
    def test_corrupt_store_refuses_to_serve(self, pipeline_dir):
        from stancemon.errors import ValidationError
        config, _ = pipeline_dir
        config.annotation_dir.mkdir(parents=True, exist_ok=True)
        (config.annotation_dir / "annotations.log.jsonl").write_text(
            "{not valid json\n", encoding="utf-8")
        with pytest.raises(ValidationError, match="corrupt"):
            create_app(config)


class TestAuth:
    def test_token_required_when_configured(self, served, monkeypatch):
        config, _, _ = served
        monkeypatch.setenv(config.service_token_env, "sekret")
        client = TestClient(create_app(config))
        assert client.get("/annotation/progress").status_code == 401
        ok = client.get("/annotation/progress",
                        headers={"Authorization": "Bearer sekret"})
        assert ok.status_code == 200


class TestInterleave:
    def test_overlap_spread_through_queue(self):
        merged = interleave_overlap([f"m{i}" for i in range(6)], ["o1", "o2"])
        assert set(merged) == {f"m{i}" for i in range(6)} | {"o1", "o2"}
        assert len(merged) == 8
        assert merged.index("o1") < merged.index("o2")
        assert merged.index("o1") > 0

    def test_no_overlap(self):
        assert interleave_overlap(["a"], []) == ["a"]

    def test_only_overlap(self):
        assert interleave_overlap([], ["o1"]) == ["o1"]

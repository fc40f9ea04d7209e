import io

import pytest

from stancemon.config import PipelineConfig
from stancemon.corpus import ArticleStore, ingest_articles
from stancemon.fixtures import build_fixture, write_article_csv, write_labeled_csv
from stancemon.pipeline import extract_corpus


@pytest.fixture
def fixture_rows():
    return build_fixture(n_articles=20, seed=7)


@pytest.fixture
def pipeline_dir(tmp_path, fixture_rows):
    """A data directory with the 20-article fixture ingested and extracted."""
    articles, labeled = fixture_rows
    config = PipelineConfig(data_dir=tmp_path / "data")
    csv_path = tmp_path / "articles.csv"
    write_article_csv(csv_path, articles)
    store = ArticleStore(config.corpus_dir)
    with csv_path.open("rb") as fh:
        report = ingest_articles(fh, "csv", "MainstreamGroup", store,
                                 publisher_registry=config.publishers)
    assert report.accepted == len(articles), report.rejects
    extract_corpus(config)
    labels_path = tmp_path / "labels.csv"
    write_labeled_csv(labels_path, labeled)
    return config, labels_path


def make_stream(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode("utf-8"))


ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    reports = []
    for status in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") != "call" and status != "skipped":
                continue
            if "test_acceptance.py" in rep.nodeid:
                reports.append((rep.nodeid.split("::")[-1], status.upper()))
    if reports:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(set(reports)):
            terminalreporter.write_line(f"{status:8s} {name}")

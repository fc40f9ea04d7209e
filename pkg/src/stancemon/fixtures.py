"""Deterministic synthetic corpus for demos, smoke tests and the UI.

Twenty-odd short articles across two publishers, with topical sentences
drawn from labeled templates so a training set can be derived without
human annotation. One publisher has an Oct-Dec 2019 gap.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

from .config import DEFAULT_PUBLISHERS

# (sentence, stance label or None when non-topical / filtered out)
TEMPLATES = [
    ("Massiimmigratsioon oleks Euroopale hukatuslik ja ohtlik.", "Against"),
    ("Migrandid tuleb riigist kohe välja saata.", "Against"),
    ("Pagulased võtavad meie töökohad ära.", "Against"),
    ("Globalistide avatud piiride poliitika on läbi kukkunud.", "Against"),
    ("Sisseränne ohustab meie kultuuri püsimist.", "Against"),
    ("Valitsus arutas rändekriisi mõjusid majandusele.", "Neutral"),
    ("70% ettevõtte töötajatest on välismaalased.", "Neutral"),
    ("Statistikaamet avaldas sisserände kohta uued andmed.", "Neutral"),
    ("Parlament hääletas elamisloa reeglite muutmise üle.", "Neutral"),
    ("Välistudengid alustavad õppeaastat septembris.", "Neutral"),
    ("Protsess elamisluba saada ei olnud väga keeruline.", "Supportive"),
    ("Pagulaste abistamine on meie ühine kohustus.", "Supportive"),
    ("Välistööjõud aitab majandusel kasvada ja õitseda.", "Supportive"),
    ("Sisserändajad rikastavad meie ühiskonda mitmel moel.", "Supportive"),
    ("Moslemitest naabrid korraldasid toreda tänavapeo.", "Supportive"),
    ("Ilm oli täna erakordselt päikesepaisteline.", None),
    ("Koer jooksis pargis ringi ja mängis palliga.", None),
    ("Lindude ränne algas sel sügisel tavapärasest varem.", None),
    ("Kohalik korvpallimeeskond võitis eile tähtsa mängu.", None),
]

FIXTURE_MONTHS = [
    "2019-01", "2019-02", "2019-03", "2019-04", "2019-05", "2019-06",
    "2019-07", "2019-08", "2019-09", "2020-01", "2020-02", "2020-03",
]
GAP_MONTHS = ["2019-10", "2019-11", "2019-12"]


def build_fixture(n_articles: int = 20, seed: int = 7,
                  publishers: tuple[str, str] = tuple(DEFAULT_PUBLISHERS)):
    """Returns (article rows, labeled sentence rows).

    Article rows match the ingest CSV schema; labeled rows are
    (sentence_id, text, label) for every topical template instance.
    """
    rng = random.Random(seed)
    articles = []
    labeled = []
    for i in range(n_articles):
        publisher = publishers[i % 2]
        month = FIXTURE_MONTHS[i % len(FIXTURE_MONTHS)]
        day = 1 + rng.randrange(25)
        art_id = f"fx{i:03d}"
        k = 4 + rng.randrange(3)
        chosen = rng.sample(range(len(TEMPLATES)), k)
        body_sentences = [TEMPLATES[j][0] for j in chosen]
        for index, j in enumerate(chosen):
            text, label = TEMPLATES[j]
            if label is not None:
                labeled.append((f"{art_id}:{index}", text, label))
        articles.append({
            "id": art_id,
            "date": f"{month}-{day:02d}",
            "publisher": publisher,
            "periodical": "demo",
            "title": f"Artikkel {i}",
            "body": " ".join(body_sentences),
        })
    return articles, labeled


def write_article_csv(path: Path | str, articles: list[dict]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["id", "date", "publisher", "periodical", "title", "body"])
        writer.writeheader()
        writer.writerows(articles)


def write_labeled_csv(path: Path | str, labeled: list[tuple[str, str, str]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sentence_id", "text", "label"])
        writer.writerows(labeled)

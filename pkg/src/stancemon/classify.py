"""Classifier backends behind one prediction contract.

Three routes: a native multinomial Naive Bayes baseline, an HTTP client for
externally fine-tuned models, and a zero-shot chat-model client that sends
numbered sentence batches and strictly validates the returned tags,
re-requesting bad batches up to a retry limit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import re
import time
from collections import Counter
from dataclasses import dataclass, asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import httpx

from .annotation import STANCE_CLASSES
from .errors import BackendError, TransportError, ValidationError

PROB_TOLERANCE = 1e-9
REMOTE_SUM_TOLERANCE = 1e-6

DEFAULT_INSTRUCTION = (
    'Stance detection. Tag the following numbered sentences as being either '
    '"supportive", "against" or "neutral" towards the topic of immigration. '
    '"Supportive" means: "supports immigration, friendly to foreigners, wants '
    'to help refugees and asylum seekers". "Against" means: "against '
    'immigration, dislikes foreigners, dislikes refugees and asylum seekers, '
    'dislikes people who help immigrants". "Neutral" means: "neutral stance, '
    'neutral facts about immigration, neutral reporting about foreigners, '
    'refugees, asylum seekers". Don\'t explain, output only sentence number '
    'and stance tag.'
)

TAG_TO_LABEL = {"against": "Against", "neutral": "Neutral", "supportive": "Supportive"}

PREDICTION_CSV_HEADER = [
    "sentence_id", "p_against", "p_neutral", "p_supportive", "label", "backend", "model_version",
]


@dataclass(frozen=True)
class Prediction:
    sentence_id: str
    probs: dict[str, float]
    label: str
    backend: str
    model_version: str
    has_distribution: bool = True

    def __post_init__(self):
        if set(self.probs) != set(STANCE_CLASSES):
            raise ValidationError(f"probs must cover {STANCE_CLASSES}, got {sorted(self.probs)}")
        if any(p < 0 for p in self.probs.values()):
            raise ValidationError(f"negative probability in {self.probs}")
        total = sum(self.probs.values())
        if abs(total - 1.0) > PROB_TOLERANCE:
            raise ValidationError(f"probabilities sum to {total}, not 1")
        if self.label != argmax_label(self.probs):
            raise ValidationError(
                f"label {self.label!r} is not the argmax of {self.probs}"
            )

    @property
    def max_prob(self) -> float:
        return max(self.probs.values())


def argmax_label(probs: dict[str, float]) -> str:
    best = max(probs.values())
    for cls in STANCE_CLASSES:  # tie-break: Against < Neutral < Supportive
        if probs[cls] == best:
            return cls
    raise ValidationError("empty probability map")


def make_prediction(
    sentence_id: str,
    probs: Sequence[float] | dict[str, float],
    backend: str,
    model_version: str,
    has_distribution: bool = True,
) -> Prediction:
    if not isinstance(probs, dict):
        probs = dict(zip(STANCE_CLASSES, probs))
    return Prediction(
        sentence_id=sentence_id,
        probs=dict(probs),
        label=argmax_label(probs),
        backend=backend,
        model_version=model_version,
        has_distribution=has_distribution,
    )


def one_hot_prediction(sentence_id: str, label: str, backend: str, model_version: str) -> Prediction:
    probs = {cls: (1.0 if cls == label else 0.0) for cls in STANCE_CLASSES}
    return make_prediction(sentence_id, probs, backend, model_version, has_distribution=False)


@dataclass(frozen=True)
class PredictionFailure:
    sentence_id: str
    reason: str
    attempts: int = 1


@dataclass(frozen=True)
class LabeledExample:
    sentence_id: str
    text: str
    label: str

    def __post_init__(self):
        if self.label not in STANCE_CLASSES:
            raise ValidationError(f"untrainable label: {self.label!r}")


# --- Naive Bayes -----------------------------------------------------------

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
MIN_TOKEN_LEN = 2


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop tokens shorter than 2."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= MIN_TOKEN_LEN]


@dataclass
class NBModel:
    alpha: float
    vocabulary: dict[str, int]
    class_token_counts: dict[str, dict[str, int]]
    class_totals: dict[str, int]
    log_priors: dict[str, float]
    version: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NBModel":
        return cls(**json.loads(text))


def _model_version(content: dict) -> str:
    blob = json.dumps(content, ensure_ascii=False, sort_keys=True).encode("utf-8")
    return "nb-" + hashlib.sha256(blob).hexdigest()[:12]


def nb_train(examples: Sequence[LabeledExample], alpha: float = 1.0) -> NBModel:
    """Fit a multinomial bag-of-words model with add-alpha smoothing."""
    if alpha <= 0:
        raise ValidationError(f"alpha must be positive, got {alpha}")
    by_class = Counter(ex.label for ex in examples)
    missing = [cls for cls in STANCE_CLASSES if by_class[cls] == 0]
    if missing:
        raise ValidationError(f"no training examples for class(es): {', '.join(missing)}")
    token_counts = {cls: Counter() for cls in STANCE_CLASSES}
    for ex in examples:
        token_counts[ex.label].update(tokenize(ex.text))
    vocabulary = sorted(set().union(*(token_counts[c] for c in STANCE_CLASSES)))
    n = len(examples)
    content = {
        "alpha": alpha,
        "vocabulary": {tok: i for i, tok in enumerate(vocabulary)},
        "class_token_counts": {
            cls: dict(sorted(token_counts[cls].items())) for cls in STANCE_CLASSES},
        "class_totals": {cls: sum(token_counts[cls].values()) for cls in STANCE_CLASSES},
        "log_priors": {cls: math.log(by_class[cls] / n) for cls in STANCE_CLASSES},
    }
    return NBModel(**content, version=_model_version(content))


def nb_predict(model: NBModel, sentence_id: str, text: str) -> Prediction:
    """Log-space posterior over the three classes, normalized to probabilities.

    Out-of-vocabulary tokens carry no evidence, so a sentence of only unseen
    tokens falls back to the class priors.
    """
    tokens = [t for t in tokenize(text) if t in model.vocabulary]
    vocab_size = len(model.vocabulary)
    scores = {}
    for cls in STANCE_CLASSES:
        counts = model.class_token_counts[cls]
        denom = model.class_totals[cls] + model.alpha * vocab_size
        score = model.log_priors[cls]
        for tok in tokens:
            score += math.log((counts.get(tok, 0) + model.alpha) / denom)
        scores[cls] = score
    peak = max(scores.values())
    weights = {cls: math.exp(s - peak) for cls, s in scores.items()}
    total = sum(weights.values())
    probs = {cls: w / total for cls, w in weights.items()}
    return make_prediction(sentence_id, probs, backend="nb", model_version=model.version)


class NBBackend:
    """Trainable backend adapter used by cross-validation."""

    name = "nb"

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha
        self.model: Optional[NBModel] = None

    def fit(self, examples: Sequence[LabeledExample]) -> None:
        self.model = nb_train(examples, alpha=self.alpha)

    def predict(self, items: Sequence[tuple[str, str]]) -> list[Prediction]:
        if self.model is None:
            raise BackendError("NBBackend.predict called before fit")
        return [nb_predict(self.model, sid, text) for sid, text in items]


# --- Zero-shot prompt protocol ----------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    instruction: str = DEFAULT_INSTRUCTION
    batch_size: int = 10

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        lowered = self.instruction.lower()
        for tag in TAG_TO_LABEL:
            if tag not in lowered:
                raise ValidationError(f"instruction does not define the {tag!r} label")


def build_prompt(template: PromptTemplate, batch: Sequence[str]) -> str:
    """Instruction plus 1-based numbered sentences, one per line."""
    if not batch:
        raise ValidationError("empty batch")
    if len(batch) > template.batch_size:
        raise ValidationError(f"batch of {len(batch)} exceeds batch size {template.batch_size}")
    lines = [f"{i}. {text}" for i, text in enumerate(batch, start=1)]
    return template.instruction + "\n\n" + "\n".join(lines)


class InvalidTagError(BackendError):
    def __init__(self, lines: list[str]):
        super().__init__(f"invalid stance tags in response: {lines}")
        self.lines = lines


class CountMismatchError(BackendError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"expected {expected} tagged sentences, found {found}")
        self.found = found
        self.expected = expected


_RESPONSE_LINE_RE = re.compile(r"^\s*(\d+)\s*[.):\-]?\s*(.+?)\s*$")


def _normalize_tag(raw: str) -> Optional[str]:
    tag = raw.strip().strip("\"'").rstrip(".").strip().lower()
    return TAG_TO_LABEL.get(tag)


def parse_llm_response(text: str, expected_n: int) -> list[str]:
    """Extract (number, tag) pairs; valid only when numbers are exactly
    1..expected_n and every tag maps into the canonical label set."""
    pairs: list[tuple[int, Optional[str]]] = []
    bad_lines: list[str] = []
    for line in text.splitlines():
        m = _RESPONSE_LINE_RE.match(line)
        if not m:
            continue
        label = _normalize_tag(m.group(2))
        if label is None:
            bad_lines.append(line.strip())
        pairs.append((int(m.group(1)), label))
    if bad_lines:
        raise InvalidTagError(bad_lines)
    if len(pairs) != expected_n or sorted(n for n, _ in pairs) != list(range(1, expected_n + 1)):
        raise CountMismatchError(len(pairs), expected_n)
    by_number = {n: label for n, label in pairs}
    return [by_number[i] for i in range(1, expected_n + 1)]


# --- HTTP clients ------------------------------------------------------------

@dataclass
class ChatEndpointConfig:
    base_url: str
    model: str = "gpt-3.5-turbo"
    temperature: float = 0.0
    token_env: str = "STANCEMON_CHAT_TOKEN"
    timeout: float = 30.0
    transport_retries: int = 3
    backoff_base: float = 0.5
    parse_retry_limit: int = 5
    audit_path: Optional[Path] = None


@dataclass
class RemoteEndpointConfig:
    url: str
    model: str = "finetuned"
    max_batch: int = 32
    timeout: float = 30.0
    transport_retries: int = 3
    backoff_base: float = 0.5


def _auth_headers(token_env: str) -> dict[str, str]:
    token = os.environ.get(token_env, "")
    return {"Authorization": f"Bearer {token}"} if token else {}


def _post_with_retries(
    client: httpx.Client, url: str, payload: dict, headers: dict,
    retries: int, backoff_base: float,
) -> httpx.Response:
    last_exc: Optional[Exception] = None
    for attempt in range(retries):
        try:
            resp = client.post(url, json=payload, headers=headers)
            resp.raise_for_status()
            return resp
        except (httpx.TransportError, httpx.HTTPStatusError) as exc:
            last_exc = exc
            if attempt + 1 < retries:
                time.sleep(backoff_base * (2 ** attempt))
    raise TransportError(f"request to {url} failed after {retries} attempts: {last_exc}")


class ChatCompletionClient:
    """Minimal chat-completion wire client with an audit trail."""

    def __init__(self, config: ChatEndpointConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)

    def complete(self, prompt: str) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        resp = _post_with_retries(
            self._client, self.config.base_url, payload,
            _auth_headers(self.config.token_env),
            self.config.transport_retries, self.config.backoff_base,
        )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed chat response: {exc}") from exc

    def audit(self, entry: dict) -> None:
        if self.config.audit_path is None:
            return
        entry = {"ts": datetime.now(timezone.utc).isoformat(), **entry}
        path = Path(self.config.audit_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, ensure_ascii=False) + "\n")

    def close(self) -> None:
        self._client.close()


def zeroshot_classify(
    client: ChatCompletionClient,
    template: PromptTemplate,
    sentences: Sequence[tuple[str, str]],
) -> tuple[list[Prediction], list[PredictionFailure]]:
    """Classify sentences in prompt batches, re-requesting invalid responses.

    Every input ends up in exactly one of the two outputs. Labels come back
    as one-hot predictions (the chat model returns no distribution).
    """
    predictions: list[Prediction] = []
    failures: list[PredictionFailure] = []
    limit = client.config.parse_retry_limit
    for batch_start in range(0, len(sentences), template.batch_size):
        batch = sentences[batch_start:batch_start + template.batch_size]
        texts = [text for _, text in batch]
        prompt = build_prompt(template, texts)
        labels: Optional[list[str]] = None
        reason = "retry limit exhausted"
        attempt = 0
        for attempt in range(1, limit + 1):
            entry = {"batch_start": batch_start, "attempt": attempt}
            if attempt == 1:
                entry["request"] = prompt
            try:
                content = client.complete(prompt)
            except TransportError as exc:
                reason = str(exc)
                client.audit({**entry, "outcome": "transport_error", "detail": str(exc)})
                break
            entry["response"] = content
            try:
                labels = parse_llm_response(content, expected_n=len(batch))
                client.audit({**entry, "outcome": "ok"})
                break
            except (InvalidTagError, CountMismatchError) as exc:
                reason = f"retry limit exhausted: {exc}"
                client.audit({**entry, "outcome": type(exc).__name__, "detail": str(exc)})
        if labels is None:
            failures.extend(
                PredictionFailure(sid, reason=reason, attempts=attempt) for sid, _ in batch
            )
        else:
            predictions.extend(
                one_hot_prediction(sid, label, backend="zeroshot", model_version=client.config.model)
                for (sid, _), label in zip(batch, labels)
            )
    return predictions, failures


class RemoteClient:
    """Client for an external fine-tuned-model inference endpoint."""

    def __init__(self, config: RemoteEndpointConfig, transport: Optional[httpx.BaseTransport] = None):
        self.config = config
        self._client = httpx.Client(transport=transport, timeout=config.timeout)

    def predict(
        self, sentences: Sequence[tuple[str, str]]
    ) -> tuple[list[Prediction], list[PredictionFailure]]:
        """One prediction per input, order preserved; responses that break
        the probability contract become per-sentence failures."""
        if len(sentences) > self.config.max_batch:
            raise ValidationError(
                f"batch of {len(sentences)} exceeds configured max {self.config.max_batch}"
            )
        payload = {"model": self.config.model, "sentences": [text for _, text in sentences]}
        resp = _post_with_retries(
            self._client, self.config.url, payload, {},
            self.config.transport_retries, self.config.backoff_base,
        )
        try:
            body = resp.json()
            model_version = body["model_version"]
            rows = body["predictions"]
        except (KeyError, ValueError) as exc:
            raise BackendError(f"malformed inference response: {exc}") from exc
        if len(rows) != len(sentences):
            raise BackendError(f"endpoint returned {len(rows)} predictions for {len(sentences)} inputs")
        predictions, failures = [], []
        for (sid, _), row in zip(sentences, rows):
            try:
                probs = {
                    "Against": float(row["against"]),
                    "Neutral": float(row["neutral"]),
                    "Supportive": float(row["supportive"]),
                }
            except (KeyError, TypeError, ValueError) as exc:
                failures.append(PredictionFailure(sid, reason=f"malformed row: {exc}"))
                continue
            total = sum(probs.values())
            if abs(total - 1.0) > REMOTE_SUM_TOLERANCE or any(p < 0 for p in probs.values()):
                failures.append(
                    PredictionFailure(sid, reason=f"probabilities sum to {total:.6f}, not 1")
                )
                continue
            normalized = {cls: p / total for cls, p in probs.items()}
            predictions.append(
                make_prediction(sid, normalized, backend="remote", model_version=str(model_version))
            )
        return predictions, failures

    def close(self) -> None:
        self._client.close()


# --- Fine-tuning config artifact ---------------------------------------------

@dataclass(frozen=True)
class TrainingConfig:
    base_model: str
    batch_size: int
    learning_rate: float
    epochs: int
    warmup_ratio: float
    max_tokens: int

    def __post_init__(self):
        numbers = (self.batch_size, self.learning_rate, self.epochs, self.warmup_ratio, self.max_tokens)
        if any(v <= 0 for v in numbers):
            raise ValidationError("training hyperparameters must be positive")


TRAINING_CONFIGS = {
    "default": TrainingConfig("default", 16, 5e-5, 2, 0.1, 512),
    "xlm-roberta": TrainingConfig("xlm-roberta", 16, 5e-6, 5, 0.1, 512),
}


def emit_training_config(model_name: str) -> TrainingConfig:
    """Hyperparameter set for an external fine-tuning run (never executed here)."""
    try:
        return TRAINING_CONFIGS[model_name]
    except KeyError:
        raise ValidationError(
            f"unknown training config {model_name!r}; choose from {sorted(TRAINING_CONFIGS)}"
        ) from None


# --- Prediction file I/O ------------------------------------------------------

def write_predictions_csv(predictions: Iterable[Prediction], fh) -> int:
    writer = csv.writer(fh)
    writer.writerow(PREDICTION_CSV_HEADER)
    count = 0
    for pred in predictions:
        writer.writerow([
            pred.sentence_id,
            repr(pred.probs["Against"]),
            repr(pred.probs["Neutral"]),
            repr(pred.probs["Supportive"]),
            pred.label, pred.backend, pred.model_version,
        ])
        count += 1
    return count


def read_predictions_csv(fh) -> list[Prediction]:
    reader = csv.DictReader(fh)
    missing = [c for c in PREDICTION_CSV_HEADER if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"prediction CSV is missing columns: {', '.join(missing)}")
    out = []
    for row in reader:
        probs = {
            "Against": float(row["p_against"]),
            "Neutral": float(row["p_neutral"]),
            "Supportive": float(row["p_supportive"]),
        }
        out.append(Prediction(
            sentence_id=row["sentence_id"],
            probs=probs,
            label=row["label"],
            backend=row["backend"],
            model_version=row["model_version"],
            has_distribution=row["backend"] != "zeroshot",
        ))
    return out

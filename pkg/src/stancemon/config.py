"""Pipeline configuration and run manifests.

Config files are flat TOML-style key = value documents (strings, numbers,
booleans and string lists). Secrets never live in the file: the config
names environment variables and the values come from the environment.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field, asdict
from datetime import date
from pathlib import Path
from typing import Any, Optional

from .errors import ValidationError

DEFAULT_PUBLISHERS = ["MainstreamGroup", "RadicalRightPortal"]


def parse_config_text(text: str) -> dict[str, Any]:
    values: dict[str, Any] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config line {line_no} is not key = value: {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = _parse_value(value.strip(), line_no)
    return values


def _parse_value(text: str, line_no: int) -> Any:
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_scalar(part.strip(), line_no) for part in inner.split(",")]
    return _parse_scalar(text, line_no)


def _parse_scalar(text: str, line_no: int) -> Any:
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"config line {line_no}: cannot parse value {text!r}") from None


@dataclass
class PipelineConfig:
    data_dir: Path = Path("data")
    lexicon_path: Optional[Path] = None
    publishers: list[str] = field(default_factory=lambda: list(DEFAULT_PUBLISHERS))
    languages: Optional[list[str]] = field(default_factory=lambda: ["et"])
    window_start: Optional[date] = None
    window_end: Optional[date] = None
    seed: int = 42
    tau: float = 0.70
    nb_alpha: float = 1.0
    retry_limit: int = 5
    sampling_cap: int = 500
    guideline_version: str = "v1"
    remote_url: str = ""
    remote_model: str = "finetuned"
    chat_url: str = ""
    chat_model: str = "gpt-3.5-turbo"
    chat_temperature: float = 0.0
    chat_token_env: str = "STANCEMON_CHAT_TOKEN"
    embed_url: str = ""
    embed_provider: str = "sbert"
    embed_batch_limit: int = 100
    embed_token_env: str = "STANCEMON_EMBED_TOKEN"
    service_token_env: str = "STANCEMON_SERVICE_TOKEN"

    def __post_init__(self):
        if not (1.0 / 3.0 < self.tau <= 1.0):
            raise ValidationError(f"tau must be in (1/3, 1], got {self.tau}")
        if self.retry_limit < 1 or self.sampling_cap < 1:
            raise ValidationError("retry_limit and sampling_cap must be >= 1")

    @classmethod
    def from_file(cls, path: Path | str) -> "PipelineConfig":
        raw = parse_config_text(Path(path).read_text(encoding="utf-8"))
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key in ("data_dir", "lexicon_path"):
                kwargs[key] = Path(value) if value else None
            elif key in ("window_start", "window_end"):
                kwargs[key] = date.fromisoformat(value) if value else None
            elif key == "languages":
                kwargs[key] = list(value) if value else None
            elif key in cls.__dataclass_fields__:
                kwargs[key] = value
            else:
                raise ValidationError(f"unknown config key: {key!r}")
        if kwargs.get("data_dir") is None:
            kwargs.pop("data_dir", None)
        return cls(**kwargs)

    def to_jsonable(self) -> dict[str, Any]:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, Path):
                out[key] = str(value)
            elif isinstance(value, date):
                out[key] = value.isoformat()
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.to_jsonable(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    # Derived layout under the data directory.
    @property
    def corpus_dir(self) -> Path:
        return self.data_dir / "corpus"

    @property
    def extract_dir(self) -> Path:
        return self.data_dir / "extract"

    @property
    def annotation_dir(self) -> Path:
        return self.data_dir / "annotation"

    @property
    def cache_dir(self) -> Path:
        return self.data_dir / "cache"

    @property
    def sentences_path(self) -> Path:
        return self.extract_dir / "sentences.jsonl"

    @property
    def hits_path(self) -> Path:
        return self.extract_dir / "hits.jsonl"


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


class ManifestWriter:
    """Records config hash, seeds, input digests and outputs for one run."""

    def __init__(self, out_dir: Path, command: str, config: PipelineConfig, seed: Optional[int]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.data = {
            "command": command,
            "config_hash": config.config_hash(),
            "seed": seed,
            "inputs": {},
            "outputs": [],
        }

    def add_input(self, path: Path) -> None:
        path = Path(path)
        if path.exists() and path.is_file():
            self.data["inputs"][str(path)] = file_digest(path)

    def add_output(self, path: Path) -> None:
        self.data["outputs"].append(Path(path).name)

    def write(self) -> Path:
        self.data["duration_s"] = round(time.time() - self.started, 3)
        target = self.out_dir / "manifest.json"
        with target.open("w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return target


def lint_outputs(out_dir: Path | str) -> list[str]:
    """Names of files in a run directory not referenced by its manifest."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        return [p.name for p in out_dir.iterdir() if p.is_file()]
    with manifest_path.open(encoding="utf-8") as fh:
        listed = set(json.load(fh)["outputs"])
    return sorted(
        p.name for p in out_dir.iterdir()
        if p.is_file() and p.name != "manifest.json" and p.name not in listed
    )

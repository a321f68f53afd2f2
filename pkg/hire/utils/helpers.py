import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import click
import numpy as np

from hire.utils.errors import ParseError, ValidationError

_MARKERS = {"ok": "✅", "error": "❌", "warn": "⚠️", "info": "🔄"}

RNG_STREAMS = ("init", "dropout", "generator", "attention", "kmeans")


def log_line(tag: str, message: str, level: str = "info"):
    click.echo(f"{_MARKERS.get(level, '🔄')} [{tag}] {message}", err=True)


def rng_streams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent generators derived from one seed, one per concern."""
    children = np.random.SeedSequence(int(seed)).spawn(len(RNG_STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(RNG_STREAMS, children)}


def read_json(path) -> Any:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"file not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed JSON in {path}: {e}") from e


def dumps_json(doc: Any, compact: bool = False) -> str:
    # repr-based float output round-trips every float64 exactly
    if compact:
        return json.dumps(doc, separators=(",", ":"), ensure_ascii=False)
    return json.dumps(doc, indent=2, ensure_ascii=False)


def write_json(path, doc: Any, compact: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(doc, compact=compact) + "\n", encoding="utf-8")
    return path


def format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    if value is None:
        return ""
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def stable_hash(doc: Any, length: int = 16) -> str:
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:length]

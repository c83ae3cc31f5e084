"""Render final datasets into training text and compute batch/token accounting."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .pipeline import QaRecord

ALPACA_SYSTEM_LINE = (
    "Below is an instruction from a USER that describes a task. "
    "The ASSISTANT writes a response that appropriately and concisely completes the request."
)

TEMPLATE_NAMES = ("alpaca", "role_json")


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ChatTemplate:
    name: str = "alpaca"
    system_line: str = ALPACA_SYSTEM_LINE

    def __post_init__(self):
        if self.name not in TEMPLATE_NAMES:
            raise ExportError(f"unknown template {self.name!r} (expected one of {TEMPLATE_NAMES})")


@dataclass(frozen=True)
class BatchStats:
    """Token accounting for packed training batches."""

    records_per_batch: int
    seq_len: int
    tokens_per_batch: int
    batches_per_epoch: int
    records_total: int


def render_alpaca(record: "QaRecord", system_line: str = ALPACA_SYSTEM_LINE) -> str:
    """Render one record as alpaca chat text, substituted verbatim (no escaping)."""
    return f"SYSTEM: {system_line}\nUSER: {record.question}\nASSISTANT: {record.answer}"


def render_role_json(record: "QaRecord") -> dict:
    return {
        "messages": [
            {"role": "user", "content": record.question},
            {"role": "assistant", "content": record.answer},
        ],
        "record_id": record.record_id,
    }


def export_jsonl(
    records: Iterable["QaRecord"],
    template: ChatTemplate,
    path: str | Path,
) -> dict:
    """Write one JSON object per record to ``path`` plus a sidecar manifest.

    Returns the manifest dict: {count, sha256, template, created_at}.
    The sha256 covers the dataset file, so identical inputs re-export to an
    identical hash regardless of when the export ran.
    """
    records = list(records)
    if not records:
        raise ExportError("nothing to export: record list is empty")
    path = Path(path)
    lines = []
    for rec in records:
        if template.name == "alpaca":
            obj = {"text": render_alpaca(rec, template.system_line), "record_id": rec.record_id}
        else:
            obj = render_role_json(rec)
        lines.append(json.dumps(obj, ensure_ascii=False))
    content = "\n".join(lines) + "\n"
    path.write_text(content, encoding="utf-8", newline="\n")
    manifest = {
        "count": len(records),
        "sha256": hashlib.sha256(content.encode("utf-8")).hexdigest(),
        "template": template.name,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    manifest_path = path.with_name(path.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def batch_token_stats(n_records: int, records_per_batch: int, seq_len: int) -> BatchStats:
    """Tokens per packed batch and batches per epoch (ceil division)."""
    if n_records <= 0 or records_per_batch <= 0 or seq_len <= 0:
        raise ExportError("n_records, records_per_batch and seq_len must all be positive")
    return BatchStats(
        records_per_batch=records_per_batch,
        seq_len=seq_len,
        tokens_per_batch=records_per_batch * seq_len,
        batches_per_epoch=math.ceil(n_records / records_per_batch),
        records_total=n_records,
    )

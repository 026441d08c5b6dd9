"""Report documents and delimited output."""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path
from typing import Any, Iterable

REPORT_FORMAT = "chaincheck-report/1"

__all__ = ["REPORT_FORMAT", "report_document", "write_json", "write_csv"]


def report_document(command: str, inputs: dict, results: dict, started: float | None = None) -> dict:
    doc = {
        "format": REPORT_FORMAT,
        "command": command,
        "inputs": inputs,
        "results": results,
    }
    if started is not None:
        doc["timing"] = {"elapsed_s": round(time.monotonic() - started, 3)}
    return doc


def write_json(doc: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_csv(path: str | Path, header: Iterable[str], rows: Iterable[Iterable[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))
    return path

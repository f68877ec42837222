"""Persisted outputs: per-round CSV, summary JSON and run manifests."""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .config import config_to_dict
from .engine import ClientEntry, ExperimentConfig, RoundRecord
from .metrics import summarize

CSV_COLUMNS = (
    "round",
    "client",
    "train_loss",
    "val_loss",
    "adjusted_loss",
    "received_count",
    "received_from",
    "accuracy",
    "precision",
    "recall",
    "f1",
)
METRICS = ("accuracy", "precision", "recall", "f1")
LOSSES = ("train_loss", "val_loss", "adjusted_loss")

MANIFEST_NAME = "manifest.json"
ROUNDS_NAME = "rounds.csv"
SUMMARY_NAME = "summary.json"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def write_rounds_csv(records: Sequence[RoundRecord], path: str | Path) -> None:
    if not records:
        raise ValueError("no round records to write")
    rows = sorted(
        ((rec.round, e) for rec in records for e in rec.entries),
        key=lambda item: (item[0], item[1].client_id),
    )
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for t, e in rows:
            writer.writerow(
                [
                    t,
                    e.client_id,
                    _fmt(e.train_loss),
                    _fmt(e.val_loss),
                    _fmt(e.adjusted_loss),
                    e.received_count,
                    "|".join(str(i) for i in e.received_from),
                    _fmt(e.accuracy),
                    _fmt(e.precision),
                    _fmt(e.recall),
                    _fmt(e.f1),
                ]
            )


def read_rounds_csv(path: str | Path) -> list[RoundRecord]:
    by_round: dict[int, list[ClientEntry]] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            received = tuple(int(i) for i in row["received_from"].split("|") if i)
            if len(received) != int(row["received_count"]):
                raise ValueError(f"{path}: received_count disagrees with received_from")
            entry = ClientEntry(
                int(row["client"]),
                float(row["train_loss"]),
                float(row["val_loss"]),
                float(row["adjusted_loss"]),
                received,
                *(float(row[m]) for m in METRICS),
            )
            by_round.setdefault(int(row["round"]), []).append(entry)
    return [
        RoundRecord(t, tuple(sorted(entries, key=lambda e: e.client_id)))
        for t, entries in sorted(by_round.items())
    ]


def summary_table(records: Sequence[RoundRecord], round_index: int | None = None) -> dict[str, Any]:
    """Mean and sample std across clients for one round (the last by default)."""
    if not records:
        raise ValueError("no round records to summarize")
    if round_index is None:
        record = records[-1]
    else:
        matches = [r for r in records if r.round == round_index]
        if not matches:
            raise ValueError(f"round {round_index} not present")
        record = matches[0]
    table: dict[str, Any] = {"grouping": "clients", "round": record.round, "clients": len(record.entries)}
    for name in METRICS + LOSSES:
        mean, std = summarize([getattr(e, name) for e in record.entries])
        table[name] = {"mean": mean, "std": std}
    table["deliveries"] = sum(e.received_count for e in record.entries)
    return table


def write_summary(records: Sequence[RoundRecord], path: str | Path) -> dict[str, Any]:
    table = summary_table(records)
    table["total_deliveries"] = sum(e.received_count for r in records for e in r.entries)
    Path(path).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")
    return table


def write_manifest(config: ExperimentConfig, directory: str | Path) -> Path:
    directory = Path(directory)
    manifest = {
        "artifact": "lossdfl",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config": config_to_dict(config),
        "outputs": {"rounds": ROUNDS_NAME, "summary": SUMMARY_NAME},
    }
    path = directory / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


def format_table(table: dict[str, Any]) -> str:
    lines = [f"round {table['round']}, mean +- std across {table['clients']} {table['grouping']}"]
    for name in METRICS + LOSSES:
        stats = table[name]
        lines.append(f"  {name:<14}{stats['mean']:.4f} +- {stats['std']:.4f}")
    return "\n".join(lines)

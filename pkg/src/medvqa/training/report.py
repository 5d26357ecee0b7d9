"""Learning-curve and accuracy-table artifacts."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

CURVE_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass(frozen=True)
class CurveRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass(frozen=True)
class ReportRow:
    """One accuracy-table line: which encoder pair scored what."""

    image_encoder: str
    text_encoder: str
    val_accuracy: float | None
    test_accuracy: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ReportRow, ...]
    curves: tuple[CurveRow, ...]


def write_curves(rows: Sequence[CurveRow], path) -> None:
    """Write per-epoch metrics as CSV; floats keep full round-trip precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.epoch,
                    repr(float(row.train_loss)),
                    repr(float(row.train_acc)),
                    repr(float(row.val_loss)),
                    repr(float(row.val_acc)),
                ]
            )


def read_curves(path) -> tuple[CurveRow, ...]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for rec in reader:
            rows.append(
                CurveRow(
                    epoch=int(rec["epoch"]),
                    train_loss=float(rec["train_loss"]),
                    train_acc=float(rec["train_acc"]),
                    val_loss=float(rec["val_loss"]),
                    val_acc=float(rec["val_acc"]),
                )
            )
    return tuple(rows)


def _fmt_pct(value: float | None) -> str:
    return "N/A" if value is None else f"{value * 100:.2f}%"


def compile_report(
    rows: Sequence[ReportRow], csv_path=None, text_path=None
) -> str:
    """Render an accuracy table; best test accuracy flagged (ties all flagged).

    Returns the plain-text table. When paths are given, also writes the CSV
    (columns image_encoder,text_encoder,val_accuracy,test_accuracy,best) and
    the text rendering.
    """
    if not rows:
        raise ValueError("report needs at least one run")
    best = max(row.test_accuracy for row in rows)
    flags = [row.test_accuracy == best for row in rows]

    if csv_path is not None:
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["image_encoder", "text_encoder", "val_accuracy", "test_accuracy", "best"])
            for row, flag in zip(rows, flags):
                writer.writerow(
                    [
                        row.image_encoder,
                        row.text_encoder,
                        "" if row.val_accuracy is None else repr(float(row.val_accuracy)),
                        repr(float(row.test_accuracy)),
                        "*" if flag else "",
                    ]
                )

    headers = ("Image Encoder", "Text Encoder", "Val Accuracy", "Test Accuracy", "Best")
    cells = [
        (
            row.image_encoder,
            row.text_encoder,
            _fmt_pct(row.val_accuracy),
            _fmt_pct(row.test_accuracy),
            "*" if flag else "",
        )
        for row, flag in zip(rows, flags)
    ]
    widths = [max(len(h), *(len(c[i]) for c in cells)) for i, h in enumerate(headers)]
    out = io.StringIO()
    out.write("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for c in cells:
        out.write("  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip() + "\n")
    text = out.getvalue()
    if text_path is not None:
        Path(text_path).write_text(text, encoding="utf-8")
    return text

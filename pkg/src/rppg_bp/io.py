"""On-disk formats shared by the command-line stages.

* windows JSONL: one selected 5-beat window per line, beats zero-padded to 512
* labels JSONL: cuff reference and rhythm per session
* predictions CSV: per-session estimates
* screen log CSV: every session's screening outcome and counts
"""

from __future__ import annotations

import csv
import json
from collections import OrderedDict

import numpy as np

from .beats import PAD_LENGTH, WINDOW_BEATS, BeatWindow, SessionResult

WINDOWS_FORMAT_VERSION = 1


def window_record(session_id: str, w: BeatWindow, pad: int = PAD_LENGTH) -> dict:
    return {
        "format_version": WINDOWS_FORMAT_VERSION,
        "session_id": session_id,
        "start_beat_index": int(w.start_beat_index),
        "mean_sqi": float(w.mean_sqi),
        "beats": w.to_array(pad).tolist(),
    }


def write_windows_jsonl(fh, session_id: str, result: SessionResult, pad: int = PAD_LENGTH) -> None:
    for w in result.windows:
        fh.write(json.dumps(window_record(session_id, w, pad)) + "\n")


def read_windows_jsonl(path, per_session: int | None = None):
    """Return ``OrderedDict session_id -> array [k, 5, 512]`` in file order.

    ``per_session`` keeps only the first (best-ranked) windows of each session.
    """
    out: OrderedDict = OrderedDict()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc.get("format_version") != WINDOWS_FORMAT_VERSION:
                raise ValueError(f"{path}:{lineno}: unsupported windows format_version "
                                 f"{doc.get('format_version')!r}")
            beats = np.asarray(doc["beats"], dtype=float)
            if beats.shape[0] != WINDOW_BEATS:
                raise ValueError(f"{path}:{lineno}: expected {WINDOW_BEATS} beats, got {beats.shape[0]}")
            rows = out.setdefault(str(doc["session_id"]), [])
            if per_session is None or len(rows) < per_session:
                rows.append(beats)
    return OrderedDict((k, np.stack(v)) for k, v in out.items())


LABEL_FIELDS = ("session_id", "subject_id", "true_sbp", "true_dbp", "rhythm")


def write_labels_jsonl(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps({k: row[k] for k in LABEL_FIELDS}) + "\n")


def read_labels_jsonl(path) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            doc = json.loads(line)
            missing = [k for k in LABEL_FIELDS if k not in doc]
            if missing:
                raise ValueError(f"{path}:{lineno}: label record missing {missing}")
            out[str(doc["session_id"])] = {
                "subject_id": str(doc["subject_id"]),
                "true_sbp": float(doc["true_sbp"]),
                "true_dbp": float(doc["true_dbp"]),
                "rhythm": str(doc["rhythm"]),
            }
    return out


def write_predictions_csv(path, predictions: dict) -> None:
    """``predictions`` maps session id to the dict returned by ``predict_session``."""
    if not predictions:
        raise ValueError("no predictions to write")
    cols = list(next(iter(predictions.values())))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id", *cols])
        for sid, p in predictions.items():
            w.writerow([sid, *(repr(p[c]) for c in cols)])


def read_predictions_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        out = {}
        for row in reader:
            sid = row.pop("session_id")
            out[sid] = {k: (int(v) if k == "class" else float(v)) for k, v in row.items()}
    return out


SCREEN_FIELDS = ("session_id", "status", "peak_count", "n_beats", "best_window_sqi", "n_windows")


def screen_row(session_id: str, result: SessionResult) -> dict:
    best = result.screen.best_window_sqi
    return {
        "session_id": session_id,
        "status": result.screen.status.value,
        "peak_count": result.screen.peak_count,
        "n_beats": result.n_beats,
        "best_window_sqi": "" if best is None else repr(float(best)),
        "n_windows": len(result.windows),
    }


def write_rows_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fieldnames), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})

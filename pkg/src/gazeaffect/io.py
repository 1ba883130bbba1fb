"""Readers and writers for every on-disk format the pipeline exchanges."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import TARGETS
from .errors import ValidationError
from .roi import LandmarkFrame
from .preprocessing import EnvironmentReading, SessionRecording, TrialWindow

GAZE_COLUMNS = ("t_ms", "x", "y", "pupil_mm", "valid")
RATING_COLUMNS = ("participant_id", "trial_id") + TARGETS
RESULT_COLUMNS = ("label", "F1_low", "F1_medium", "F1_high", "macro_F1", "learning_rate", "dropout")


def _check_header(header, required, path):
    missing = [c for c in required if c not in header]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")


# -- gaze CSV ----------------------------------------------------------------

def write_gaze_csv(path, t, x, y, pupil, valid):
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(GAZE_COLUMNS) + "\n")
        for row in zip(t, x, y, pupil, valid):
            fh.write(f"{row[0]:.3f},{row[1]:.2f},{row[2]:.2f},{row[3]:.4f},{int(row[4])}\n")


def read_gaze_csv(path) -> dict:
    """Column arrays keyed by header name, validated for order and types."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        _check_header(header, GAZE_COLUMNS, path)
        cols = [header.index(c) for c in GAZE_COLUMNS]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(row[c]) for c in cols])
            except (ValueError, IndexError):
                raise ValidationError(f"{path}: row {lineno} is malformed: {row!r}") from None
    data = np.array(rows, dtype=float).reshape(-1, len(GAZE_COLUMNS))
    if len(data) > 1 and np.any(np.diff(data[:, 0]) < 0):
        bad = int(np.flatnonzero(np.diff(data[:, 0]) < 0)[0]) + 3
        raise ValidationError(f"{path}: rows not sorted by t_ms (row {bad})")
    if not np.isin(data[:, 4], (0.0, 1.0)).all():
        raise ValidationError(f"{path}: valid column must be 0 or 1")
    return {"t_ms": data[:, 0], "x": data[:, 1], "y": data[:, 2],
            "pupil_mm": data[:, 3], "valid": data[:, 4].astype(bool)}


# -- session sidecar ------------------------------------------------------------

def segment_session(stream: dict, sidecar: dict) -> SessionRecording:
    """Cut a continuous gaze stream into trial windows (trial-relative time)."""
    t = stream["t_ms"]
    trials = []
    for tr in sidecar["trials"]:
        start, end = float(tr["start_t"]), float(tr["end_t"])
        lo, hi = np.searchsorted(t, start, "left"), np.searchsorted(t, end, "right")
        trials.append(TrialWindow(
            trial_id=str(tr["trial_id"]), stimulus_emotion=tr["stimulus_emotion"],
            start_t=start, end_t=end,
            t=t[lo:hi] - start, x=stream["x"][lo:hi], y=stream["y"][lo:hi],
            pupil=stream["pupil_mm"][lo:hi], valid=stream["valid"][lo:hi],
        ))
    env = sidecar["environment"]
    return SessionRecording(
        participant_id=str(sidecar["participant_id"]),
        trials=trials,
        environment=EnvironmentReading(float(env["lux"]), float(env["temp"])),
        sample_rate=float(sidecar.get("sample_rate", 150.0)),
        personality=sidecar.get("personality"),
    )


def write_session_json(path, sidecar: dict):
    Path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_session(json_path) -> SessionRecording:
    json_path = Path(json_path)
    try:
        sidecar = json.loads(json_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{json_path}: invalid JSON ({exc})") from None
    for key in ("participant_id", "trials", "environment"):
        if key not in sidecar:
            raise ValidationError(f"{json_path}: missing field {key!r}")
    gaze = json_path.parent / sidecar.get("gaze_file", json_path.with_suffix(".csv").name)
    return segment_session(read_gaze_csv(gaze), sidecar)


def session_paths(directory) -> list:
    return sorted(Path(directory).glob("*.json"))


# -- landmarks ---------------------------------------------------------------------

def write_landmarks(path, frames):
    payload = [{"t_ms": round(float(f.t), 3),
                "points": [[round(float(x), 5), round(float(y), 5)] for x, y in f.points]}
               for f in frames]
    Path(path).write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8")


def read_landmarks(path) -> list:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, list) or not payload:
        raise ValidationError(f"{path}: expected a non-empty array of frames")
    frames = [LandmarkFrame(float(f["t_ms"]), np.asarray(f["points"], dtype=float)) for f in payload]
    return sorted(frames, key=lambda f: f.t)


# -- ratings -----------------------------------------------------------------------

def write_ratings(path, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RATING_COLUMNS)
        for r in rows:
            w.writerow([r[c] for c in RATING_COLUMNS])


def read_ratings(path) -> list:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames or [], RATING_COLUMNS, path)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            out = {"participant_id": row["participant_id"], "trial_id": row["trial_id"]}
            for c in TARGETS:
                try:
                    v = int(row[c])
                except (TypeError, ValueError):
                    raise ValidationError(f"{path}: row {lineno}, {c} is not an integer") from None
                if not 1 <= v <= 9:
                    raise ValidationError(f"{path}: row {lineno}, {c}={v} outside 1-9")
                out[c] = v
            rows.append(out)
    return rows


# -- features ------------------------------------------------------------------------

def write_features(path, records):
    from .features import csv_header, record_to_row

    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header())
        for rec in records:
            w.writerow(record_to_row(rec))


def read_features(path) -> list:
    from .features import csv_header, row_to_record

    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames or [], csv_header(), path)
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(row_to_record(row))
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{path}: row {lineno}: {exc}") from None
    return out


# -- results table -------------------------------------------------------------------

def write_results(path, rows):
    """Results CSV: one row per trained model."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([r["label"]] + [f"{float(r[c]):.6f}" for c in RESULT_COLUMNS[1:5]]
                       + [_fmt_hparam(r["learning_rate"]), _fmt_hparam(r["dropout"])])


def _fmt_hparam(v):
    return "N/A" if v is None else repr(float(v))


def read_results(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))

"""Confusion matrices, F1 scores and evaluation reports."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .errors import ValidationError

N_CLASSES = 3


def confusion(true_labels, predicted, n_classes: int = N_CLASSES) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    t = np.asarray([int(v) for v in true_labels], dtype=int)
    p = np.asarray([int(v) for v in predicted], dtype=int)
    if t.shape != p.shape:
        raise ValidationError(f"label lists differ in length: {len(t)} vs {len(p)}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def per_class_f1(cm):
    """F1 per class plus a flag array marking 0/0 precision or recall (scored as 0)."""
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0).astype(float)
    true = cm.sum(axis=1).astype(float)
    degenerate = (pred == 0) | (true == 0)
    # 2PR/(P+R) == 2TP/(2TP+FP+FN); one integer division keeps it correctly rounded
    denom = pred + true
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return f1, degenerate


def macro_f1(cm) -> float:
    return float(np.mean(per_class_f1(cm)[0]))


def scores(true_labels, predicted) -> dict:
    cm = confusion(true_labels, predicted)
    f1, degenerate = per_class_f1(cm)
    return {"confusion": cm.tolist(), "f1": f1.tolist(), "degenerate": degenerate.tolist(),
            "macro_f1": float(f1.mean()),
            "accuracy": float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0}


def report_schema() -> dict:
    text = resources.files("gazeaffect").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    import jsonschema

    jsonschema.validate(report, report_schema())


def build_report(*, target, split, true_labels, predicted, agreement, checkpoint_sha256,
                 model_config, train_config, feature_set) -> dict:
    s = scores(true_labels, predicted)
    return {
        "target": target,
        "split": split,
        "n_examples": len(true_labels),
        "confusion_matrix": s["confusion"],
        "per_class_f1": dict(zip(("Low", "Medium", "High"), s["f1"])),
        "degenerate_classes": [c for c, d in zip(("Low", "Medium", "High"), s["degenerate"]) if d],
        "macro_f1": s["macro_f1"],
        "accuracy": s["accuracy"],
        "agreement": {
            "statistic": "mean modal-class share per clip (%)",
            "values": agreement,
        },
        "provenance": {
            "checkpoint_sha256": checkpoint_sha256,
            "feature_set": feature_set,
            "model_config": model_config,
            "train_config": train_config,
        },
    }

"""Label binning, stratified splits, class weights and rater agreement."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import TARGETS
from .errors import ValidationError


class ClassBin(enum.IntEnum):
    Low = 0
    Medium = 1
    High = 2


@dataclass(frozen=True)
class EmotionRating:
    perceived_valence: int
    perceived_arousal: int
    felt_valence: int
    felt_arousal: int

    def __post_init__(self):
        for name in TARGETS:
            v = getattr(self, name)
            if v not in range(1, 10):
                raise ValidationError(f"{name} must be an integer 1-9, got {v!r}")

    def binned(self) -> dict:
        return {name: bin_rating(getattr(self, name)) for name in TARGETS}


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.64
    val_fraction: float = 0.16
    test_fraction: float = 0.20
    seed: int = 0
    stratify_on: str = "perceived_valence"
    subject_independent: bool = False

    def __post_init__(self):
        fr = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must be non-negative and sum to 1, got {fr}")


def bin_rating(r) -> ClassBin:
    """1-3 -> Low, 4-6 -> Medium, 7-9 -> High."""
    if isinstance(r, bool) or int(r) != r or not 1 <= r <= 9:
        raise ValidationError(f"rating must be an integer in 1..9, got {r!r}")
    return ClassBin((int(r) - 1) // 3)


def _label_of(rec, target):
    if isinstance(rec, dict):
        return ClassBin(rec[target])
    return ClassBin(rec.labels[target])


def _cut(n, spec):
    n_train = int(round(n * spec.train_fraction))
    n_val = int(round(n * spec.val_fraction))
    n_val = min(n_val, n - n_train)
    return n_train, n_val


def stratified_split(records, spec: SplitSpec, label_fn=None):
    """Per-class shuffled split into (train, val, test).

    Each class is shuffled with ``spec.seed`` and cut at
    round(n_c * train_fraction) and round(n_c * val_fraction). Output lists
    keep input order. With ``spec.subject_independent`` whole participants
    are assigned to splits instead (stratification is then approximate).
    """
    records = list(records)
    label_fn = label_fn or (lambda r: _label_of(r, spec.stratify_on))
    rng = np.random.default_rng(spec.seed)
    if spec.subject_independent:
        return _subject_split(records, spec, rng)
    by_class = defaultdict(list)
    for i, r in enumerate(records):
        by_class[int(label_fn(r))].append(i)
    missing = [c.name for c in ClassBin if not by_class.get(int(c))]
    if missing:
        raise ValidationError(f"stratification label {spec.stratify_on!r} has empty classes: {missing}")
    assign = np.empty(len(records), dtype=int)
    for c in sorted(by_class):
        idx = np.array(by_class[c])
        idx = idx[rng.permutation(len(idx))]
        n_train, n_val = _cut(len(idx), spec)
        assign[idx[:n_train]] = 0
        assign[idx[n_train:n_train + n_val]] = 1
        assign[idx[n_train + n_val:]] = 2
    return tuple([r for r, a in zip(records, assign) if a == k] for k in range(3))


def _subject_split(records, spec, rng):
    pids = sorted({r.participant_id for r in records})
    pids = [pids[i] for i in rng.permutation(len(pids))]
    n_train, n_val = _cut(len(pids), spec)
    group = {p: 0 for p in pids[:n_train]}
    group.update({p: 1 for p in pids[n_train:n_train + n_val]})
    group.update({p: 2 for p in pids[n_train + n_val:]})
    return tuple([r for r in records if group[r.participant_id] == k] for k in range(3))


def class_weights(train_labels, exact: bool = False):
    """Mean-normalised inverse frequency: w_c = N / (3 n_c), indexed by ClassBin.

    Floats are the correctly rounded values of the rationals; ``exact=True``
    returns the rationals themselves (``Fraction``), for which w_c * n_c is
    constant with no rounding.
    """
    counts = np.bincount(np.asarray([int(l) for l in train_labels], dtype=int), minlength=3)
    if len(counts) > 3:
        raise ValidationError("labels outside the three classes")
    if np.any(counts == 0):
        missing = [ClassBin(c).name for c in range(3) if counts[c] == 0]
        raise ValidationError(f"class weights undefined, missing classes: {missing}")
    fracs = [Fraction(int(counts.sum()), 3 * int(n)) for n in counts]
    if exact:
        return fracs
    return np.array([float(f) for f in fracs])


def agreement(groups) -> float:
    """Mean modal-class share across clips, as a percentage.

    ``groups`` maps a clip key to the list of class labels its raters gave.
    """
    shares = []
    for key, labels in groups.items():
        labels = list(labels)
        if not labels:
            raise ValidationError(f"clip {key!r} has no ratings")
        shares.append(Counter(int(l) for l in labels).most_common(1)[0][1] / len(labels))
    if not shares:
        raise ValidationError("no rating groups")
    return 100.0 * float(np.mean(shares))


def agreement_by_label(ratings) -> dict:
    """Agreement for every target from rating rows keyed by trial_id (= clip)."""
    out = {}
    for target in TARGETS:
        groups = defaultdict(list)
        for row in ratings:
            groups[row["trial_id"]].append(bin_rating(int(row[target])))
        out[target] = agreement(groups)
    return out


def perturb_traits(profile, sigma: float, rng) -> np.ndarray:
    """Gaussian jitter on [0, 1]-scaled traits, clamped back to [0, 1]."""
    profile = np.asarray(profile, dtype=float)
    if sigma < 0:
        raise ValidationError("sigma must be non-negative")
    if sigma == 0:
        return profile.copy()
    return np.clip(profile + rng.normal(0.0, sigma, size=profile.shape), 0.0, 1.0)

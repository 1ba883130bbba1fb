"""Trial-level feature extraction: signal -> events -> regions -> sequence."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .dataset import bin_rating
from .errors import EmptyTrialError, ValidationError
from .events import EventConfig, detect_events
from .features import FeatureRecord, build_sequence, one_hot_stimulus, scale_personality
from .roi import StimulusMapping, build_regions, label_trial
from .preprocessing import (SignalConfig, baseline_with_fallback, correct_pupil, filter_quality,
                     normalize_gaze)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoiConfig:
    margin: float = 0.02
    offset: tuple = (0.0, 0.0)
    scale: tuple = (1.0, 1.0)
    proportion_basis: str = "samples"

    def __post_init__(self):
        if self.proportion_basis not in ("samples", "fixations"):
            raise ValidationError("proportion_basis must be 'samples' or 'fixations'")
        if self.margin < 0:
            raise ValidationError("margin must be non-negative")


class RegionCache:
    """Region polygons per landmark frame, built once per clip."""

    def __init__(self, landmarks: dict, margin: float):
        self.landmarks = landmarks
        self.margin = margin
        self._cache = {}

    def get(self, clip_id):
        if clip_id not in self._cache:
            if clip_id not in self.landmarks:
                raise ValidationError(f"no landmark file for clip {clip_id!r}")
            frames = self.landmarks[clip_id]
            self._cache[clip_id] = (frames, [build_regions(f, self.margin) for f in frames])
        return self._cache[clip_id]


def _sample_labels(trial, events, frames, regions, roi_cfg):
    mapping = StimulusMapping(tuple(roi_cfg.offset), tuple(roi_cfg.scale))
    valid = trial.valid
    t = trial.t[valid]
    if roi_cfg.proportion_basis == "samples":
        pts = np.column_stack([trial.x[valid], trial.y[valid]])
        return t, label_trial(t, pts, frames, regions, mapping)
    # samples inside a fixation inherit the label of its centroid; the rest are ignored
    keep_t, keep_l = [], []
    for f in events.fixations:
        sel = (t >= f.start_t) & (t <= f.end_t)
        lab = label_trial([(f.start_t + f.end_t) / 2], [f.centroid], frames, regions, mapping)[0]
        keep_t.append(t[sel])
        keep_l.append(np.full(sel.sum(), lab))
    if not keep_t:
        pts = np.column_stack([trial.x[valid], trial.y[valid]])
        return t, label_trial(t, pts, frames, regions, mapping)
    order = np.argsort(np.concatenate(keep_t), kind="stable")
    return np.concatenate(keep_t)[order], np.concatenate(keep_l)[order]


def session_features(session, regions: RegionCache, ratings: dict, signal_cfg: SignalConfig,
                     event_cfg: EventConfig, roi_cfg: RoiConfig):
    """Feature records for one session plus a drop log.

    ``ratings`` maps (participant_id, trial_id) to a rating row; trials without
    a rating get no labels. Returns (records, drops) where each drop is a
    dict with trial_id, loss_fraction and reason.
    """
    pid = session.participant_id
    if session.personality is None:
        raise ValidationError(f"session {pid}: missing personality scores")
    personality = scale_personality(session.personality)
    env = np.array([session.environment.lux, session.environment.temp], dtype=float)

    kept, drops = [], []
    for trial in session.trials:
        if len(trial) == 0:
            drops.append({"participant_id": pid, "trial_id": trial.trial_id,
                          "loss_fraction": 1.0, "reason": "no samples"})
            continue
        try:
            clean, loss = filter_quality(trial, signal_cfg)
        except EmptyTrialError:
            drops.append({"participant_id": pid, "trial_id": trial.trial_id,
                          "loss_fraction": 1.0, "reason": "all samples removed"})
            continue
        if loss > signal_cfg.max_loss_fraction:
            drops.append({"participant_id": pid, "trial_id": trial.trial_id,
                          "loss_fraction": loss, "reason": "loss above threshold"})
            continue
        kept.append(normalize_gaze(clean, signal_cfg))

    if not kept:
        return [], drops
    baseline, fallback = baseline_with_fallback(replace(session, trials=kept))
    if fallback:
        log.info("session %s: no usable neutral trial, session-wide pupil baseline", pid)

    records = []
    for trial in kept:
        trial = correct_pupil(trial, baseline)
        events = detect_events(trial, event_cfg, signal_cfg)
        frames, regs = regions.get(trial.trial_id)
        t_lab, labels = _sample_labels(trial, events, frames, regs, roi_cfg)
        seq = build_sequence(trial, events, labels, label_times=t_lab)
        row = ratings.get((pid, trial.trial_id))
        labels_bin = {}
        if row is not None:
            labels_bin = {k: bin_rating(row[k]) for k in
                          ("perceived_valence", "perceived_arousal", "felt_valence", "felt_arousal")}
        records.append(FeatureRecord(pid, trial.trial_id, seq, personality,
                                     one_hot_stimulus(trial.stimulus_emotion), env, labels_bin))
    return records, drops


def extract_all(sessions, landmarks, ratings_rows, signal_cfg=None, event_cfg=None, roi_cfg=None):
    signal_cfg = signal_cfg or SignalConfig()
    event_cfg = event_cfg or EventConfig()
    roi_cfg = roi_cfg or RoiConfig()
    ratings = {(r["participant_id"], r["trial_id"]): r for r in ratings_rows}
    cache = RegionCache(landmarks, roi_cfg.margin)
    records, drops = [], []
    for s in sessions:
        r, d = session_features(s, cache, ratings, signal_cfg, event_cfg, roi_cfg)
        records += r
        drops += d
    return records, drops

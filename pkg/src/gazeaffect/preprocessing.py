"""Gaze stream cleaning, coordinate normalization and pupil baseline correction.

Trials are held as column arrays rather than lists of sample objects; a
150 Hz session of 84 trials is ~50k samples and per-sample objects would
dominate runtime. ``TrialWindow.samples`` gives the row view when needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import EMOTIONS
from .errors import EmptyTrialError, NoNeutralTrialsError, ValidationError

# tolerance for "within blink_pad_ms" on float timestamps
_TIME_EPS = 1e-6


@dataclass(frozen=True)
class GazeSample:
    t: float
    x: float
    y: float
    pupil: float
    valid: bool


@dataclass(frozen=True)
class EnvironmentReading:
    lux: float
    temp: float

    def __post_init__(self):
        if not self.lux >= 0:
            raise ValidationError(f"lux must be non-negative, got {self.lux}")


@dataclass(frozen=True)
class SignalConfig:
    blink_pad_ms: float = 100.0
    max_loss_fraction: float = 0.30
    screen_width_px: float = 1920.0
    screen_height_px: float = 1080.0
    screen_width_cm: float = 53.0
    viewing_distance_cm: float = 65.0

    def __post_init__(self):
        if self.blink_pad_ms < 0:
            raise ValidationError("blink_pad_ms must be >= 0")
        if not 0 < self.max_loss_fraction < 1:
            raise ValidationError("max_loss_fraction must lie in (0, 1)")
        for name in ("screen_width_px", "screen_height_px", "screen_width_cm", "viewing_distance_cm"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")

    @property
    def screen_height_cm(self) -> float:
        # square pixels
        return self.screen_width_cm * self.screen_height_px / self.screen_width_px


@dataclass(frozen=True, eq=False)
class TrialWindow:
    """One stimulus presentation.

    ``t`` is milliseconds since trial onset; ``start_t``/``end_t`` are in
    session time. ``clamped`` marks samples pulled back onto the screen by
    :func:`normalize_gaze`.
    """

    trial_id: str
    stimulus_emotion: str
    start_t: float
    end_t: float
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    pupil: np.ndarray
    valid: np.ndarray
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.stimulus_emotion not in EMOTIONS:
            raise ValidationError(f"unknown stimulus emotion {self.stimulus_emotion!r}")
        if not self.start_t < self.end_t:
            raise ValidationError(f"trial {self.trial_id}: start_t must precede end_t")
        n = len(self.t)
        for name in ("x", "y", "pupil", "valid"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"trial {self.trial_id}: column {name} has wrong length")
        if self.clamped is None:
            object.__setattr__(self, "clamped", np.zeros(n, dtype=bool))
        if n > 1 and np.any(np.diff(self.t) < 0):
            raise ValidationError(f"trial {self.trial_id}: samples not sorted by time")

    def __len__(self):
        return len(self.t)

    @property
    def duration(self) -> float:
        return self.end_t - self.start_t

    @property
    def samples(self) -> Iterator[GazeSample]:
        for i in range(len(self.t)):
            yield GazeSample(float(self.t[i]), float(self.x[i]), float(self.y[i]),
                             float(self.pupil[i]), bool(self.valid[i]))

    def take(self, mask: np.ndarray) -> "TrialWindow":
        return replace(self, t=self.t[mask], x=self.x[mask], y=self.y[mask],
                       pupil=self.pupil[mask], valid=self.valid[mask],
                       clamped=self.clamped[mask])

    @classmethod
    def from_samples(cls, trial_id, stimulus_emotion, start_t, end_t, samples) -> "TrialWindow":
        samples = list(samples)
        return cls(
            trial_id, stimulus_emotion, start_t, end_t,
            t=np.array([s.t for s in samples], dtype=float),
            x=np.array([s.x for s in samples], dtype=float),
            y=np.array([s.y for s in samples], dtype=float),
            pupil=np.array([s.pupil for s in samples], dtype=float),
            valid=np.array([s.valid for s in samples], dtype=bool),
        )


@dataclass(frozen=True)
class SessionRecording:
    participant_id: str
    trials: list
    environment: EnvironmentReading
    sample_rate: float = 150.0
    personality: dict | None = None

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be positive")
        spans = sorted((tr.start_t, tr.end_t) for tr in self.trials)
        for (_, prev_end), (start, _) in zip(spans, spans[1:]):
            if start < prev_end:
                raise ValidationError(f"session {self.participant_id}: overlapping trial windows")


def filter_quality(trial: TrialWindow, cfg: SignalConfig) -> tuple[TrialWindow, float]:
    """Drop blink/tracking-loss samples and everything within the blink pad.

    A sample is bad when the tracker flags it invalid or reports a
    non-positive pupil. Returns the cleaned trial and the removed fraction;
    deciding whether to drop the whole trial is left to the caller.
    """
    n = len(trial)
    if n == 0:
        raise EmptyTrialError(f"trial {trial.trial_id} has no samples")
    bad = ~trial.valid | ~(trial.pupil > 0)
    if not bad.any():
        return trial, 0.0
    bad_t = trial.t[bad]
    # distance from every sample to its nearest bad sample
    idx = np.searchsorted(bad_t, trial.t)
    left = bad_t[np.clip(idx - 1, 0, len(bad_t) - 1)]
    right = bad_t[np.clip(idx, 0, len(bad_t) - 1)]
    nearest = np.minimum(np.abs(trial.t - left), np.abs(right - trial.t))
    drop = nearest <= cfg.blink_pad_ms + _TIME_EPS
    if drop.all():
        raise EmptyTrialError(f"trial {trial.trial_id}: every sample removed by quality filter")
    return trial.take(~drop), float(drop.sum()) / n


def normalize_gaze(trial: TrialWindow, cfg: SignalConfig) -> TrialWindow:
    """Map pixel coordinates into [0, 1]^2, clamping and flagging off-screen samples."""
    if cfg.screen_width_px == 0 or cfg.screen_height_px == 0:
        raise ValidationError("screen dimensions must be non-zero")
    x = trial.x / cfg.screen_width_px
    y = trial.y / cfg.screen_height_px
    off = (x < 0) | (x > 1) | (y < 0) | (y > 1)
    return replace(trial, x=np.clip(x, 0.0, 1.0), y=np.clip(y, 0.0, 1.0),
                   clamped=trial.clamped | off)


def _valid_pupils(trials) -> np.ndarray:
    parts = [tr.pupil[tr.valid & (tr.pupil > 0)] for tr in trials]
    return np.concatenate(parts) if parts else np.empty(0)


def pupil_baseline(session: SessionRecording) -> float:
    """Mean pupil diameter over all valid samples of the session's Neutral trials."""
    neutral = [tr for tr in session.trials if tr.stimulus_emotion == "Neutral"]
    values = _valid_pupils(neutral)
    if values.size == 0:
        raise NoNeutralTrialsError(
            f"participant {session.participant_id}: no neutral trial with valid samples")
    return float(values.mean())


def baseline_with_fallback(session: SessionRecording) -> tuple[float, bool]:
    """Neutral-trial baseline, or the session-wide mean when none survives.

    The flag is True when the fallback was used.
    """
    try:
        return pupil_baseline(session), False
    except NoNeutralTrialsError:
        values = _valid_pupils(session.trials)
        if values.size == 0:
            raise
        return float(values.mean()), True


def correct_pupil(trial: TrialWindow, baseline: float) -> TrialWindow:
    if not np.isfinite(baseline):
        raise ValidationError("baseline must be finite")
    pupil = np.where(trial.valid, trial.pupil - baseline, trial.pupil)
    return replace(trial, pupil=pupil)

"""Per-trial model inputs: the 15x12 resampled sequence, static vectors and scalers."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import EMOTIONS, TARGETS
from .errors import ValidationError

N_STEPS = 15
CHANNELS = (
    "prop_eyes", "prop_eyebrows", "prop_nose", "prop_mouth", "prop_outside",
    "pupil_corrected",
    "fix_duration", "fix_dispersion",
    "sacc_amplitude", "sacc_duration", "sacc_peak_velocity", "sacc_acceleration",
)
TRAITS = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")
ENVIRONMENT = ("lux", "temp")

MINMAX_CHANNELS = ("sacc_amplitude", "sacc_duration")
STANDARD_CHANNELS = ("pupil_corrected", "fix_duration", "fix_dispersion",
                     "sacc_peak_velocity", "sacc_acceleration")


@dataclass(frozen=True)
class PointChannel:
    """Samples of a continuous signal; linearly interpolated, held constant past the ends."""

    t: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class EventChannel:
    """Piecewise-constant signal: ``values[k]`` while event k is active, 0 otherwise."""

    starts: np.ndarray
    ends: np.ndarray
    values: np.ndarray


def interpolate_sequence(channels, start: float, end: float, n_steps: int = N_STEPS) -> np.ndarray:
    """Resample channels onto ``n_steps`` equally spaced times over [start, end].

    Returns an (n_steps, len(channels)) array.
    """
    if not end > start:
        raise ValidationError("trial span must be positive")
    q = np.linspace(start, end, n_steps)
    out = np.zeros((n_steps, len(channels)))
    for c, ch in enumerate(channels):
        if isinstance(ch, EventChannel):
            starts = np.asarray(ch.starts, dtype=float)
            ends = np.asarray(ch.ends, dtype=float)
            for s, e, v in zip(starts, ends, np.asarray(ch.values, dtype=float)):
                out[(q >= s) & (q <= e), c] = v
        else:
            t = np.asarray(ch.t, dtype=float)
            if t.size == 0:
                raise ValidationError(f"channel {c} has no points")
            out[:, c] = np.interp(q, t, np.asarray(ch.values, dtype=float))
    return out


def query_times(start: float, end: float, n_steps: int = N_STEPS) -> np.ndarray:
    return np.linspace(start, end, n_steps)


def windowed_proportions(t, labels, start, end, n_labels=5, n_steps=N_STEPS) -> np.ndarray:
    """Region shares in a window one step wide centred on each query time.

    Empty windows take the label of the nearest sample.
    """
    t = np.asarray(t, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if t.size == 0:
        raise ValidationError("no samples to compute region proportions")
    q = query_times(start, end, n_steps)
    half = (end - start) / (n_steps - 1) / 2
    out = np.zeros((n_steps, n_labels))
    for k, qk in enumerate(q):
        sel = (t >= qk - half) & (t < qk + half)
        if k == n_steps - 1:
            sel |= t == qk + half
        if sel.any():
            out[k] = np.bincount(labels[sel], minlength=n_labels) / sel.sum()
        else:
            out[k, labels[np.argmin(np.abs(t - qk))]] = 1.0
    return out


def build_sequence(trial, events, sample_labels, label_times=None) -> np.ndarray:
    """Assemble the 15x12 sequence for a cleaned, corrected trial.

    ``sample_labels`` holds one region label per valid sample, or per entry
    of ``label_times`` when given.
    """
    valid = trial.valid
    t = trial.t[valid]
    span = (0.0, trial.duration)
    props = windowed_proportions(t if label_times is None else label_times, sample_labels, *span)
    fx, sc = events.fixations, events.saccades
    fs, fe = [f.start_t for f in fx], [f.end_t for f in fx]
    ss, se = [s.start_t for s in sc], [s.end_t for s in sc]
    channels = [PointChannel(query_times(*span), props[:, k]) for k in range(5)]
    channels += [
        PointChannel(t, trial.pupil[valid]),
        EventChannel(fs, fe, [f.duration for f in fx]),
        EventChannel(fs, fe, [f.dispersion for f in fx]),
        EventChannel(ss, se, [s.amplitude for s in sc]),
        EventChannel(ss, se, [s.duration for s in sc]),
        EventChannel(ss, se, [s.peak_velocity for s in sc]),
        EventChannel(ss, se, [s.mean_acceleration for s in sc]),
    ]
    return interpolate_sequence(channels, *span)


def scale_personality(raw) -> np.ndarray:
    """BFI raw scores (0-50) in trait order -> [0, 1]."""
    if isinstance(raw, dict):
        missing = [k for k in TRAITS if k not in raw]
        if missing:
            raise ValidationError(f"personality is missing trait(s) {missing}")
        raw = [raw[k] for k in TRAITS]
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (5,):
        raise ValidationError("personality needs exactly five trait scores")
    if np.any(raw < 0) or np.any(raw > 50) or not np.isfinite(raw).all():
        raise ValidationError(f"trait scores must lie in [0, 50], got {raw.tolist()}")
    return raw / 50.0


def one_hot_stimulus(emotion: str) -> np.ndarray:
    if emotion not in EMOTIONS:
        raise ValidationError(f"unknown stimulus emotion {emotion!r}")
    v = np.zeros(len(EMOTIONS))
    v[EMOTIONS.index(emotion)] = 1.0
    return v


@dataclass(frozen=True, eq=False)
class FeatureRecord:
    participant_id: str
    trial_id: str
    sequence: np.ndarray
    personality: np.ndarray
    stimulus: np.ndarray
    environment: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.shape(self.sequence) != (N_STEPS, len(CHANNELS)):
            raise ValidationError(f"sequence must be {N_STEPS}x{len(CHANNELS)}, got {np.shape(self.sequence)}")
        if np.shape(self.personality) != (5,) or np.shape(self.stimulus) != (6,) \
                or np.shape(self.environment) != (2,):
            raise ValidationError("static feature groups must have dims 5, 6 and 2")
        if not np.isfinite(self.sequence).all():
            raise ValidationError(f"trial {self.trial_id}: non-finite sequence entries")

    def label(self, target: str):
        return self.labels[target]


@dataclass
class ScalerParams:
    """Training-set statistics. ``method`` maps each scaled column to minmax/standard/constant."""

    seq_loc: np.ndarray
    seq_scale: np.ndarray
    seq_method: list
    env_loc: np.ndarray
    env_scale: np.ndarray
    env_method: list

    def to_dict(self) -> dict:
        return {
            "sequence": {"channels": list(CHANNELS), "method": self.seq_method,
                         "loc": self.seq_loc.tolist(), "scale": self.seq_scale.tolist()},
            "environment": {"channels": list(ENVIRONMENT), "method": self.env_method,
                            "loc": self.env_loc.tolist(), "scale": self.env_scale.tolist()},
        }

    @classmethod
    def from_dict(cls, d) -> "ScalerParams":
        s, e = d["sequence"], d["environment"]
        return cls(np.array(s["loc"], dtype=float), np.array(s["scale"], dtype=float), list(s["method"]),
                   np.array(e["loc"], dtype=float), np.array(e["scale"], dtype=float), list(e["method"]))


def _fit_columns(values, methods):
    loc = np.zeros(values.shape[1])
    scale = np.ones(values.shape[1])
    out = list(methods)
    for c, m in enumerate(methods):
        col = values[:, c]
        if m == "minmax":
            lo, hi = col.min(), col.max()
            if hi > lo:
                loc[c], scale[c] = lo, hi - lo
            else:
                out[c] = "constant"
        elif m == "standard":
            mu, sd = col.mean(), col.std()
            if sd > 0:
                loc[c], scale[c] = mu, sd
            else:
                out[c] = "constant"
    return loc, scale, out


def fit_scalers(train_records) -> ScalerParams:
    """Fit per-channel scalers on training records only.

    Saccade amplitude and duration are min-max scaled; pupil, the remaining
    event metrics and environment readings are standardized; region shares
    pass through. Constant columns are flagged and left untouched.
    """
    records = list(train_records)
    if len(records) < 2:
        raise ValidationError("fit_scalers needs at least two training records")
    seq = np.concatenate([r.sequence for r in records], axis=0)
    env = np.stack([r.environment for r in records])
    seq_methods = ["minmax" if c in MINMAX_CHANNELS else "standard" if c in STANDARD_CHANNELS else "none"
                   for c in CHANNELS]
    sl, ss, sm = _fit_columns(seq, seq_methods)
    el, es, em = _fit_columns(env, ["standard"] * len(ENVIRONMENT))
    return ScalerParams(sl, ss, sm, el, es, em)


def apply_scalers(record: FeatureRecord, params: ScalerParams) -> FeatureRecord:
    """Affine transform with training statistics; unseen values are not clamped."""
    if len(params.seq_loc) != record.sequence.shape[1] or len(params.env_loc) != len(record.environment):
        raise ValidationError(
            f"scaler expects {len(params.seq_loc)} sequence channels, record has {record.sequence.shape[1]}")
    return replace(record,
                   sequence=(record.sequence - params.seq_loc) / params.seq_scale,
                   environment=(record.environment - params.env_loc) / params.env_scale)


# -- feature dump CSV -------------------------------------------------------

def csv_header() -> list:
    cols = ["participant_id", "trial_id"]
    cols += [f"seq_{k:02d}_{c}" for k in range(N_STEPS) for c in CHANNELS]
    cols += list(TRAITS)
    cols += [f"stim_{e}" for e in EMOTIONS]
    cols += list(ENVIRONMENT)
    cols += list(TARGETS)
    return cols


def record_to_row(rec: FeatureRecord) -> list:
    from .dataset import ClassBin

    def fmt(v):
        return repr(float(v))

    row = [rec.participant_id, rec.trial_id]
    row += [fmt(v) for v in rec.sequence.ravel()]
    row += [fmt(v) for v in rec.personality]
    row += [str(int(v)) for v in rec.stimulus]
    row += [fmt(v) for v in rec.environment]
    row += [ClassBin(rec.labels[t]).name if t in rec.labels else "" for t in TARGETS]
    return row


def row_to_record(row: dict) -> FeatureRecord:
    from .dataset import ClassBin

    seq = np.array([float(row[f"seq_{k:02d}_{c}"]) for k in range(N_STEPS) for c in CHANNELS])
    labels = {t: ClassBin[row[t]] for t in TARGETS if row.get(t)}
    return FeatureRecord(
        participant_id=row["participant_id"],
        trial_id=row["trial_id"],
        sequence=seq.reshape(N_STEPS, len(CHANNELS)),
        personality=np.array([float(row[k]) for k in TRAITS]),
        stimulus=np.array([float(row[f"stim_{e}"]) for e in EMOTIONS]),
        environment=np.array([float(row[k]) for k in ENVIRONMENT]),
        labels=labels,
    )

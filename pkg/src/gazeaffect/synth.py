"""Synthetic sessions with planted stimulus and personality effects.

Stands in for the human-subject recordings. Every participant watches the
same clip set in a private random order. Perceived ratings follow the
clip's emotion; felt ratings blend the clip's emotion with a deterministic
function of the participant's traits. Gaze is a fixate-and-jump process over
the face regions whose dwell pattern depends on the emotion, and pupil size
rises with stimulus arousal.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import EMOTIONS
from .errors import ValidationError
from .features import TRAITS
from .roi import LANDMARK_GROUPS, LandmarkFrame, RegionLabel

SCREEN_W, SCREEN_H = 1920.0, 1080.0
SAMPLE_RATE = 150.0
DT = 1000.0 / SAMPLE_RATE
FRAME_MS = 1000.0 / 30.0
ITI_SAMPLES = 150

STIM_VALENCE = {"Anger": -1, "Disgust": -1, "Fear": -1, "Happy": 1, "Neutral": 0, "Sad": -1}
STIM_AROUSAL = {"Anger": 1, "Disgust": 0, "Fear": 1, "Happy": 1, "Neutral": -1, "Sad": -1}

# dwell weights in RegionLabel order (Eyes, Eyebrows, Nose, Mouth, Outside)
BASE_DWELL = np.array([0.35, 0.10, 0.20, 0.25, 0.10])
EMOTION_DWELL = {
    "Anger": np.array([0.50, 0.15, 0.15, 0.15, 0.05]),
    "Disgust": np.array([0.25, 0.10, 0.35, 0.20, 0.10]),
    "Fear": np.array([0.45, 0.20, 0.15, 0.15, 0.05]),
    "Happy": np.array([0.20, 0.05, 0.15, 0.50, 0.10]),
    "Neutral": BASE_DWELL,
    "Sad": np.array([0.30, 0.15, 0.20, 0.15, 0.20]),
}


@dataclass(frozen=True)
class SynthConfig:
    n_participants: int = 73
    trials_per_participant: int = 84
    seed: int = 0
    felt_coupling: float = 0.5
    perceived_coupling: float = 0.9
    gaze_noise: float = 0.5
    rating_noise: float = 0.8
    tracking_loss_prob: float = 0.03

    def __post_init__(self):
        if self.n_participants < 1 or self.trials_per_participant < 1:
            raise ValidationError("participant and trial counts must be positive")
        for name in ("felt_coupling", "perceived_coupling", "gaze_noise", "tracking_loss_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if self.rating_noise < 0:
            raise ValidationError("rating_noise must be non-negative")


@dataclass
class SyntheticDataset:
    sessions: list                  # SessionRecording, trial-relative
    streams: dict                   # participant_id -> (t, x_px, y_px, pupil, valid)
    sidecars: dict                  # participant_id -> session JSON payload
    landmarks: dict                 # clip_id -> [LandmarkFrame]
    ratings: list                   # rating rows
    clips: list = field(default_factory=list)


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent named generator derived from a global seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def face_template() -> np.ndarray:
    """Frontal 68-point face in normalized stimulus coordinates (y down)."""
    pts = np.zeros((68, 2))
    th = np.linspace(np.pi, 0.0, 17)
    pts[0:17] = np.column_stack([0.5 + 0.15 * np.cos(th), 0.45 + 0.27 * np.sin(th)])
    s = np.linspace(0, 1, 5)
    arch = 0.375 - 0.012 * np.sin(np.pi * s)
    pts[17:22] = np.column_stack([np.linspace(0.38, 0.47, 5), arch])
    pts[22:27] = np.column_stack([np.linspace(0.53, 0.62, 5), arch])
    pts[27:31] = np.column_stack([np.full(4, 0.5), np.linspace(0.43, 0.52, 4)])
    u = np.linspace(-1, 1, 5)
    pts[31:36] = np.column_stack([0.5 + 0.025 * u, 0.545 + 0.008 * (1 - np.abs(u))])
    ang = np.radians([180, 135, 45, 0, -45, -135])
    for base, cx in ((36, 0.435), (42, 0.565)):
        pts[base:base + 6] = np.column_stack([cx + 0.025 * np.cos(ang), 0.425 - 0.01 * np.sin(ang)])
    a12 = np.linspace(np.pi, -np.pi, 12, endpoint=False)
    pts[48:60] = np.column_stack([0.5 + 0.055 * np.cos(a12), 0.63 - 0.025 * np.sin(a12)])
    a8 = np.linspace(np.pi, -np.pi, 8, endpoint=False)
    pts[60:68] = np.column_stack([0.5 + 0.035 * np.cos(a8), 0.63 - 0.01 * np.sin(a8)])
    return pts


def clip_landmarks(offset, duration_ms, phase) -> list:
    base = face_template() + np.asarray(offset)
    times = np.arange(0.0, duration_ms + FRAME_MS, FRAME_MS)
    frames = []
    for t in times:
        sway = 0.003 * np.array([np.sin(2 * np.pi * t / 1700.0 + phase), np.sin(2 * np.pi * t / 2300.0 + phase)])
        # on-disk precision
        frames.append(LandmarkFrame(round(float(t), 3), np.round(base + sway, 5)))
    return frames


def _targets(points):
    """Gaze target anchors per region for one landmark frame."""
    eyes = LANDMARK_GROUPS[RegionLabel.Eyes]
    brows = LANDMARK_GROUPS[RegionLabel.Eyebrows]
    return {
        RegionLabel.Eyes: [points[list(eyes)[:6]].mean(axis=0), points[list(eyes)[6:]].mean(axis=0)],
        RegionLabel.Eyebrows: [points[list(brows)[:5]].mean(axis=0), points[list(brows)[5:]].mean(axis=0)],
        RegionLabel.Nose: [points[list(LANDMARK_GROUPS[RegionLabel.Nose])].mean(axis=0)],
        RegionLabel.Mouth: [points[list(LANDMARK_GROUPS[RegionLabel.Mouth])].mean(axis=0)],
    }


def _outside_point(rng, points):
    lo, hi = points.min(axis=0) - 0.04, points.max(axis=0) + 0.04
    while True:
        p = rng.uniform(0.05, 0.95, size=2)
        if not np.all((p > lo) & (p < hi)):
            return p


def gaze_path(rng, n, emotion, frames, gaze_noise):
    """Normalized gaze positions for ``n`` samples: fixations joined by linear saccades."""
    weights = (1 - gaze_noise) * EMOTION_DWELL[emotion] + gaze_noise * BASE_DWELL
    weights = weights / weights.sum()
    jitter = 0.0003 + 0.0012 * gaze_noise
    pts = np.empty((n, 2))
    pos = np.array([0.5, 0.5])
    k = 0
    while k < n:
        frame = frames[min(int(k * DT / FRAME_MS), len(frames) - 1)].points
        region = RegionLabel(int(rng.choice(5, p=weights)))
        if region == RegionLabel.Outside:
            target = _outside_point(rng, frame)
        else:
            anchors = _targets(frame)[region]
            target = anchors[int(rng.integers(len(anchors)))] + rng.normal(0, 0.003, size=2)
        m = int(rng.integers(3, 7))
        ramp = np.linspace(0, 1, m + 1)[1:, None]
        seg = pos + (target - pos) * ramp
        take = min(m, n - k)
        pts[k:k + take] = seg[:take]
        k += take
        d = int(rng.integers(23, 68))
        take = min(d, n - k)
        pts[k:k + take] = target + rng.normal(0, jitter, size=(take, 2))
        k += take
        pos = target
    return pts


def _trait_terms(scaled):
    o, c, e, a, nn = scaled
    valence = float(np.clip(2.5 * (e - nn), -1, 1))
    arousal = float(np.clip(2.5 * (nn + o - 1.0), -1, 1))
    return valence, arousal


def _to_rating(latent):
    return int(np.clip(np.rint(latent), 1, 9))


def design(cfg: SynthConfig):
    """Clip list, participants and ratings; no gaze. Cheap, and identical to
    what :func:`synth_generate` writes for the same config."""
    drng = substream(cfg.seed, "synth/design")
    n_clips = cfg.trials_per_participant
    clips = []
    for i in range(n_clips):
        clips.append({
            "clip_id": f"clip_{i:03d}",
            "emotion": EMOTIONS[i % len(EMOTIONS)],
            "duration_ms": float(np.round(drng.uniform(2000, 4000) / DT) * DT),
            "offset": drng.uniform(-0.03, 0.03, size=2),
            "phase": float(drng.uniform(0, 2 * np.pi)),
        })
    prng = substream(cfg.seed, "synth/participants")
    rrng = substream(cfg.seed, "synth/ratings")
    participants, ratings = [], []
    for p in range(cfg.n_participants):
        raw = np.round(prng.uniform(8, 42, size=5), 1)
        part = {
            "participant_id": f"P{p + 1:03d}",
            "personality": dict(zip(TRAITS, raw.tolist())),
            "lux": float(np.round(prng.uniform(200, 500), 1)),
            "temp": float(np.round(prng.uniform(20, 25), 2)),
            "pupil_base": float(prng.uniform(3.0, 4.0)),
            "order": prng.permutation(n_clips).tolist(),
        }
        participants.append(part)
        tv, ta = _trait_terms(raw / 50.0)
        cp, cf = cfg.perceived_coupling, cfg.felt_coupling
        for ci in part["order"]:
            emo = clips[ci]["emotion"]
            sv, sa = STIM_VALENCE[emo], STIM_AROUSAL[emo]
            uv, ua = rrng.uniform(-1, 1, size=2)
            noise = rrng.normal(0, 1, size=4) * cfg.rating_noise
            ratings.append({
                "participant_id": part["participant_id"],
                "trial_id": clips[ci]["clip_id"],
                "perceived_valence": _to_rating(5 + 3 * (cp * sv + (1 - cp) * uv) + noise[0]),
                "perceived_arousal": _to_rating(5 + 3 * (cp * sa + (1 - cp) * ua) + noise[1]),
                "felt_valence": _to_rating(5 + 3 * ((1 - cf) * sv + cf * tv) + noise[2]),
                "felt_arousal": _to_rating(5 + 3 * ((1 - cf) * sa + cf * ta) + noise[3]),
            })
    return clips, participants, ratings


def synth_generate(cfg: SynthConfig) -> SyntheticDataset:
    from .io import segment_session

    clips, participants, ratings = design(cfg)
    landmarks = {c["clip_id"]: clip_landmarks(c["offset"], c["duration_ms"], c["phase"]) for c in clips}
    sessions, streams, sidecars = [], {}, {}
    for part in participants:
        grng = substream(cfg.seed, f"synth/gaze/{part['participant_id']}")
        xs, ps, vs, trial_meta = [], [], [], []
        k = 0

        def gap():
            nonlocal k
            xs.append(0.5 + grng.normal(0, 0.002, size=(ITI_SAMPLES, 2)))
            ps.append(part["pupil_base"] + grng.normal(0, 0.02, size=ITI_SAMPLES))
            vs.append(np.ones(ITI_SAMPLES, dtype=bool))
            k += ITI_SAMPLES

        lux_term = -0.4 * (part["lux"] - 350.0) / 150.0
        gap()
        for ci in part["order"]:
            clip = clips[ci]
            n = int(round(clip["duration_ms"] / DT)) + 1
            pts = gaze_path(grng, n, clip["emotion"], landmarks[clip["clip_id"]], cfg.gaze_noise)
            t_rel = np.arange(n) * DT
            dil = 0.3 * STIM_AROUSAL[clip["emotion"]] * (1 - np.exp(-t_rel / 500.0))
            pupil = (part["pupil_base"] + lux_term + dil
                     + 0.05 * np.sin(2 * np.pi * t_rel / 3000.0 + grng.uniform(0, 6.3))
                     + grng.normal(0, 0.02, size=n))
            valid = np.ones(n, dtype=bool)
            for _ in range(grng.poisson(0.25 * clip["duration_ms"] / 1000.0)):
                b0 = int(grng.integers(0, n))
                valid[b0:b0 + int(grng.integers(15, 31))] = False
            if grng.random() < cfg.tracking_loss_prob:
                width = int(0.45 * n)
                b0 = int(grng.integers(0, n - width + 1))
                valid[b0:b0 + width] = False
            pts[~valid] = 0.0
            pupil[~valid] = 0.0
            trial_meta.append({"trial_id": clip["clip_id"], "stimulus_emotion": clip["emotion"],
                               "start_t": round(k * DT, 3), "end_t": round((k + n - 1) * DT, 3)})
            xs.append(pts)
            ps.append(pupil)
            vs.append(valid)
            k += n
            gap()
        pos = np.concatenate(xs)
        # match the on-disk precision so in-memory and re-read sessions agree
        t = np.round(np.arange(k) * DT, 3)
        x_px = np.round(pos[:, 0] * SCREEN_W, 2)
        y_px = np.round(pos[:, 1] * SCREEN_H, 2)
        pupil = np.round(np.concatenate(ps), 4)
        valid = np.concatenate(vs)
        pid = part["participant_id"]
        streams[pid] = (t, x_px, y_px, pupil, valid)
        sidecar = {
            "participant_id": pid,
            "sample_rate": SAMPLE_RATE,
            "environment": {"lux": part["lux"], "temp": part["temp"]},
            "personality": part["personality"],
            "gaze_file": f"{pid}.csv",
            "trials": trial_meta,
        }
        sidecars[pid] = sidecar
        sessions.append(segment_session(
            {"t_ms": t, "x": x_px, "y": y_px, "pupil_mm": pupil, "valid": valid}, sidecar))
    return SyntheticDataset(sessions, streams, sidecars, landmarks, ratings, clips)


def write_dataset(ds: SyntheticDataset, sessions_dir, landmarks_dir, ratings_path) -> list:
    """Write every file of a synthetic dataset; returns the written paths."""
    from pathlib import Path

    from .io import write_gaze_csv, write_landmarks, write_ratings, write_session_json

    sessions_dir, landmarks_dir = Path(sessions_dir), Path(landmarks_dir)
    sessions_dir.mkdir(parents=True, exist_ok=True)
    landmarks_dir.mkdir(parents=True, exist_ok=True)
    Path(ratings_path).parent.mkdir(parents=True, exist_ok=True)
    written = []
    for pid, (t, x, y, pupil, valid) in ds.streams.items():
        p = sessions_dir / f"{pid}.csv"
        write_gaze_csv(p, t, x, y, pupil, valid)
        j = sessions_dir / f"{pid}.json"
        write_session_json(j, ds.sidecars[pid])
        written += [p, j]
    for clip_id, frames in ds.landmarks.items():
        p = landmarks_dir / f"{clip_id}.json"
        write_landmarks(p, frames)
        written.append(p)
    write_ratings(ratings_path, ds.ratings)
    written.append(Path(ratings_path))
    return written

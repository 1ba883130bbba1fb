"""Fixation (I-DT) and saccade (I-VT) detection with per-trial oculomotor metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .preprocessing import SignalConfig, TrialWindow


@dataclass(frozen=True)
class EventConfig:
    dispersion_threshold_deg: float = 1.0
    min_fixation_ms: float = 100.0
    velocity_threshold_deg_s: float = 30.0

    def __post_init__(self):
        for name in ("dispersion_threshold_deg", "min_fixation_ms", "velocity_threshold_deg_s"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class Fixation:
    start_t: float
    end_t: float
    centroid: tuple[float, float]
    duration: float
    dispersion: float


@dataclass(frozen=True)
class Saccade:
    start_t: float
    end_t: float
    amplitude: float
    duration: float
    peak_velocity: float
    mean_acceleration: float


@dataclass(frozen=True)
class EventSequence:
    fixations: list
    saccades: list


def to_visual_angle(p, cfg: SignalConfig):
    """Degrees of visual angle from screen centre for normalized point(s) ``p``.

    Accepts a single (x, y) pair or an (n, 2) array.
    """
    p = np.asarray(p, dtype=float)
    dx = (p[..., 0] - 0.5) * cfg.screen_width_cm
    dy = (p[..., 1] - 0.5) * cfg.screen_height_cm
    deg_x = np.degrees(np.arctan(dx / cfg.viewing_distance_cm))
    deg_y = np.degrees(np.arctan(dy / cfg.viewing_distance_cm))
    if deg_x.ndim == 0:
        return float(deg_x), float(deg_y)
    return deg_x, deg_y


def idt_segments(t, x, y, threshold, min_duration):
    """Dispersion-threshold segmentation on arbitrary coordinates.

    Returns (start, stop) index pairs, ``stop`` inclusive. Dispersion is
    (max x - min x) + (max y - min y), in whatever units ``x``/``y`` use.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    out = []
    i = 0
    while i < n:
        # smallest window spanning min_duration
        j = int(np.searchsorted(t, t[i] + min_duration, side="left"))
        if j >= n:
            break
        xmin, xmax = x[i:j + 1].min(), x[i:j + 1].max()
        ymin, ymax = y[i:j + 1].min(), y[i:j + 1].max()
        if (xmax - xmin) + (ymax - ymin) > threshold:
            i += 1
            continue
        while j + 1 < n:
            nx, ny = x[j + 1], y[j + 1]
            d = (max(xmax, nx) - min(xmin, nx)) + (max(ymax, ny) - min(ymin, ny))
            if d > threshold:
                break
            xmin, xmax = min(xmin, nx), max(xmax, nx)
            ymin, ymax = min(ymin, ny), max(ymax, ny)
            j += 1
        out.append((i, j))
        i = j + 1
    return out


def detect_fixations(trial: TrialWindow, cfg: EventConfig, geometry: SignalConfig | None = None):
    geometry = geometry or SignalConfig()
    if len(trial) == 0:
        return []
    dx, dy = to_visual_angle(np.column_stack([trial.x, trial.y]), geometry)
    fixations = []
    for i, j in idt_segments(trial.t, dx, dy, cfg.dispersion_threshold_deg, cfg.min_fixation_ms):
        sl = slice(i, j + 1)
        disp = float(np.ptp(dx[sl]) + np.ptp(dy[sl]))
        fixations.append(Fixation(
            start_t=float(trial.t[i]),
            end_t=float(trial.t[j]),
            centroid=(float(trial.x[sl].mean()), float(trial.y[sl].mean())),
            duration=float(trial.t[j] - trial.t[i]),
            dispersion=disp,
        ))
    return fixations


def angular_velocity(t, deg_x, deg_y):
    """Speed in deg/s: central differences inside, one-sided at the ends."""
    t = np.asarray(t, dtype=float) / 1000.0
    n = len(t)
    if n < 2:
        return np.zeros(n)
    pos = np.column_stack([deg_x, deg_y]).astype(float)
    lo = np.r_[0, np.arange(n - 2), n - 2]
    hi = np.r_[1, np.arange(2, n), n - 1]
    vel = (pos[hi] - pos[lo]) / (t[hi] - t[lo])[:, None]
    return np.hypot(vel[:, 0], vel[:, 1])


def _runs(mask):
    """(start, stop) inclusive index pairs of maximal True runs."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2], edges[1::2] - 1))


def detect_saccades(trial: TrialWindow, cfg: EventConfig, geometry: SignalConfig | None = None):
    """Velocity-threshold saccades.

    Onset velocity for the acceleration estimate is taken at the last
    sub-threshold sample before the run, so rise time is always positive
    except for runs starting at the first sample. Single-sample runs have no
    measurable duration and are discarded.
    """
    geometry = geometry or SignalConfig()
    if len(trial) < 2:
        return []
    dx, dy = to_visual_angle(np.column_stack([trial.x, trial.y]), geometry)
    speed = angular_velocity(trial.t, dx, dy)
    saccades = []
    for a, b in _runs(speed > cfg.velocity_threshold_deg_s):
        if b == a:
            continue
        peak_idx = a + int(np.argmax(speed[a:b + 1]))
        onset = a - 1 if a > 0 else a
        rise_s = (trial.t[peak_idx] - trial.t[onset]) / 1000.0
        accel = (speed[peak_idx] - speed[onset]) / rise_s if rise_s > 0 else 0.0
        saccades.append(Saccade(
            start_t=float(trial.t[a]),
            end_t=float(trial.t[b]),
            amplitude=float(np.hypot(dx[b] - dx[a], dy[b] - dy[a])),
            duration=float(trial.t[b] - trial.t[a]),
            peak_velocity=float(speed[peak_idx]),
            mean_acceleration=float(accel),
        ))
    return saccades


def detect_events(trial, cfg, geometry=None) -> EventSequence:
    return EventSequence(detect_fixations(trial, cfg, geometry), detect_saccades(trial, cfg, geometry))


def _stats(values):
    values = np.asarray(values, dtype=float)
    return float(values.mean()), float(np.median(values)), float(values.var())


def fixation_stats(fixations) -> dict:
    """Mean/median/population variance of fixation duration and dispersion."""
    if not fixations:
        keys = ("dur_mean", "dur_median", "dur_var", "disp_mean", "disp_median", "disp_var")
        return dict.fromkeys(keys, 0.0) | {"empty": True}
    dm, dmed, dv = _stats([f.duration for f in fixations])
    pm, pmed, pv = _stats([f.dispersion for f in fixations])
    return {"dur_mean": dm, "dur_median": dmed, "dur_var": dv,
            "disp_mean": pm, "disp_median": pmed, "disp_var": pv, "empty": False}


def pupil_stats(trial: TrialWindow) -> dict:
    values = trial.pupil[trial.valid]
    if values.size == 0:
        raise ValidationError(f"trial {trial.trial_id}: no valid samples for pupil statistics")
    return {"mean": float(values.mean()), "min": float(values.min()),
            "max": float(values.max()), "var": float(values.var())}

"""Physiological signal preprocessing.

Turns raw eye-tracker, heart-rate and EDA streams into per-gap features
(normalized heart rate, SCR amplitude, left-gaze deviation, gaze
dispersion) and fixation records into per-task attribute shares.

Angles are in degrees, times in seconds, EDA in microsiemens.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

ZONES = ("left", "right", "up", "down", "centre")
LEFT, RIGHT, UP, DOWN, CENTRE = range(5)
CENTRE_RADIUS = 6.0
WINDOW = 5.0
SCR_WINDOW = 5.0
SCR_MIN_AMPLITUDE = 0.01


def aggregate_gaze(head_yaw, head_pitch, left_yaw, left_pitch, right_yaw, right_pitch):
    """Head direction plus the mean of both eyes, for yaw and pitch.

    Works elementwise on arrays; any NaN channel makes that sample NaN.
    """
    yaw = np.asarray(head_yaw, float) + 0.5 * np.asarray(left_yaw, float) + 0.5 * np.asarray(right_yaw, float)
    pitch = np.asarray(head_pitch, float) + 0.5 * np.asarray(left_pitch, float) + 0.5 * np.asarray(right_pitch, float)
    if yaw.ndim == 0:
        return float(yaw), float(pitch)
    return yaw, pitch


def recenter(yaw, pitch):
    """Subtract the mean so both angle series average to zero."""
    yaw = np.asarray(yaw, float)
    pitch = np.asarray(pitch, float)
    if yaw.size == 0:
        raise DataError("cannot recenter an empty gaze stream")
    yaw = yaw - yaw.mean()
    pitch = pitch - pitch.mean()
    # a second pass removes the rounding residue of the first
    return yaw - yaw.mean(), pitch - pitch.mean()


def zone_codes(yaw, pitch, positive_yaw_left=True, radius=CENTRE_RADIUS):
    """Vectorized zone index (see ``ZONES``) for recentered angles.

    Ties ``|yaw| == |pitch|`` outside the centre go to up/down.
    """
    yaw = np.asarray(yaw, float)
    pitch = np.asarray(pitch, float)
    horizontal = np.abs(yaw) > np.abs(pitch)
    to_left = (yaw > 0) if positive_yaw_left else (yaw < 0)
    code = np.where(horizontal, np.where(to_left, LEFT, RIGHT), np.where(pitch >= 0, UP, DOWN))
    return np.where(yaw * yaw + pitch * pitch < radius * radius, CENTRE, code)


def zone_of(yaw, pitch, positive_yaw_left=True, radius=CENTRE_RADIUS) -> str:
    """Zone name of a single recentered gaze direction.

    Examples
    --------
    >>> zone_of(5, 3)
    'centre'
    >>> zone_of(10, 0)
    'left'
    """
    return ZONES[int(zone_codes(yaw, pitch, positive_yaw_left, radius))]


def interval_weights(t):
    """Duration owned by each sample: the gap to its successor.

    The last sample gets the median inter-sample interval; a lone sample
    gets weight 1.
    """
    t = np.asarray(t, float)
    if t.size == 0:
        return np.zeros(0)
    if t.size == 1:
        return np.ones(1)
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise DataError("timestamps must be strictly increasing")
    return np.append(dt, np.median(dt))


def zone_shares(codes, weights):
    """Time-weighted share of each of the five zones."""
    codes = np.asarray(codes, int)
    weights = np.asarray(weights, float)
    total = weights.sum()
    if codes.size == 0 or total <= 0:
        raise DataError("zone shares need at least one sample")
    return np.bincount(codes, weights=weights, minlength=len(ZONES)) / total


def window_mask(t, onset, window=WINDOW):
    """Samples in [onset - window, onset)."""
    t = np.asarray(t, float)
    return (t >= onset - window) & (t < onset)


def left_share_deviation(t, codes, weights, onset, overall_share, window=WINDOW, gap=None):
    """Left-zone time share in the window before ``onset`` minus ``overall_share``."""
    m = window_mask(t, onset, window)
    if not np.any(m):
        raise DataError(f"gap {gap if gap is not None else onset!r}: no gaze samples in the {window} s before onset {onset}")
    share = zone_shares(np.asarray(codes)[m], np.asarray(weights)[m])[LEFT]
    return float(share - overall_share)


def gaze_dispersion(t, yaw, pitch, onset, window=WINDOW, gap=None):
    """Sample standard deviations of yaw and pitch in the pre-onset window."""
    m = window_mask(t, onset, window)
    if m.sum() < 2:
        raise DataError(f"gap {gap if gap is not None else onset!r}: gaze dispersion needs >= 2 samples in window, got {int(m.sum())}")
    return float(np.std(np.asarray(yaw)[m], ddof=1)), float(np.std(np.asarray(pitch)[m], ddof=1))


def normalize_hr(series, value):
    """z-score of ``value`` against the mean and sample SD of ``series``.

    Examples
    --------
    >>> normalize_hr([60, 70, 80], 80)
    1.0
    """
    s = np.asarray(series, float)
    s = s[~np.isnan(s)]
    if s.size < 2:
        raise DataError(f"heart-rate normalization needs >= 2 samples, got {s.size}")
    sd = np.std(s, ddof=1)
    if not sd > 0:
        raise DataError("heart-rate channel is flat (zero standard deviation)")
    return float((np.asarray(value, float) - s.mean()) / sd)


def scr_amplitude(eda, min_amplitude=SCR_MIN_AMPLITUDE):
    """Largest trough-to-peak rise in an EDA segment.

    Each sample is compared with the lowest value before it; rises below
    ``min_amplitude`` count as no response.
    """
    x = np.asarray(eda, float)
    x = x[~np.isnan(x)]
    if x.size == 0:
        raise DataError("SCR window is empty")
    rise = float(np.max(x - np.minimum.accumulate(x)))
    return rise if rise >= min_amplitude else 0.0


def scr_extract(eda, t=None, onset=None, window=SCR_WINDOW, min_amplitude=SCR_MIN_AMPLITUDE, gap=None):
    """SCR amplitude in [onset, onset + window), or over ``eda`` if no times are given.

    Examples
    --------
    >>> round(scr_extract([2.00, 1.95, 2.40]), 12)
    0.45
    """
    eda = np.asarray(eda, float)
    if t is not None:
        t = np.asarray(t, float)
        m = (t >= onset) & (t < onset + window) & ~np.isnan(eda)
        if not np.any(m):
            raise DataError(f"gap {gap if gap is not None else onset!r}: no EDA samples in [{onset}, {onset + window})")
        eda = eda[m]
    return scr_amplitude(eda, min_amplitude)


def fixation_shares(attributes, durations, n_attributes):
    """Per-attribute fixation-count and viewing-time shares for one task.

    Fixations whose attribute index is missing or outside
    ``[0, n_attributes)`` are excluded.

    Returns
    -------
    count_shares, time_shares : ndarray, shape (n_attributes,)
    excluded : int
    """
    a = np.asarray(attributes, float)
    d = np.asarray(durations, float)
    if a.shape != d.shape:
        raise DataError("attribute and duration arrays differ in length")
    if np.any(~(d > 0)):
        raise DataError("fixation durations must be > 0")
    ok = ~np.isnan(a) & (a >= 0) & (a < n_attributes) & (a == np.round(a))
    if not np.any(ok):
        raise DataError("task has no fixations on any attribute")
    k = a[ok].astype(int)
    counts = np.bincount(k, minlength=n_attributes).astype(float)
    times = np.bincount(k, weights=d[ok], minlength=n_attributes)
    return counts / counts.sum(), times / times.sum(), int((~ok).sum())


@dataclass
class SignalStream:
    """One participant's time-ordered samples; missing channels are NaN."""

    participant_id: str
    t: np.ndarray
    head_yaw: np.ndarray
    head_pitch: np.ndarray
    left_yaw: np.ndarray
    left_pitch: np.ndarray
    right_yaw: np.ndarray
    right_pitch: np.ndarray
    hr: np.ndarray
    eda: np.ndarray

    def __post_init__(self):
        if np.any(np.diff(self.t) <= 0):
            raise DataError(f"participant {self.participant_id!r}: timestamps must be strictly increasing")

    def gaze(self):
        """Aggregated gaze over samples with all six angles; returns (t, yaw, pitch, n_skipped)."""
        yaw, pitch = aggregate_gaze(self.head_yaw, self.head_pitch, self.left_yaw, self.left_pitch,
                                    self.right_yaw, self.right_pitch)
        ok = np.isfinite(yaw) & np.isfinite(pitch)
        return self.t[ok], yaw[ok], pitch[ok], int((~ok).sum())


@dataclass(frozen=True)
class GazeConfig:
    window: float = WINDOW
    scr_window: float = SCR_WINDOW
    scr_min_amplitude: float = SCR_MIN_AMPLITUDE
    centre_radius: float = CENTRE_RADIUS
    positive_yaw_left: bool = True


def gap_features(stream: SignalStream, onsets, gap_ids=None, config: GazeConfig = GazeConfig()):
    """Physiological features for each gap onset of one participant.

    Heart rate at a gap is the last valid sample at or before onset,
    normalized over the whole stream. Gaze angles are recentered over the
    whole stream, which spans both gap-acceptance tasks.

    Returns
    -------
    features : dict of ndarray
        ``z_hr``, ``z_scr``, ``y_gaze_left``, ``y_gaze_yaw_sd``, ``y_gaze_pitch_sd``.
    skipped : int
        Samples dropped from the gaze channels for a missing angle.
    """
    onsets = np.asarray(onsets, float)
    gap_ids = list(gap_ids) if gap_ids is not None else list(onsets)
    t, yaw, pitch, skipped = stream.gaze()
    if t.size == 0:
        raise DataError(f"participant {stream.participant_id!r}: no sample has all six gaze angles")
    yaw, pitch = recenter(yaw, pitch)
    codes = zone_codes(yaw, pitch, config.positive_yaw_left, config.centre_radius)
    w = interval_weights(t)
    overall_left = zone_shares(codes, w)[LEFT]

    hr_ok = ~np.isnan(stream.hr)
    hr_t, hr = stream.t[hr_ok], stream.hr[hr_ok]
    out = {k: np.empty(onsets.size) for k in ("z_hr", "z_scr", "y_gaze_left", "y_gaze_yaw_sd", "y_gaze_pitch_sd")}
    for i, (onset, gid) in enumerate(zip(onsets, gap_ids)):
        before = np.flatnonzero(hr_t <= onset)
        if before.size == 0:
            raise DataError(f"participant {stream.participant_id!r}, gap {gid!r}: no heart-rate sample at or before onset")
        out["z_hr"][i] = normalize_hr(hr, hr[before[-1]])
        out["z_scr"][i] = scr_extract(stream.eda, stream.t, onset, config.scr_window, config.scr_min_amplitude, gap=gid)
        out["y_gaze_left"][i] = left_share_deviation(t, codes, w, onset, overall_left, config.window, gap=gid)
        out["y_gaze_yaw_sd"][i], out["y_gaze_pitch_sd"][i] = gaze_dispersion(t, yaw, pitch, onset, config.window, gap=gid)
    return out, skipped

"""Beat segmentation, template matching quality, session screening and
five-beat window selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BeatTooLong, FewerThanTwoPeaks, NoBeats, ZeroVariance
from .signal_core import (
    FilterSpec,
    PeakSpec,
    TimeSeries,
    bandpass_filter,
    detect_peaks,
    minmax_normalize,
)

MIN_PEAKS = 50
SQI_THRESHOLD = 0.8
WINDOW_BEATS = 5
MAX_WINDOWS = 20
PAD_LENGTH = 512


@dataclass(frozen=True)
class Beat:
    samples: np.ndarray
    peak_index: int
    start_index: int

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class BeatTemplate:
    samples: np.ndarray

    @property
    def template_len(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class BeatWindow:
    beats: tuple
    mean_sqi: float
    start_beat_index: int

    def to_array(self, target: int = PAD_LENGTH) -> np.ndarray:
        """Stack the padded beats as a ``(5, target)`` array."""
        return np.stack([pad_beat(b, target) for b in self.beats])


class ScreenStatus(str, Enum):
    ACCEPTED = "Accepted"
    TOO_FEW_PEAKS = "ExcludedTooFewPeaks"
    LOW_SQI = "ExcludedLowSqi"


@dataclass
class ScreenResult:
    status: ScreenStatus
    peak_count: int
    best_window_sqi: float | None = None


@dataclass
class SessionResult:
    screen: ScreenResult
    windows: list = field(default_factory=list)
    n_beats: int = 0


def resample_linear(x: np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if len(x) == n:
        return x.copy()
    return np.interp(np.linspace(0.0, 1.0, n), np.linspace(0.0, 1.0, len(x)), x)


def find_feet(x: TimeSeries, peaks, min_distance: int) -> np.ndarray:
    """Systolic foot of each peak: the lowest sample in ``(peak - min_distance, peak]``."""
    v = x.samples
    feet = []
    for p in peaks:
        lo = max(0, p - min_distance + 1)
        feet.append(lo + int(np.argmin(v[lo : p + 1])))
    return np.array(feet, dtype=int)


def segment_beats(x: TimeSeries, peaks, min_distance: int = PeakSpec.min_distance) -> list[Beat]:
    peaks = np.asarray(peaks, dtype=int)
    if len(peaks) < 2:
        raise FewerThanTwoPeaks(f"need at least two peaks, got {len(peaks)}")
    feet = find_feet(x, peaks, min_distance)
    beats = []
    for i in range(len(peaks) - 1):
        a, b = feet[i], feet[i + 1]
        beats.append(Beat(x.samples[a:b].copy(), int(peaks[i] - a), int(a)))
    return beats


def compute_template(beats) -> BeatTemplate:
    beats = list(beats)
    if not beats:
        raise NoBeats("cannot build a template from zero beats")
    n = int(np.median([len(b) for b in beats]))
    stacked = np.stack([resample_linear(b.samples, n) for b in beats])
    return BeatTemplate(stacked.mean(axis=0))


def beat_sqi(beat: Beat, template: BeatTemplate) -> float:
    """Pearson correlation of the resampled beat with the template, floored at 0."""
    b = resample_linear(beat.samples, template.template_len)
    t = template.samples
    db, dt = b - b.mean(), t - t.mean()
    nb, nt = float(np.sqrt(db @ db)), float(np.sqrt(dt @ dt))
    if nb == 0.0 or nt == 0.0:
        raise ZeroVariance("beat or template is constant")
    r = float(db @ dt) / (nb * nt)
    return min(1.0, max(0.0, r))


def select_windows(beats, sqis, window: int = WINDOW_BEATS, max_windows: int | None = MAX_WINDOWS,
                   threshold: float | None = SQI_THRESHOLD) -> list[BeatWindow]:
    """Rank every run of ``window`` consecutive beats by mean SQI.

    Runs whose mean does not exceed ``threshold`` are dropped (``None`` keeps
    all of them); ties keep the earlier start.
    """
    beats = list(beats)
    sqis = [float(s) for s in sqis]
    if len(sqis) != len(beats):
        raise ValueError("sqis must align with beats")
    found = []
    for start in range(len(beats) - window + 1):
        mean = math.fsum(sqis[start : start + window]) / window
        if threshold is None or mean > threshold:
            found.append(BeatWindow(tuple(beats[start : start + window]), mean, start))
    found.sort(key=lambda w: (-w.mean_sqi, w.start_beat_index))
    return found if max_windows is None else found[:max_windows]


def pad_beat(beat, target: int = PAD_LENGTH) -> np.ndarray:
    samples = beat.samples if isinstance(beat, Beat) else np.asarray(beat, dtype=float)
    if len(samples) > target:
        raise BeatTooLong(f"beat of length {len(samples)} exceeds {target}")
    out = np.zeros(target)
    out[: len(samples)] = samples
    return out


def _analyse(x: TimeSeries, spec: PeakSpec, min_peaks: int, threshold: float | None,
             window: int, max_windows: int | None, pad: int):
    peaks = detect_peaks(x, spec)
    if len(peaks) < min_peaks:
        return ScreenResult(ScreenStatus.TOO_FEW_PEAKS, len(peaks)), [], 0
    beats = segment_beats(x, peaks, spec.min_distance)
    template = compute_template(beats)
    sqis = [_safe_sqi(b, template) for b in beats]
    # windows holding a beat too long to pad are unusable as model input
    windows = [w for w in select_windows(beats, sqis, window, None, threshold)
               if all(len(b) <= pad for b in w.beats)]
    if max_windows is not None:
        windows = windows[:max_windows]
    # screening always judges against the quality threshold, even when the
    # window selection itself is unscreened
    best = max((math.fsum(sqis[i : i + window]) / window for i in range(len(beats) - window + 1)),
               default=None)
    return ScreenResult(ScreenStatus.ACCEPTED, len(peaks), best), windows, len(beats)


def _safe_sqi(beat, template):
    try:
        return beat_sqi(beat, template)
    except ZeroVariance:
        return 0.0


def screen_session(x: TimeSeries, spec: PeakSpec = PeakSpec(), min_peaks: int = MIN_PEAKS,
                   threshold: float = SQI_THRESHOLD, window: int = WINDOW_BEATS) -> ScreenResult:
    result, _, _ = _analyse(x, spec, min_peaks, threshold, window, None, PAD_LENGTH)
    _apply_sqi_gate(result, threshold)
    return result


def _apply_sqi_gate(result: ScreenResult, threshold: float) -> None:
    if result.status is ScreenStatus.ACCEPTED and (result.best_window_sqi is None
                                                   or not result.best_window_sqi > threshold):
        result.status = ScreenStatus.LOW_SQI


def preprocess(x: TimeSeries, filter_spec: FilterSpec = FilterSpec()) -> TimeSeries:
    """Bandpass then min-max normalize a raw PPG/rPPG signal."""
    return minmax_normalize(bandpass_filter(x, filter_spec))


def process_session(raw: TimeSeries, filter_spec: FilterSpec = FilterSpec(), peak_spec: PeakSpec = PeakSpec(),
                    min_peaks: int = MIN_PEAKS, threshold: float = SQI_THRESHOLD, window: int = WINDOW_BEATS,
                    max_windows: int = MAX_WINDOWS, pad: int = PAD_LENGTH, sqi_screen: bool = True) -> SessionResult:
    """Raw signal to ranked model-input windows.

    With ``sqi_screen=False`` the quality exclusion is skipped (the peak-count
    exclusion still applies) and windows are ranked by SQI without a floor.
    """
    x = preprocess(raw, filter_spec)
    screen, windows, n_beats = _analyse(x, peak_spec, min_peaks, threshold if sqi_screen else None,
                                        window, max_windows, pad)
    if sqi_screen:
        _apply_sqi_gate(screen, threshold)
        if screen.status is not ScreenStatus.ACCEPTED:
            windows = []
    return SessionResult(screen, windows, n_beats)

"""One-dimensional signal primitives: bandpass filtering, normalization,
peak detection and distribution statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ConstantSignal, InvalidCutoffs, SignalTooShort, ZeroVariance

# Pad length for forward-backward filtering is this many times the settle
# length of the slowest pole (samples for its envelope to fall to SETTLE_TOL).
PAD_SETTLE_MULTIPLE = 3
SETTLE_TOL = 1e-3

SNR_BAND = (0.7, 4.0)


@dataclass(frozen=True)
class TimeSeries:
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not (math.isfinite(self.fs) and self.fs > 0):
            raise ValueError(f"fs must be finite and positive, got {self.fs}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs


@dataclass(frozen=True)
class FilterSpec:
    order: int = 2
    f_lo: float = 0.7
    f_hi: float = 16.0
    zero_phase: bool = True


@dataclass(frozen=True)
class PeakSpec:
    min_height: float = 0.7
    min_distance: int = 20

    def __post_init__(self):
        if not 0 < self.min_height <= 1:
            raise ValueError("min_height must lie in (0, 1]")
        if self.min_distance < 1:
            raise ValueError("min_distance must be >= 1")


def butter_bandpass_zpk(order: int, f_lo: float, f_hi: float, fs: float):
    """Digital Butterworth bandpass as (zeros, poles, gain).

    The analog lowpass prototype of ``order`` poles is shifted to a bandpass
    around prewarped edges and mapped to z with the bilinear transform, so the
    result has ``2 * order`` poles.
    """
    if f_lo <= 0 or f_hi >= fs / 2 or f_lo >= f_hi:
        raise InvalidCutoffs(f"need 0 < f_lo < f_hi < fs/2; got {f_lo}, {f_hi} at fs={fs}")
    k = np.arange(order)
    proto = np.exp(1j * np.pi * (2 * k + order + 1) / (2 * order))

    c = 2.0 * fs
    w_lo = c * math.tan(math.pi * f_lo / fs)
    w_hi = c * math.tan(math.pi * f_hi / fs)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    # each prototype pole p splits into the two roots of s^2 - p*bw*s + w0^2
    half = proto * bw / 2
    disc = np.sqrt(half**2 - w0_sq)
    poles_s = np.concatenate([half + disc, half - disc])
    zeros_s = np.zeros(order)
    gain_s = bw**order

    poles_z = (c + poles_s) / (c - poles_s)
    zeros_z = np.concatenate([(c + zeros_s) / (c - zeros_s), -np.ones(order)])
    gain_z = gain_s * np.real(np.prod(c - zeros_s) / np.prod(c - poles_s))
    return zeros_z, poles_z, gain_z


def butter_bandpass_sos(spec: FilterSpec, fs: float) -> np.ndarray:
    z, p, k = butter_bandpass_zpk(spec.order, spec.f_lo, spec.f_hi, fs)
    return sps.zpk2sos(z, p, k)


def settle_length(spec: FilterSpec, fs: float) -> int:
    _, p, _ = butter_bandpass_zpk(spec.order, spec.f_lo, spec.f_hi, fs)
    r = float(np.max(np.abs(p)))
    return int(math.ceil(math.log(SETTLE_TOL) / math.log(r)))


def bandpass_filter(x: TimeSeries, spec: FilterSpec = FilterSpec()) -> TimeSeries:
    """Butterworth bandpass; forward-backward (zero phase) when ``spec.zero_phase``."""
    sos = butter_bandpass_sos(spec, x.fs)
    n = len(x)
    if n < 3 * spec.order:
        raise SignalTooShort(f"need at least {3 * spec.order} samples, got {n}")
    if spec.zero_phase:
        padlen = min(PAD_SETTLE_MULTIPLE * settle_length(spec, x.fs), n - 1)
        y = sps.sosfiltfilt(sos, x.samples, padtype="odd", padlen=padlen)
    else:
        zi = sps.sosfilt_zi(sos) * x.samples[0]
        y, _ = sps.sosfilt(sos, x.samples, zi=zi)
    return TimeSeries(y, x.fs)


def minmax_normalize(x: TimeSeries) -> TimeSeries:
    lo = float(np.min(x.samples))
    hi = float(np.max(x.samples))
    if hi == lo:
        raise ConstantSignal("cannot normalize a constant signal")
    return TimeSeries((x.samples - lo) / (hi - lo), x.fs)


def detect_peaks(x: TimeSeries, spec: PeakSpec = PeakSpec()) -> np.ndarray:
    """Strict local maxima at or above ``min_height``, thinned to ``min_distance``.

    Thinning is greedy from the highest candidate down; equal heights favour
    the earlier index.
    """
    v = x.samples
    if len(v) < 3:
        return np.zeros(0, dtype=int)
    mid = v[1:-1]
    cand = np.flatnonzero((mid > v[:-2]) & (mid > v[2:]) & (mid >= spec.min_height)) + 1
    if len(cand) == 0:
        return cand
    # stable sort on -value keeps earlier indices first among ties
    order = np.argsort(-v[cand], kind="stable")
    keep = np.zeros(len(cand), dtype=bool)
    taken: list[int] = []
    for i in order:
        idx = cand[i]
        if all(abs(idx - t) >= spec.min_distance for t in taken):
            keep[i] = True
            taken.append(idx)
    return cand[keep]


def signal_stats(x: TimeSeries) -> dict:
    v = x.samples
    if len(v) < 3:
        raise SignalTooShort("need at least 3 samples")
    d = v - v.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0.0:
        raise ZeroVariance("signal has zero variance")
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    freqs, power = sps.periodogram(v, fs=x.fs, detrend="constant")
    in_band = (freqs >= SNR_BAND[0]) & (freqs <= SNR_BAND[1])
    p_in = float(power[in_band].sum())
    p_out = float(power[~in_band].sum())
    if p_in == 0.0:
        snr = -math.inf
    elif p_out == 0.0:
        snr = math.inf
    else:
        snr = 10.0 * math.log10(p_in / p_out)
    return {
        "skewness": m3 / m2**1.5,
        "excess_kurtosis": m4 / m2**2 - 3.0,
        "snr_db": snr,
    }


def read_signal_csv(path) -> TimeSeries:
    """Read the ``fs=<Hz>`` headed, one-sample-per-line signal format."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("fs="):
            raise ValueError(f"{path}: first line must be 'fs=<Hz>', got {header!r}")
        fs = float(header[3:])
        values = [float(line) for line in fh if line.strip()]
    return TimeSeries(np.array(values), fs)


def write_signal_csv(path, x: TimeSeries) -> None:
    with open(path, "w") as fh:
        fh.write(f"fs={x.fs!r}\n")
        for v in x.samples:
            fh.write(f"{float(v)!r}\n")

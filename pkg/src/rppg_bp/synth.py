"""Synthetic pulse sessions with a known morphology-to-BP relation.

Each beat is the sum of a systolic and a dicrotic Gaussian. The session's
blood pressure is a fixed linear function of the dicrotic ratio and the
systolic peak time, so any model that reads the waveform shape can in
principle recover it exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidMorphology
from .features import HISTORY, MEDICATIONS, RACES, SubjectProfile
from .signal_core import TimeSeries

DICROTIC_DELAY = 0.18  # s after the systolic peak
WANDER_HZ = 0.25

# sbp = SBP_BASE + SBP_A2 * a2 + SBP_MU1 * (SBP_MU1_REF - mu1); dbp = DBP_BASE + DBP_A2 * a2
SBP_BASE, SBP_A2, SBP_MU1, SBP_MU1_REF = 90.0, 50.0, 80.0, 0.25
DBP_BASE, DBP_A2 = 60.0, 25.0


@dataclass(frozen=True)
class MorphParams:
    a1: float = 0.8
    a2: float = 0.6
    mu1: float = 0.175
    sigma1: float = 0.04
    sigma2: float = 0.08

    @property
    def mu2(self) -> float:
        return self.mu1 + DICROTIC_DELAY

    def validate(self, allow_single_wave: bool = False) -> None:
        """Check the labelled ranges; ``allow_single_wave`` also admits ``a2 == 0``."""
        if not 0.6 <= self.a1 <= 1.0:
            raise InvalidMorphology(f"a1={self.a1} outside [0.6, 1.0]")
        if allow_single_wave and self.a2 == 0:
            pass
        elif not 0.3 <= self.a2 <= 0.9:
            raise InvalidMorphology(f"a2={self.a2} outside [0.3, 0.9]")
        if not 0.10 <= self.mu1 <= 0.25:
            raise InvalidMorphology(f"mu1={self.mu1} outside [0.10, 0.25]")
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise InvalidMorphology("widths must be positive")


class Rhythm(str, Enum):
    NSR = "NSR"
    AF = "AF"
    ECTOPY = "FrequentEctopy"
    PACED = "Paced"


@dataclass(frozen=True)
class RhythmPattern:
    kind: Rhythm = Rhythm.NSR
    rr_mean: float = 0.85
    rr_sd: float = 0.02
    af_bounds: tuple = (0.5, 1.1)
    ectopy_every: int = 6
    ectopy_short: float = 0.6
    ectopy_long: float = 1.4
    ectopy_amplitude: float = 0.7
    paced_rr: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Rhythm(self.kind))

    @property
    def mean_rr(self) -> float:
        if self.kind is Rhythm.AF:
            return sum(self.af_bounds) / 2
        if self.kind is Rhythm.PACED:
            return self.paced_rr
        return self.rr_mean

    def beat_plan(self, duration_s: float, rng: np.random.Generator):
        """RR interval, amplitude scale and premature flag per beat until ``duration_s`` is covered."""
        rrs, amps, premature = [], [], []
        t = 0.0
        k = 0
        while t < duration_s:
            amp = 1.0
            early = False
            if self.kind is Rhythm.NSR:
                rr = rng.normal(self.rr_mean, self.rr_sd)
            elif self.kind is Rhythm.AF:
                rr = rng.uniform(*self.af_bounds)
                prev = rrs[-1] if rrs else self.mean_rr
                amp = prev / self.mean_rr
            elif self.kind is Rhythm.PACED:
                rr = self.paced_rr
            else:
                rr = rng.normal(self.rr_mean, self.rr_sd)
                if k % self.ectopy_every == self.ectopy_every - 2:
                    rr *= self.ectopy_short  # the next beat arrives early
                elif k % self.ectopy_every == self.ectopy_every - 1:
                    rr *= self.ectopy_long  # compensatory pause after it
                    amp = self.ectopy_amplitude
                    early = True
            rrs.append(rr)
            amps.append(amp)
            premature.append(early)
            t += rr
            k += 1
        return np.array(rrs), np.array(amps), np.array(premature)


@dataclass
class SynthSession:
    signal: TimeSeries
    rhythm: Rhythm
    true_sbp: float
    true_dbp: float
    profile: SubjectProfile
    seed: int
    morph: MorphParams
    beat_onsets: np.ndarray = field(repr=False, default=None)
    premature: np.ndarray = field(repr=False, default=None)
    session_id: str = ""
    subject_id: str = ""

    @property
    def n_beats(self) -> int:
        return len(self.beat_onsets)


def _pulse(m: MorphParams, n: int, fs: float, a1: float) -> np.ndarray:
    t = np.arange(n) / fs
    return (a1 * np.exp(-((t - m.mu1) ** 2) / (2 * m.sigma1**2))
            + a1 * m.a2 * np.exp(-((t - m.mu2) ** 2) / (2 * m.sigma2**2)))


def synth_beat(m: MorphParams, rr: float, fs: float) -> np.ndarray:
    """One pulse sampled on ``[0, rr)``; ``a2 = 0`` gives the bare systolic Gaussian."""
    m.validate(allow_single_wave=True)
    if rr < m.mu2 + 2 * m.sigma2:
        raise InvalidMorphology(f"rr={rr} too short for the dicrotic wave (needs >= {m.mu2 + 2 * m.sigma2:.3f})")
    return _pulse(m, _n_samples(rr, fs), fs, m.a1)


def _n_samples(duration: float, fs: float) -> int:
    return int(math.floor(duration * fs + 1e-9))


def bp_from_morphology(m: MorphParams, pattern: RhythmPattern | None = None) -> dict:
    """Ground-truth (SBP, DBP) in mm Hg; independent of rhythm by construction."""
    m.validate()
    return {
        "sbp": SBP_BASE + SBP_A2 * m.a2 + SBP_MU1 * (SBP_MU1_REF - m.mu1),
        "dbp": DBP_BASE + DBP_A2 * m.a2,
    }


def synth_session(pattern: RhythmPattern, m: MorphParams, duration_s: float = 120.0,
                  noise: dict | None = None, seed: int = 0, fs: float = 60.0,
                  profile: SubjectProfile | None = None) -> SynthSession:
    """Concatenate beats along the rhythm's RR sequence and add noise.

    Beats shorter than the full two-Gaussian pulse (premature or fast AF
    beats) are truncated where the next beat begins.
    """
    if duration_s < 10:
        raise ValueError("duration must be at least 10 s")
    m.validate()
    noise = {"white_sd": 0.0, "wander_amp": 0.0, **(noise or {})}
    rng = np.random.default_rng(seed)
    rrs, amps, premature = pattern.beat_plan(duration_s, rng)

    n_total = _n_samples(duration_s, fs)
    x = np.zeros(n_total)
    onsets = np.concatenate([[0.0], np.cumsum(rrs)[:-1]])
    starts = np.rint(onsets * fs).astype(int)
    for start, rr, amp in zip(starts, rrs, amps):
        stop = min(int(np.rint((start / fs + rr) * fs)), n_total)
        if stop > start:
            x[start:stop] = _pulse(m, stop - start, fs, m.a1 * amp)

    t = np.arange(n_total) / fs
    if noise["white_sd"] > 0:
        x = x + rng.normal(0.0, noise["white_sd"], n_total)
    if noise["wander_amp"] > 0:
        x = x + noise["wander_amp"] * np.sin(2 * np.pi * WANDER_HZ * t + rng.uniform(0, 2 * np.pi))

    bp = bp_from_morphology(m, pattern)
    if profile is None:
        profile = random_profile(rng)
    return SynthSession(
        signal=TimeSeries(x, fs),
        rhythm=pattern.kind,
        true_sbp=bp["sbp"],
        true_dbp=bp["dbp"],
        profile=profile,
        seed=seed,
        morph=m,
        beat_onsets=onsets,
        premature=premature,
    )


def random_morph(rng: np.random.Generator) -> MorphParams:
    return MorphParams(
        a1=float(rng.uniform(0.6, 1.0)),
        a2=float(rng.uniform(0.3, 0.9)),
        mu1=float(rng.uniform(0.10, 0.25)),
    )


def random_profile(rng: np.random.Generator) -> SubjectProfile:
    """Demographics drawn independently of everything else (carry no BP information)."""
    flags = {f: bool(rng.random() < 0.3) for f in HISTORY + MEDICATIONS}
    return SubjectProfile(
        age=float(np.clip(rng.normal(69, 12), 18, 120)),
        sex=("female", "male")[int(rng.random() < 0.6)],
        bmi=float(np.clip(rng.normal(28.4, 5.5), 15, 60)),
        race=RACES[int(rng.integers(len(RACES)))],
        flags=flags,
        repeat_visit=bool(rng.random() < 0.07),
    )


def make_dataset(n_sessions: int, seed: int = 0, rhythms=(Rhythm.NSR,), duration_s: float = 120.0,
                 noise: dict | None = None, sessions_per_subject: int = 2, fs: float = 60.0) -> list[SynthSession]:
    """Labelled sessions; rhythms cycle in the given order.

    Sessions of one subject share the profile (and rhythm) but each draws its
    own morphology, as two visits' recordings would.
    """
    rhythms = [Rhythm(r) for r in rhythms]
    master = np.random.default_rng(seed)
    sessions = []
    profile = None
    for i in range(n_sessions):
        subject = i // sessions_per_subject
        rhythm = rhythms[subject % len(rhythms)]
        sub_seed = int(master.integers(2**63 - 1))
        rng = np.random.default_rng(sub_seed)
        if i % sessions_per_subject == 0:
            profile = random_profile(rng)
        s = synth_session(RhythmPattern(rhythm), random_morph(rng), duration_s, noise, sub_seed, fs, profile)
        s.session_id = f"s{i:04d}"
        s.subject_id = f"p{subject:04d}"
        sessions.append(s)
    return sessions


def frames_from_signal(x: TimeSeries, base: float = 120.0, gain: float = 8.0, size: int = 72,
                       eye_rows=(18, 32), eye_flicker: float = 30.0, seed: int = 0,
                       quantize: bool = False) -> list[np.ndarray]:
    """Constant-face frames whose green channel tracks ``base + gain * x``.

    Red and blue stay constant. Rows inside ``eye_rows`` carry independent
    flicker that the default mask must reject. With ``quantize`` the frames
    are uint8 and the green level is dithered so the region mean stays within
    one grey level / cell-count of the target.
    """
    rng = np.random.default_rng(seed)
    frames = []
    face = np.ones(size, dtype=bool)
    face[eye_rows[0] : eye_rows[1] + 1] = False
    n_face = int(face.sum()) * size
    for v in x.samples:
        level = base + gain * float(v)
        f = np.empty((size, size, 3))
        f[:, :, 0] = 150.0
        f[:, :, 2] = 90.0
        if quantize:
            total = int(round(level * n_face))
            lo, extra = divmod(total, n_face)
            g = np.full(n_face, float(lo))
            g[:extra] += 1
            f[face, :, 1] = g.reshape(-1, size)
        else:
            f[face, :, 1] = level
        f[~face, :, 1] = np.clip(base + rng.normal(0, eye_flicker, (int((~face).sum()), size)), 0, 255)
        frames.append(f.astype(np.uint8) if quantize else f)
    return frames


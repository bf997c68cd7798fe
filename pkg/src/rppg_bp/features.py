"""Fixed 37-slot encoding of subject demographics, history and medications.

Layout (version ``FEATURE_LAYOUT_VERSION``)::

    [0]       z-scored age
    [1]       sex, 1 = male
    [2]       z-scored BMI
    [3..7]    race one-hot, order of RACES
    [8..18]   history flags, order of HISTORY
    [19..32]  medication flags, order of MEDICATIONS
    [33..36]  derived flags, order of DERIVED
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import NormDegenerate, OutOfRangeAge, OutOfRangeBmi

logger = logging.getLogger(__name__)

FEATURE_LAYOUT_VERSION = 1
N_FEATURES = 37

RACES = ("white", "black", "asian", "hispanic", "other")
HISTORY = (
    "dyslipidemia",
    "hypertension",
    "diabetes_ii",
    "cad",
    "af_flutter",
    "sleep_apnea",
    "valvular_disease",
    "cardiomyopathy",
    "chf",
    "ckd",
    "pacemaker",
)
MEDICATIONS = (
    "antihypertensive_any",
    "acei_arb",
    "beta_blocker",
    "ccb",
    "thiazide",
    "mra",
    "aspirin",
    "warfarin",
    "statin",
    "other_diuretic",
    "antiarrhythmic",
    "pde5i",
    "sglt2i",
    "arni",
)
DERIVED = ("any_antithrombotic", "any_diabetes_agent", "multi_antihypertensive", "repeat_visit")
ANTIHYPERTENSIVE_CLASSES = ("acei_arb", "beta_blocker", "ccb", "thiazide", "mra", "other_diuretic", "arni")

SLOT_AGE, SLOT_SEX, SLOT_BMI = 0, 1, 2
SLOT_RACE = 3
SLOT_HISTORY = SLOT_RACE + len(RACES)
SLOT_MEDS = SLOT_HISTORY + len(HISTORY)
SLOT_DERIVED = SLOT_MEDS + len(MEDICATIONS)
assert SLOT_DERIVED + len(DERIVED) == N_FEATURES

FLAGS = HISTORY + MEDICATIONS


@dataclass
class SubjectProfile:
    age: float
    sex: str
    bmi: float
    race: str = "other"
    flags: dict = field(default_factory=dict)
    repeat_visit: bool = False

    def __post_init__(self):
        if self.sex not in ("female", "male"):
            raise ValueError(f"sex must be 'female' or 'male', got {self.sex!r}")
        if self.race not in RACES:
            raise ValueError(f"race must be one of {RACES}, got {self.race!r}")
        unknown = set(self.flags) - set(FLAGS)
        if unknown:
            raise ValueError(f"unknown flags: {sorted(unknown)}")
        self.flags = {f: bool(self.flags.get(f, False)) for f in FLAGS}

    def flag(self, name: str) -> bool:
        return bool(self.flags.get(name, False))

    @classmethod
    def from_dict(cls, doc: dict) -> "SubjectProfile":
        """Build from a flat JSON record; missing flags default to false."""
        doc = dict(doc)
        missing = [f for f in FLAGS if f not in doc]
        if missing:
            logger.warning("profile %s: %d flags missing, defaulting to false",
                           doc.get("session_id", "?"), len(missing))
        known = {f.name for f in fields(cls)} | set(FLAGS) | {"session_id", "subject_id"}
        for key in sorted(set(doc) - known):
            logger.warning("profile %s: ignoring unknown field %r", doc.get("session_id", "?"), key)
        return cls(
            age=float(doc["age"]),
            sex=doc["sex"],
            bmi=float(doc["bmi"]),
            race=doc.get("race", "other"),
            flags={f: bool(doc.get(f, False)) for f in FLAGS},
            repeat_visit=bool(doc.get("repeat_visit", False)),
        )

    def to_dict(self) -> dict:
        doc = {"age": self.age, "sex": self.sex, "bmi": self.bmi, "race": self.race}
        doc.update({f: self.flag(f) for f in FLAGS})
        doc["repeat_visit"] = bool(self.repeat_visit)
        return doc


def derived_flags(p: SubjectProfile) -> tuple:
    n_classes = sum(p.flag(c) for c in ANTIHYPERTENSIVE_CLASSES)
    return (
        p.flag("aspirin") or p.flag("warfarin"),
        p.flag("sglt2i"),
        n_classes >= 2,
        bool(p.repeat_visit),
    )


def encode_profile(p: SubjectProfile, norm: dict) -> np.ndarray:
    if not 18 <= p.age <= 120:
        raise OutOfRangeAge(f"age {p.age} outside [18, 120]")
    if not 10 < p.bmi < 80:
        raise OutOfRangeBmi(f"bmi {p.bmi} outside (10, 80)")
    if not (norm["age_sd"] > 0 and norm["bmi_sd"] > 0):
        raise NormDegenerate("normalization SDs must be positive")
    v = np.zeros(N_FEATURES)
    v[SLOT_AGE] = (p.age - norm["age_mean"]) / norm["age_sd"]
    v[SLOT_SEX] = p.sex == "male"
    v[SLOT_BMI] = (p.bmi - norm["bmi_mean"]) / norm["bmi_sd"]
    v[SLOT_RACE + RACES.index(p.race)] = 1.0
    v[SLOT_HISTORY:SLOT_MEDS] = [p.flag(f) for f in HISTORY]
    v[SLOT_MEDS:SLOT_DERIVED] = [p.flag(f) for f in MEDICATIONS]
    v[SLOT_DERIVED:] = derived_flags(p)
    return v


def fit_norm(profiles) -> dict:
    ages = np.array([p.age for p in profiles], dtype=float)
    bmis = np.array([p.bmi for p in profiles], dtype=float)
    if len(ages) < 2:
        raise NormDegenerate("need at least two profiles to estimate normalization")
    norm = {
        "age_mean": float(ages.mean()),
        "age_sd": float(ages.std(ddof=1)),
        "bmi_mean": float(bmis.mean()),
        "bmi_sd": float(bmis.std(ddof=1)),
    }
    if not (norm["age_sd"] > 0 and norm["bmi_sd"] > 0):
        raise NormDegenerate("training profiles have constant age or BMI")
    return norm


class ProfileEncoder(TransformerMixin, BaseEstimator):
    """Learns age/BMI normalization on training profiles, then encodes to 37 slots.

    ``norm`` may be given up front to skip fitting (e.g. restored from a checkpoint).
    """

    def __init__(self, norm=None):
        self.norm = norm

    def fit(self, X, y=None):
        self.norm_ = dict(self.norm) if self.norm is not None else fit_norm(list(X))
        self.layout_version_ = FEATURE_LAYOUT_VERSION
        return self

    def transform(self, X):
        check_is_fitted(self, "norm_")
        return np.stack([encode_profile(p, self.norm_) for p in X])


def read_profiles_jsonl(path) -> dict:
    """Map ``session_id -> (subject_id, SubjectProfile)``."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            sid = str(doc["session_id"])
            out[sid] = (str(doc.get("subject_id", sid)), SubjectProfile.from_dict(doc))
    return out


def write_profiles_jsonl(path, rows) -> None:
    """``rows`` is an iterable of ``(session_id, subject_id, SubjectProfile)``."""
    with open(path, "w") as fh:
        for session_id, subject_id, p in rows:
            doc = {"session_id": session_id, "subject_id": subject_id}
            doc.update(p.to_dict())
            fh.write(json.dumps(doc) + "\n")

"""Agreement and hypothesis-test statistics for BP predictions.

Residuals are always ``pred - truth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateVariance, EmptySample, LengthMismatch, UnknownRhythmLabel

RHYTHMS = ("NSR", "AF", "FrequentEctopy", "Paced")
EXACT_MWU_MAX_PRODUCT = 400  # exact U distribution when n_a * n_b <= this
MCNEMAR_EXACT_BELOW = 25  # exact binomial when b + c < this
LOA_Z = 1.96


def _pair(pred, truth, min_len=2):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if len(pred) != len(truth):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(truth)} references")
    if len(pred) < min_len:
        raise LengthMismatch(f"need at least {min_len} pairs")
    return pred, truth


def pearson_r(x, y) -> float:
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = math.sqrt(dx @ dx), math.sqrt(dy @ dy)
    if sy == 0.0:
        raise DegenerateVariance("reference values have zero variance")
    if np.array_equal(x, y):
        return 1.0
    if sx == 0.0:
        return float("nan")
    return float(dx @ dy) / (sx * sy)


def regression_metrics(pred, truth) -> dict:
    """MAE, sample SD of residuals and Pearson r (``nan`` for constant predictions)."""
    pred, truth = _pair(pred, truth)
    res = pred - truth
    return {
        "mae": float(np.mean(np.abs(res))),
        "sd_residual": float(np.std(res, ddof=1)),
        "pearson_r": pearson_r(pred, truth),
    }


def bland_altman(pred, truth) -> dict:
    pred, truth = _pair(pred, truth)
    diff = pred - truth
    bias = float(diff.mean())
    sd = float(np.std(diff, ddof=1))
    return {
        "bias": bias,
        "sd_diff": sd,
        "loa_low": bias - LOA_Z * sd,
        "loa_high": bias + LOA_Z * sd,
        "pairs": [((float(p) + float(t)) / 2, float(p) - float(t)) for p, t in zip(pred, truth)],
    }


def _rate(num, den):
    return num / den if den else None


def classification_metrics(pred_class, true_class) -> dict:
    """Confusion-matrix rates; a rate with a zero denominator is ``None``."""
    pred = np.asarray(pred_class).astype(bool).ravel()
    true = np.asarray(true_class).astype(bool).ravel()
    if len(pred) != len(true):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(true)} labels")
    if len(pred) == 0:
        raise LengthMismatch("need at least one prediction")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    tn = int(np.sum(~pred & ~true))
    return {
        "n": len(pred),
        "tp": tp, "fp": fp, "fn": fn, "tn": tn,
        "accuracy": (tp + tn) / len(pred),
        "ppv": _rate(tp, tp + fp),
        "npv": _rate(tn, tn + fn),
        "sensitivity": _rate(tp, tp + fn),
        "specificity": _rate(tn, tn + fp),
    }


def _exact_u_pvalue(ranks2: np.ndarray, n_a: int, u_obs: float) -> float:
    """Two-sided p from the exact permutation distribution of U.

    ``ranks2`` are doubled midranks of the pooled sample (integers even with
    ties). Counts subsets of size ``n_a`` by doubled rank sum.
    """
    n = len(ranks2)
    k = min(n_a, n - n_a)
    total = int(ranks2.sum())
    counts = np.zeros((k + 1, total + 1))
    counts[0, 0] = 1.0
    for r in ranks2.astype(int):
        counts[1:, r:] += counts[:-1, : total + 1 - r].copy()
    dist = counts[k]
    sums2 = np.flatnonzero(dist)
    probs = dist[sums2] / math.comb(n, k)
    # the DP group has size k; map its rank sums to U of the first sample
    u_k = sums2 / 2.0 - k * (k + 1) / 2.0
    n_other = n - k
    u = u_k if k == n_a else k * n_other - u_k
    mu = n_a * (n - n_a) / 2.0
    dev = abs(u_obs - mu)
    return float(min(1.0, probs[np.abs(u - mu) >= dev - 1e-9].sum()))


def mann_whitney_u(a, b, method: str = "auto") -> dict:
    """Mann-Whitney U of sample ``a`` against ``b`` with a two-sided p-value.

    ``method`` is ``"exact"``, ``"asymptotic"`` (normal approximation with tie
    and continuity corrections) or ``"auto"`` (exact when
    ``len(a) * len(b) <= 400``). The path taken is reported.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise EmptySample("both samples must be non-empty")
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    ranks = stats.rankdata(np.concatenate([a, b]))
    u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2.0)
    if method == "auto":
        method = "exact" if n_a * n_b <= EXACT_MWU_MAX_PRODUCT else "asymptotic"
    if method == "exact":
        p = _exact_u_pvalue(np.rint(2 * ranks), n_a, u)
    elif method == "asymptotic":
        _, tie_counts = np.unique(ranks, return_counts=True)
        tie_term = float(np.sum(tie_counts**3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
        var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
        mu = n_a * n_b / 2.0
        if var <= 0:
            p = 1.0
        else:
            z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
            p = float(min(1.0, 2.0 * stats.norm.sf(z)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return {"u": u, "p_two_sided": p, "method": method, "n_a": n_a, "n_b": n_b}


def mcnemar(b: int, c: int) -> dict:
    """McNemar test on the discordant counts of two paired classifiers."""
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    n = b + c
    if n == 0:
        return {"statistic": 0.0, "p": 1.0, "method": "exact"}
    if n >= MCNEMAR_EXACT_BELOW:
        chi2 = max(abs(b - c) - 1, 0) ** 2 / n
        return {"statistic": float(chi2), "p": float(stats.chi2.sf(chi2, 1)), "method": "chi2"}
    k = min(b, c)
    p = min(1.0, 2.0 * float(stats.binom.cdf(k, n, 0.5)))
    return {"statistic": float(k), "p": p, "method": "exact"}


def mcnemar_from_predictions(pred_a, pred_b, truth) -> dict:
    """Count the discordant pairs (a right / b wrong and vice versa) and test them."""
    ra = np.asarray(pred_a).astype(bool) == np.asarray(truth).astype(bool)
    rb = np.asarray(pred_b).astype(bool) == np.asarray(truth).astype(bool)
    return mcnemar(int(np.sum(ra & ~rb)), int(np.sum(~ra & rb)))


@dataclass
class EvalReport:
    n: int
    mae: float
    sd_residual: float
    pearson_r: float
    bland_altman: dict
    truth_mean: float
    truth_sd: float
    strata: dict = field(default_factory=dict)
    classification: dict | None = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mae": self.mae,
            "sd_residual": self.sd_residual,
            "pearson_r": _json_float(self.pearson_r),
            "bland_altman": self.bland_altman,
            "truth_mean": self.truth_mean,
            "truth_sd": self.truth_sd,
            "strata": {k: {kk: _json_float(vv) for kk, vv in v.items()} for k, v in self.strata.items()},
            "classification": self.classification,
        }

    def to_table(self) -> str:
        """Fixed-width table: one row overall, one per rhythm group."""
        head = f"{'Group':<24}{'n':>6}{'r':>9}{'MAE':>9}{'SD':>9}{'GT mean':>10}{'GT SD':>9}{'p vs NSR':>11}"
        lines = [head, "-" * len(head)]
        lines.append(_row("All", self.n, self.pearson_r, self.mae, self.sd_residual,
                          self.truth_mean, self.truth_sd, None))
        if self.strata:
            lines.append("Rhythm Groups")
            for label, s in self.strata.items():
                mw = s.get("mann_whitney_vs_nsr")
                lines.append(_row("  " + label, s["n"], s.get("pearson_r"), s.get("mae"), s.get("sd_residual"),
                                  s.get("truth_mean"), s.get("truth_sd"), mw["p_two_sided"] if mw else None))
        if self.classification:
            c = self.classification
            lines.append("")
            lines.append("Classification (SBP >= 130 mm Hg)")
            for key in ("accuracy", "ppv", "npv", "sensitivity", "specificity"):
                v = c.get(key)
                lines.append(f"  {key:<14}{'n/a' if v is None else f'{100 * v:.1f}%':>10}")
        return "\n".join(lines) + "\n"


def _json_float(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


def _fmt(v, spec):
    return "n/a" if v is None or (isinstance(v, float) and math.isnan(v)) else format(v, spec)


def _row(label, n, r, mae, sd, gt_mean, gt_sd, p):
    return (f"{label:<24}{n:>6}{_fmt(r, '.3f'):>9}{_fmt(mae, '.2f'):>9}{_fmt(sd, '.2f'):>9}"
            f"{_fmt(gt_mean, '.2f'):>10}{_fmt(gt_sd, '.2f'):>9}{_fmt(p, '.3g'):>11}")


def _summary(pred, truth) -> dict:
    m = regression_metrics(pred, truth)
    ba = bland_altman(pred, truth)
    return {
        **m,
        "bias": ba["bias"],
        "loa_low": ba["loa_low"],
        "loa_high": ba["loa_high"],
        "truth_mean": float(np.mean(truth)),
        "truth_sd": float(np.std(truth, ddof=1)),
    }


def stratified_report(pred, truth, rhythm_labels=None, pred_class=None, true_class=None,
                      mwu_method: str = "auto") -> EvalReport:
    """Overall metrics plus one stratum per rhythm label present.

    Strata with fewer than two sessions are flagged ``insufficient``. Each
    non-NSR stratum carries a Mann-Whitney comparison of its absolute errors
    against the NSR stratum.
    """
    pred, truth = _pair(pred, truth)
    overall = _summary(pred, truth)
    ba = bland_altman(pred, truth)
    report = EvalReport(
        n=len(pred),
        mae=overall["mae"],
        sd_residual=overall["sd_residual"],
        pearson_r=overall["pearson_r"],
        bland_altman={k: ba[k] for k in ("bias", "sd_diff", "loa_low", "loa_high")},
        truth_mean=overall["truth_mean"],
        truth_sd=overall["truth_sd"],
    )
    if rhythm_labels is not None:
        labels = np.asarray([str(r) for r in rhythm_labels])
        if len(labels) != len(pred):
            raise LengthMismatch("rhythm labels must align with predictions")
        unknown = sorted(set(labels) - set(RHYTHMS))
        if unknown:
            raise UnknownRhythmLabel(f"unknown rhythm labels {unknown}; expected {RHYTHMS}")
        abs_err = np.abs(pred - truth)
        nsr = labels == "NSR"
        for label in RHYTHMS:
            sel = labels == label
            n = int(sel.sum())
            if n == 0:
                continue
            stratum = {"n": n, "insufficient": n < 2}
            if n >= 2 and np.std(truth[sel]) > 0:
                stratum.update(_summary(pred[sel], truth[sel]))
            elif n >= 2:
                stratum["insufficient"] = True
            if label != "NSR" and nsr.any():
                stratum["mann_whitney_vs_nsr"] = mann_whitney_u(abs_err[sel], abs_err[nsr], mwu_method)
            report.strata[label] = stratum
    if pred_class is not None and true_class is not None:
        report.classification = classification_metrics(pred_class, true_class)
    return report

"""Baseline interval methods for group label sums.

Four families: conformal prediction over freshly sampled calibration
groups, normal approximations (pooled variance, and per-sample variances
from predicted interquartile ranges), and per-sample conformal intervals
combined with a Bonferroni correction.

Each method has an array-level core (used by the experiment harness) and a
sample-record wrapper carrying the documented contract.
"""

from __future__ import annotations

import logging
import math
from statistics import NormalDist
from typing import Callable, Sequence

import numpy as np

from .cia import interval_from_threshold
from .core import IntervalPrediction, LabeledSample, score_threshold

__all__ = [
    "group_sampling_predict",
    "normal_homoscedastic_predict",
    "normal_hetero_iqr_predict",
    "bonferroni_predict",
    "group_sampling_threshold",
    "pooled_residual_sigma",
    "normal_interval",
    "iqr_sigma",
    "per_sample_split_scores",
    "per_sample_cqr_scores",
    "bonferroni_interval",
    "IQR_TO_SD",
]

logger = logging.getLogger(__name__)

_NORMAL = NormalDist()
# z_{0.75} - z_{0.25}: converts an interquartile range to a normal sigma
IQR_TO_SD = _NORMAL.inv_cdf(0.75) - _NORMAL.inv_cdf(0.25)


def _columns(samples: Sequence[LabeledSample], *flds: str) -> list[np.ndarray]:
    cols = []
    for f in flds:
        vals = []
        for s in samples:
            v = getattr(s, f)
            if v is None:
                raise ValueError(f"sample {s.index} has no {f}")
            vals.append(v)
        cols.append(np.asarray(vals, dtype=float))
    return cols


def _point_interval(group_id: int, alpha: float) -> IntervalPrediction:
    return IntervalPrediction(group_id=group_id, lower=0.0, upper=0.0, alpha=alpha)


# ---------------------------------------------------------------------------
# Group sampling
# ---------------------------------------------------------------------------


def group_sampling_threshold(
    cols: tuple[np.ndarray, ...],
    m: int,
    alpha: float,
    score_kind: str,
    K: int | None,
    rng: np.random.Generator,
) -> float:
    """Score threshold from K disjoint size-m groups drawn from calibration.

    ``cols`` is (y, point_pred) for the split kind or (y, quant_lo,
    quant_hi) for the quantile kind. K defaults to floor(n_cal / m); a
    larger request is reduced with a diagnostic since groups are drawn
    without replacement.
    """
    n_cal = cols[0].size
    max_k = n_cal // m
    if max_k == 0:
        raise ValueError(
            f"group sampling needs at least {m} calibration samples, have {n_cal}"
        )
    if K is None:
        K = max_k
    elif K > max_k:
        logger.warning("group sampling: K reduced from %d to %d", K, max_k)
        K = max_k
    elif K < 1:
        raise ValueError("K must be at least 1")
    chunks = rng.permutation(n_cal)[: K * m].reshape(K, m)
    if score_kind == "split":
        y, pred = cols
        scores = np.abs((y[chunks] - pred[chunks]).sum(axis=1))
    elif score_kind == "cqr":
        y, lo, hi = cols
        scores = np.maximum(
            (lo[chunks] - y[chunks]).sum(axis=1), (y[chunks] - hi[chunks]).sum(axis=1)
        )
    else:
        raise ValueError(f"unknown score kind {score_kind!r}")
    return score_threshold(scores, alpha).value


def group_sampling_predict(
    cal_samples: Sequence[LabeledSample],
    target_test_samples: Sequence[LabeledSample],
    alpha: float,
    score_kind: str = "split",
    K: int | None = None,
    rng_seed: int = 0,
    *,
    group_id: int = -1,
) -> IntervalPrediction:
    """Conformal interval whose calibration groups are sampled, not given.

    Draws K disjoint calibration groups matching the target's test-side
    size, scores them, and centers the interval on the target's summed
    predictions. Exchangeability of sampled groups with the target is an
    assumption here, not a property inherited from the data.
    """
    m = len(target_test_samples)
    if m == 0:
        return _point_interval(group_id, alpha)
    rng = np.random.default_rng(rng_seed)
    if score_kind == "split":
        cols = tuple(_columns(cal_samples, "label", "point_pred"))
        (pred,) = _columns(target_test_samples, "point_pred")
        sums = {"pred_sum": float(pred.sum())}
    else:
        cols = tuple(_columns(cal_samples, "label", "quant_lo", "quant_hi"))
        lo, hi = _columns(target_test_samples, "quant_lo", "quant_hi")
        sums = {"lo_sum": float(lo.sum()), "hi_sum": float(hi.sum())}
    q_value = group_sampling_threshold(cols, m, alpha, score_kind, K, rng)
    return interval_from_threshold(
        group_id, alpha, q_value, score_kind=score_kind, **sums
    )


# ---------------------------------------------------------------------------
# Normal approximations
# ---------------------------------------------------------------------------


def pooled_residual_sigma(y: np.ndarray, pred: np.ndarray) -> float:
    """sqrt of the mean squared residual with an n-1 divisor, no centering."""
    y = np.asarray(y, dtype=float)
    pred = np.asarray(pred, dtype=float)
    if y.size < 2:
        raise ValueError("pooled variance needs at least 2 calibration samples")
    return math.sqrt(float(np.sum((pred - y) ** 2)) / (y.size - 1))


def normal_interval(
    center: float, spread: float, alpha: float, group_id: int = -1
) -> IntervalPrediction:
    """center + [z_{alpha/2}, z_{1-alpha/2}] * spread."""
    return IntervalPrediction(
        group_id=group_id,
        lower=center + _NORMAL.inv_cdf(alpha / 2) * spread,
        upper=center + _NORMAL.inv_cdf(1 - alpha / 2) * spread,
        alpha=alpha,
    )


def iqr_sigma(q25, q75) -> np.ndarray:
    """Per-sample sigma from predicted quartiles; inverted IQRs clamp to 0."""
    q25 = np.atleast_1d(np.asarray(q25, dtype=float))
    q75 = np.atleast_1d(np.asarray(q75, dtype=float))
    iqr = q75 - q25
    inverted = iqr < 0
    if np.any(inverted):
        logger.warning("%d inverted IQR predictions clamped to 0", int(inverted.sum()))
        iqr = np.where(inverted, 0.0, iqr)
    return iqr / IQR_TO_SD


def normal_homoscedastic_predict(
    cal_samples: Sequence[LabeledSample],
    target_test_samples: Sequence[LabeledSample],
    alpha: float,
    *,
    group_id: int = -1,
) -> IntervalPrediction:
    """Normal interval with one pooled residual variance.

    Valid only when residuals really are i.i.d. zero-mean normal; heavy
    tails or model misspecification typically push coverage below target.
    """
    y, pred = _columns(cal_samples, "label", "point_pred")
    sigma = pooled_residual_sigma(y, pred)
    m = len(target_test_samples)
    if m == 0:
        return _point_interval(group_id, alpha)
    (test_pred,) = _columns(target_test_samples, "point_pred")
    return normal_interval(
        float(test_pred.sum()), math.sqrt(m) * sigma, alpha, group_id
    )


def normal_hetero_iqr_predict(
    cal_samples: Sequence[LabeledSample],
    target_test_samples: Sequence[LabeledSample],
    alpha: float,
    quantile_predictor: Callable[[LabeledSample], tuple[float, float]],
    *,
    group_id: int = -1,
) -> IntervalPrediction:
    """Normal interval with per-sample sigmas from predicted IQRs.

    ``quantile_predictor`` maps a test sample to its predicted (0.25, 0.75)
    label quantiles; per-sample variances add across the group.
    """
    m = len(target_test_samples)
    if m == 0:
        return _point_interval(group_id, alpha)
    quarts = np.array([quantile_predictor(s) for s in target_test_samples], dtype=float)
    sigmas = iqr_sigma(quarts[:, 0], quarts[:, 1])
    (test_pred,) = _columns(target_test_samples, "point_pred")
    spread = math.sqrt(float(np.sum(sigmas**2)))
    return normal_interval(float(test_pred.sum()), spread, alpha, group_id)


# ---------------------------------------------------------------------------
# Bonferroni correction
# ---------------------------------------------------------------------------


def per_sample_split_scores(y: np.ndarray, pred: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(y, dtype=float) - np.asarray(pred, dtype=float))


def per_sample_cqr_scores(y, lo, hi) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.maximum(np.asarray(lo, dtype=float) - y, y - np.asarray(hi, dtype=float))


def bonferroni_interval(
    q_value: float,
    test_cols: tuple[np.ndarray, ...],
    alpha: float,
    score_kind: str,
    group_id: int = -1,
) -> IntervalPrediction:
    """Sum the per-sample intervals [c_i - q, c_i + q] (or band versions)."""
    if score_kind == "split":
        (pred,) = test_cols
        lower = float(np.sum(pred - q_value))
        upper = float(np.sum(pred + q_value))
    elif score_kind == "cqr":
        lo, hi = test_cols
        lower = float(np.sum(lo - q_value))
        upper = float(np.sum(hi + q_value))
        if lower > upper:  # bands invert under a strongly negative threshold
            lower = upper = 0.5 * (lower + upper)
    else:
        raise ValueError(f"unknown score kind {score_kind!r}")
    return IntervalPrediction(group_id=group_id, lower=lower, upper=upper, alpha=alpha)


def bonferroni_predict(
    cal_samples: Sequence[LabeledSample],
    target_test_samples: Sequence[LabeledSample],
    alpha: float,
    score_kind: str = "split",
    *,
    group_id: int = -1,
) -> IntervalPrediction:
    """Sum of per-sample conformal intervals at the corrected level alpha/m.

    Every calibration sample contributes an individual score; each of the m
    test samples gets a single-label interval at level alpha/m, and the
    bounds add. The union bound keeps this valid under any dependence.
    """
    m = len(target_test_samples)
    if m == 0:
        return _point_interval(group_id, alpha)
    level = alpha / m
    if score_kind == "split":
        y, pred = _columns(cal_samples, "label", "point_pred")
        q_value = score_threshold(per_sample_split_scores(y, pred), level).value
        test_cols = tuple(_columns(target_test_samples, "point_pred"))
    elif score_kind == "cqr":
        y, lo, hi = _columns(cal_samples, "label", "quant_lo", "quant_hi")
        q_value = score_threshold(per_sample_cqr_scores(y, lo, hi), level).value
        test_cols = tuple(_columns(target_test_samples, "quant_lo", "quant_hi"))
    else:
        raise ValueError(f"unknown score kind {score_kind!r}")
    return bonferroni_interval(q_value, test_cols, alpha, score_kind, group_id)

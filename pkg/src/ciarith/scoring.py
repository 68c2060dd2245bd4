"""Group-level conformity scores: absolute residual sum, and quantile bands.

Both scores collapse to their familiar single-label forms when the group
has one member. The quantile-band score may be negative (labels strictly
inside their bands); it is deliberately not clipped at zero, since negative
scores are what let quantile-based intervals shrink below the band sum.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import LabeledSample

__all__ = ["split_group_score", "cqr_group_score", "split_score", "cqr_score"]


def split_score(y: np.ndarray, y_hat: np.ndarray) -> float:
    """|sum(y - y_hat)| over aligned arrays; empty arrays give 0.0."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.size == 0:
        return 0.0
    return float(abs(np.sum(y - y_hat)))


def cqr_score(y: np.ndarray, q_lo: np.ndarray, q_hi: np.ndarray) -> float:
    """max{sum(q_lo - y), sum(y - q_hi)} over aligned arrays; empty gives 0.0."""
    y = np.asarray(y, dtype=float)
    q_lo = np.asarray(q_lo, dtype=float)
    q_hi = np.asarray(q_hi, dtype=float)
    if y.size == 0:
        return 0.0
    return float(max(np.sum(q_lo - y), np.sum(y - q_hi)))


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


def split_group_score(samples: Sequence[LabeledSample]) -> float:
    """Absolute sum of residuals |sum(y_i - point_pred_i)| for one group."""
    if not samples:
        return 0.0
    y, y_hat = _columns(samples, "label", "point_pred")
    return split_score(y, y_hat)


def cqr_group_score(samples: Sequence[LabeledSample]) -> float:
    """Quantile-band score max{sum(quant_lo - y), sum(y - quant_hi)}.

    Negative when every label sits strictly inside its predicted band.
    """
    if not samples:
        return 0.0
    y, q_lo, q_hi = _columns(samples, "label", "quant_lo", "quant_hi")
    return cqr_score(y, q_lo, q_hi)

"""Per-run metrics computed from step logs."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .sim import StepLog

_POS = [0, 2]
_VEL = [1, 3]
RMSE_GATE = 9.0    # squared Mahalanobis distance, i.e. 3 sigma


def missed_detection_rate(logs: Sequence[StepLog], track_based: bool = False) -> float:
    """Fraction of (step, target) pairs left uncovered by every HPS disk.

    With ``track_based`` a pair counts as detected only when some HPS node
    holds a confirmed track near the truth. Returns NaN when no target was
    ever inside the region.
    """
    flags = [f for lg in logs for f in (lg.tracked if track_based else lg.covered)]
    if not flags:
        return math.nan
    return 1.0 - float(np.mean(flags))


def detection_series(logs: Sequence[StepLog], target: int = 0) -> np.ndarray:
    """Per-step coverage indicator of one target id; NaN where it is absent."""
    out = np.full(len(logs), np.nan)
    for n, lg in enumerate(logs):
        if target in lg.truth_ids:
            out[n] = float(lg.covered[lg.truth_ids.index(target)])
    return out


def rmse(logs: Sequence[StepLog]) -> tuple[float, float]:
    """Position and velocity RMSE over estimates gated to their nearest truth.

    Raises ValueError when no estimate falls inside any truth's gate.
    """
    se_pos, se_vel, n = 0.0, 0.0, 0
    for lg in logs:
        if not lg.truth_ids or not lg.estimates:
            continue
        truths = np.asarray(lg.truths)
        for mean, cov in lg.estimates:
            pc = cov[np.ix_(_POS, _POS)]
            d = truths[:, _POS] - mean[_POS]
            try:
                m2 = np.einsum("ti,ij,tj->t", d, np.linalg.inv(pc), d)
            except np.linalg.LinAlgError:
                continue
            j = int(np.argmin(np.einsum("ti,ti->t", d, d)))
            if m2[j] > RMSE_GATE:
                continue
            se_pos += float(d[j] @ d[j])
            dv = truths[j, _VEL] - mean[_VEL]
            se_vel += float(dv @ dv)
            n += 1
    if n == 0:
        raise ValueError("no estimate associated with any truth")
    return math.sqrt(se_pos / n), math.sqrt(se_vel / n)


def hps_per_target(logs: Sequence[StepLog], warmup: int = 0) -> float:
    """Mean count of HPS nodes per present target over steps after ``warmup``."""
    vals = [lg.hps_count / len(lg.truth_ids) for lg in logs[warmup:] if lg.truth_ids]
    return float(np.mean(vals)) if vals else math.nan

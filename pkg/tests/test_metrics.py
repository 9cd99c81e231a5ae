import math

import numpy as np
import pytest

from poser.metrics import detection_series, hps_per_target, missed_detection_rate, rmse
from poser.sim import StepLog


def _log(k, truths, covered, estimates=(), hps=0):
    truths = np.asarray(truths, dtype=float).reshape(-1, 5)
    ids = tuple(range(len(truths)))
    return StepLog(k, k * 0.5, ids, truths, tuple(covered), tuple(covered), np.zeros(1, int), np.zeros(1),
                   hps, (), (), list(estimates), 0)


T = [0.0, 1.0, 0.0, 0.0, 0.0]


def test_missed_detection_extremes():
    assert missed_detection_rate([_log(k, [T], [True]) for k in range(5)]) == 0.0
    assert missed_detection_rate([_log(k, [T], [False]) for k in range(5)]) == 1.0
    assert missed_detection_rate([_log(0, [T], [True]), _log(1, [T], [False])]) == 0.5
    assert math.isnan(missed_detection_rate([_log(0, np.zeros((0, 5)), [])]))


def test_detection_series_marks_absence():
    logs = [_log(0, np.zeros((0, 5)), []), _log(1, [T], [True]), _log(2, [T], [False])]
    s = detection_series(logs)
    assert math.isnan(s[0]) and s[1:].tolist() == [1.0, 0.0]


def test_rmse_exact_and_gated():
    cov = np.eye(5) * 0.01
    good = (np.array([0.1, 1.0, 0.0, 0.0, 0.0]), cov)
    stray = (np.array([50.0, 0.0, 0.0, 0.0, 0.0]), cov)
    logs = [_log(0, [T], [True], [good, stray])]
    pos, vel = rmse(logs)
    assert pos == pytest.approx(0.1) and vel == pytest.approx(0.0)
    assert rmse(logs) == rmse(logs)
    with pytest.raises(ValueError):
        rmse([_log(0, [T], [True], [stray])])


def test_rmse_zero_for_perfect_estimates():
    logs = [_log(k, [T], [True], [(np.array(T), np.eye(5))]) for k in range(3)]
    assert rmse(logs) == (0.0, 0.0)


def test_hps_per_target():
    logs = [_log(0, [T], [True], hps=9)] + [_log(k, [T, T], [True, True], hps=6) for k in range(1, 4)]
    assert hps_per_target(logs, warmup=1) == 3.0
    assert math.isnan(hps_per_target(logs, warmup=10))

"""Fusion of neighbor track broadcasts into one predicted Gaussian per target."""
from __future__ import annotations

import warnings
from functools import lru_cache
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .config import WorldConfig
from .tracking import ekf_predict, symmetrize

_POS = [0, 2]
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class TrackBroadcast:
    sender: int
    mean: np.ndarray
    cov: np.ndarray
    gain: Optional[np.ndarray] = None
    k: int = 0
    track_id: int = 0
    sensing_range: Optional[float] = None

    @property
    def key(self) -> tuple[int, int]:
        return (self.sender, self.track_id)

    @property
    def position_error(self) -> float:
        return float(self.cov[0, 0] + self.cov[2, 2])


@dataclass
class FusedEstimate:
    mean: np.ndarray
    cov: np.ndarray
    pred_mean: np.ndarray
    pred_cov: np.ndarray
    members: tuple[tuple[int, int], ...]

    @property
    def senders(self) -> tuple[int, ...]:
        return tuple(sorted({s for s, _ in self.members}))

    @property
    def pred_position(self) -> np.ndarray:
        return self.pred_mean[_POS]

    @property
    def pred_position_cov(self) -> np.ndarray:
        return self.pred_cov[np.ix_(_POS, _POS)]


@lru_cache(maxsize=None)
def _gate(prob: float, dof: int) -> float:
    return float(chi2.ppf(prob, dof))


def trustworthy_filter(ensemble: Sequence[TrackBroadcast], xi: float) -> list[TrackBroadcast]:
    """Keep broadcasts whose position-error trace is at most ``xi``."""
    return [b for b in ensemble if b.position_error <= xi]


def trusted_for(ensemble: Sequence[TrackBroadcast], cfg: WorldConfig) -> list[TrackBroadcast]:
    """Trust filter with each sender's tolerance taken at its sensing range."""
    return [b for b in ensemble if b.position_error <= cfg.trust_tolerance_at(b.sensing_range)]


def _canonical(ensemble: Sequence[TrackBroadcast]) -> list[TrackBroadcast]:
    return sorted(ensemble, key=lambda b: b.key)


def _associated(a: TrackBroadcast, b: TrackBroadcast, gate5: float, gate2: float) -> bool:
    s = a.cov + b.cov
    d = a.mean - b.mean
    if np.linalg.cond(s) < _COND_LIMIT:
        return float(d @ np.linalg.solve(s, d)) <= gate5
    sp = s[np.ix_(_POS, _POS)]
    dp = d[_POS]
    if np.linalg.cond(sp) >= _COND_LIMIT:
        return bool(np.allclose(dp, 0.0))
    return float(dp @ np.linalg.solve(sp, dp)) <= gate2


def t2ta_group(ensemble: Sequence[TrackBroadcast], gate_prob: float = 0.99) -> list[list[TrackBroadcast]]:
    """Partition broadcasts into per-target groups.

    Pairs pass a chi-square test on the mean difference under the summed
    covariances; groups are the connected components of that relation.
    """
    items = _canonical(ensemble)
    n = len(items)
    gate5, gate2 = _gate(gate_prob, 5), _gate(gate_prob, 2)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i in range(n):
        for j in range(i + 1, n):
            if find(i) != find(j) and _associated(items[i], items[j], gate5, gate2):
                parent[max(find(i), find(j))] = min(find(i), find(j))
    groups: dict[int, list[TrackBroadcast]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(items[i])
    return [groups[r] for r in sorted(groups)]


def t2tf_fuse(group: Sequence[TrackBroadcast]) -> tuple[np.ndarray, np.ndarray]:
    """Information-form fusion under the independence approximation."""
    if not group:
        raise ValueError("cannot fuse an empty group")
    members = _canonical(group)
    if len(members) == 1:
        return members[0].mean.copy(), members[0].cov.copy()
    info = np.zeros_like(members[0].cov)
    vec = np.zeros_like(members[0].mean)
    used = 0
    for b in members:
        try:
            if np.linalg.cond(b.cov) >= _COND_LIMIT:
                raise np.linalg.LinAlgError
            p_inv = np.linalg.inv(b.cov)
        except np.linalg.LinAlgError:
            warnings.warn(f"excluding singular covariance from sender {b.sender}", RuntimeWarning)
            continue
        info += p_inv
        vec += p_inv @ b.mean
        used += 1
    if used == 0:
        raise ValueError("every group member has a singular covariance")
    cov = symmetrize(np.linalg.inv(info))
    return cov @ vec, cov


def predict_fused(mean: np.ndarray, cov: np.ndarray, dt: float, cfg: WorldConfig):
    return ekf_predict(mean, cov, dt, cfg)


def dups(ensemble: Sequence[TrackBroadcast], cfg: WorldConfig) -> list[FusedEstimate]:
    """Trust filter, association, fusion and one-step prediction, in that order."""
    trusted = trusted_for(ensemble, cfg)
    out = []
    for group in t2ta_group(trusted, cfg.gate_prob):
        mean, cov = t2tf_fuse(group)
        pm, pc = predict_fused(mean, cov, cfg.dt, cfg)
        out.append(FusedEstimate(mean, cov, pm, pc, tuple(b.key for b in group)))
    return out

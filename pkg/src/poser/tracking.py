"""Local estimation on a node: EKF prediction, JPDA update, track birth, M-of-N logic."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.stats import chi2

from .config import WorldConfig
from .target import (
    Measurement,
    ct_jacobian,
    ct_transition,
    measure_fn,
    measurement_jacobian,
    measurement_noise_cov,
    process_noise_cov,
    wrap_angle,
)

TENTATIVE = "tentative"
CONFIRMED = "confirmed"
DROPPED = "dropped"


@dataclass
class Track:
    id: int
    mean: np.ndarray
    cov: np.ndarray
    gain: np.ndarray = field(default_factory=lambda: np.zeros((5, 2)))
    status: str = TENTATIVE
    hits: deque = field(default_factory=deque)
    miss_streak: int = 0

    @property
    def position(self) -> np.ndarray:
        return self.mean[[0, 2]]

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[np.ix_([0, 2], [0, 2])]

    def copy(self) -> "Track":
        return Track(self.id, self.mean.copy(), self.cov.copy(), self.gain.copy(),
                     self.status, deque(self.hits, maxlen=self.hits.maxlen), self.miss_streak)


@dataclass
class AssociationResult:
    # beta[t] is a vector over [no-measurement, measurement 0, ..., measurement m-1]
    beta: list[np.ndarray]
    unassociated: list[int]
    gated: list[list[int]]


def symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def ekf_predict(mean: np.ndarray, cov: np.ndarray, dt: float, cfg: WorldConfig,
                q: Optional[np.ndarray] = None) -> tuple[np.ndarray, np.ndarray]:
    """One-step EKF prediction through the coordinated-turn model."""
    f = ct_jacobian(mean, dt)
    q = process_noise_cov(cfg, dt) if q is None else q
    return ct_transition(mean, dt), symmetrize(f @ cov @ f.T + q)


def predict_track(track: Track, dt: float, cfg: WorldConfig) -> Track:
    track.mean, track.cov = ekf_predict(track.mean, track.cov, dt, cfg)
    return track


@lru_cache(maxsize=None)
def _chi2_quantile(prob: float, dof: int) -> float:
    return float(chi2.ppf(prob, dof))


def gate_threshold(cfg: WorldConfig) -> float:
    return _chi2_quantile(cfg.gate_prob, 2)


def clutter_density(z: np.ndarray, r_hps: float, cfg: WorldConfig) -> float:
    """Clutter density at ``z`` in range-azimuth space.

    Clutter is uniform over the disk (spatial density mu/(pi R^2)); the
    change of variables to (range, azimuth) contributes the factor ``range``.
    """
    if r_hps <= 0:
        return 0.0
    return cfg.mu_cl * max(float(z[0]), 0.0) / (math.pi * r_hps ** 2)


def _innovation(z: np.ndarray, zhat: np.ndarray) -> np.ndarray:
    nu = z - zhat
    nu[1] = wrap_angle(nu[1])
    return nu


def _gauss(nu: np.ndarray, s_inv: np.ndarray, s_det: float) -> float:
    return math.exp(-0.5 * float(nu @ s_inv @ nu)) / (2 * math.pi * math.sqrt(s_det))


def _enumerate_events(tracks: list[int], meas: list[int], gated: dict[int, set[int]]):
    """All feasible joint events: each track takes one gated measurement or none,
    and no measurement is taken twice. Yields dicts track -> measurement|None."""
    assign: dict[int, Optional[int]] = {}
    used: set[int] = set()

    def rec(i: int):
        if i == len(tracks):
            yield dict(assign)
            return
        t = tracks[i]
        assign[t] = None
        yield from rec(i + 1)
        for j in sorted(gated[t]):
            if j in used:
                continue
            used.add(j)
            assign[t] = j
            yield from rec(i + 1)
            used.discard(j)
        del assign[t]

    yield from rec(0)


def jpda_association(tracks: Sequence[Track], measurements: Sequence[Measurement],
                     node_pos: np.ndarray, r_hps: float, cfg: WorldConfig):
    """Gate measurements and compute JPDA association probabilities.

    Returns the association result plus per-track (H, S, S^-1, innovations) used
    by the update; a track whose innovation covariance is singular gets ``None``.
    """
    r_meas = measurement_noise_cov(cfg)
    gamma = gate_threshold(cfg)
    zs = [m.z for m in measurements]
    n_t, n_m = len(tracks), len(zs)
    prep: list = []
    gated: dict[int, set[int]] = {}
    lik: dict[tuple[int, int], float] = {}
    for t, trk in enumerate(tracks):
        try:
            h = measurement_jacobian(trk.mean, node_pos)
        except ValueError:
            prep.append(None)
            gated[t] = set()
            continue
        s = h @ trk.cov @ h.T + r_meas
        s_det = float(np.linalg.det(s))
        if not np.isfinite(s_det) or s_det <= 0:
            prep.append(None)
            gated[t] = set()
            continue
        s_inv = np.linalg.inv(s)
        zhat = measure_fn(trk.mean, node_pos)
        nus = [_innovation(z, zhat) for z in zs]
        gated[t] = set()
        for j, nu in enumerate(nus):
            if float(nu @ s_inv @ nu) <= gamma:
                gated[t].add(j)
                lik[(t, j)] = _gauss(nu, s_inv, s_det)
        prep.append((h, s, s_inv, nus))

    lam = [clutter_density(z, r_hps, cfg) for z in zs]
    pd_pg = cfg.p_d * cfg.gate_prob
    beta = [np.zeros(n_m + 1) for _ in range(n_t)]
    for t in range(n_t):
        beta[t][0] = 1.0

    # clusters: tracks linked through shared gated measurements
    parent = list(range(n_t))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner: dict[int, int] = {}
    for t in range(n_t):
        for j in gated[t]:
            if j in owner:
                parent[find(t)] = find(owner[j])
            else:
                owner[j] = t
    clusters: dict[int, list[int]] = {}
    for t in range(n_t):
        if gated[t]:
            clusters.setdefault(find(t), []).append(t)

    for members in clusters.values():
        meas = sorted(set().union(*(gated[t] for t in members)))
        events = list(_enumerate_events(members, meas, gated))

        def weights(lams):
            ws = []
            for ev in events:
                w = 1.0
                taken = set()
                for t, j in ev.items():
                    if j is None:
                        w *= 1.0 - pd_pg
                    else:
                        w *= cfg.p_d * lik[(t, j)]
                        taken.add(j)
                for j in meas:
                    if j not in taken:
                        w *= lams[j]
                ws.append(w)
            return np.array(ws)

        w = weights(lam)
        if not np.any(w > 0):
            # zero clutter density with surplus measurements: fall back to a
            # vanishing density so the relative event weights stay defined
            w = weights([1e-300 for _ in lam])
        if not np.any(w > 0):
            continue
        w = w / w.sum()
        for t in members:
            beta[t][:] = 0.0
        for wi, ev in zip(w, events):
            for t, j in ev.items():
                beta[t][0 if j is None else j + 1] += wi

    assoc = set().union(*gated.values()) if gated else set()
    unassociated = [j for j in range(n_m) if j not in assoc]
    result = AssociationResult(beta=beta, unassociated=unassociated,
                               gated=[sorted(gated[t]) for t in range(n_t)])
    return result, prep


def jpda_update(tracks: Sequence[Track], measurements: Sequence[Measurement],
                node_pos: np.ndarray, r_hps: float, cfg: WorldConfig):
    """JPDA update of predicted tracks. Returns (tracks, association, associated flags)."""
    result, prep = jpda_association(tracks, measurements, node_pos, r_hps, cfg)
    associated = []
    for t, trk in enumerate(tracks):
        if prep[t] is None:
            trk.status = DROPPED
            associated.append(False)
            continue
        if not result.gated[t]:
            associated.append(False)
            continue
        h, s, s_inv, nus = prep[t]
        b = result.beta[t]
        k = trk.cov @ h.T @ s_inv
        nu = np.zeros(2)
        spread = np.zeros((2, 2))
        for j in result.gated[t]:
            nu += b[j + 1] * nus[j]
            spread += b[j + 1] * np.outer(nus[j], nus[j])
        spread -= np.outer(nu, nu)
        p_c = trk.cov - k @ s @ k.T
        trk.mean = trk.mean + k @ nu
        trk.cov = symmetrize(b[0] * trk.cov + (1.0 - b[0]) * p_c + k @ spread @ k.T)
        trk.gain = k
        associated.append(True)
    return list(tracks), result, associated


def initialize_track(m: Measurement, node_pos: np.ndarray, cfg: WorldConfig,
                     track_id: int = 0) -> Track:
    """Tentative track from a single range/azimuth return."""
    c, s = math.cos(m.azimuth), math.sin(m.azimuth)
    mean = np.array([node_pos[0] + m.range * c, 0.0, node_pos[1] + m.range * s, 0.0, 0.0])
    jac = np.array([[c, -m.range * s], [s, m.range * c]])
    pos_cov = jac @ measurement_noise_cov(cfg) @ jac.T
    cov = np.zeros((5, 5))
    cov[np.ix_([0, 2], [0, 2])] = pos_cov
    v_var = (cfg.v_max / 3.0) ** 2
    cov[1, 1] = cov[3, 3] = v_var
    cov[4, 4] = cfg.sigma_vpsi ** 2
    return Track(track_id, mean, symmetrize(cov), hits=deque(maxlen=cfg.n_confirm))


def mofn_update(track: Track, associated: bool, cfg: WorldConfig) -> Track:
    """Advance the M-of-N confirmation logic by one scan outcome."""
    if track.hits.maxlen != cfg.n_confirm:
        track.hits = deque(track.hits, maxlen=cfg.n_confirm)
    if track.status == DROPPED:
        return track
    track.hits.append(bool(associated))
    track.miss_streak = 0 if associated else track.miss_streak + 1
    if track.status == TENTATIVE:
        if sum(track.hits) >= cfg.m_confirm:
            track.status = CONFIRMED
            track.miss_streak = 0
        elif len(track.hits) == cfg.n_confirm and not any(track.hits):
            track.status = DROPPED
    elif track.status == CONFIRMED and track.miss_streak >= cfg.m_confirm:
        track.status = DROPPED
    return track

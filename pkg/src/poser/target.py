"""Target dynamics (nearly coordinated turn), LPS detection and HPS measurements.

State vectors are ordered ``[x, vx, y, vy, psi]`` (m, m/s, m, m/s, rad/s).
Measurements are ``[range, azimuth]`` relative to the sensing node, with the
azimuth taken from global east and wrapped to (-pi, pi].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import WorldConfig

CLUTTER = -1
_SMALL_TURN = 1e-4


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def _turn_terms(psi: float, dt: float):
    """sin(wT)/w, (1-cos wT)/w and their psi-derivatives' numerators."""
    wt = psi * dt
    if abs(wt) < _SMALL_TURN:
        a = dt - psi ** 2 * dt ** 3 / 6.0
        b = psi * dt ** 2 / 2.0 - psi ** 3 * dt ** 4 / 24.0
        da = -psi * dt ** 3 / 3.0
        db = dt ** 2 / 2.0 - psi ** 2 * dt ** 4 / 8.0
    else:
        s, c = math.sin(wt), math.cos(wt)
        a = s / psi
        b = (1.0 - c) / psi
        da = (dt * c * psi - s) / psi ** 2
        db = (dt * s * psi - (1.0 - c)) / psi ** 2
    return a, b, da, db


def ct_transition(x: np.ndarray, dt: float) -> np.ndarray:
    """Noise-free coordinated-turn transition; straight line when psi == 0."""
    px, vx, py, vy, psi = (float(v) for v in x)
    a, b, _, _ = _turn_terms(psi, dt)
    s, c = math.sin(psi * dt), math.cos(psi * dt)
    return np.array([
        px + a * vx - b * vy,
        c * vx - s * vy,
        py + b * vx + a * vy,
        s * vx + c * vy,
        psi,
    ])


def ct_jacobian(x: np.ndarray, dt: float) -> np.ndarray:
    _, vx, _, vy, psi = (float(v) for v in x)
    a, b, da, db = _turn_terms(psi, dt)
    s, c = math.sin(psi * dt), math.cos(psi * dt)
    return np.array([
        [1.0, a, 0.0, -b, da * vx - db * vy],
        [0.0, c, 0.0, -s, -dt * s * vx - dt * c * vy],
        [0.0, b, 1.0, a, db * vx + da * vy],
        [0.0, s, 0.0, c, dt * c * vx - dt * s * vy],
        [0.0, 0.0, 0.0, 0.0, 1.0],
    ])


def noise_gain(dt: float) -> np.ndarray:
    """Piecewise-constant acceleration gain per axis, direct additive turn-rate noise."""
    return np.array([
        [dt ** 2 / 2, 0.0, 0.0],
        [dt, 0.0, 0.0],
        [0.0, dt ** 2 / 2, 0.0],
        [0.0, dt, 0.0],
        [0.0, 0.0, 1.0],
    ])


def process_noise_cov(cfg: WorldConfig, dt: Optional[float] = None) -> np.ndarray:
    dt = cfg.dt if dt is None else dt
    g = noise_gain(dt)
    return g @ np.diag([cfg.sigma_vx ** 2, cfg.sigma_vy ** 2, cfg.sigma_vpsi ** 2]) @ g.T


def propagate_target(x: np.ndarray, dt: float, cfg: WorldConfig,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """One step of truth motion; ``rng=None`` gives the noise-free transition."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    nxt = ct_transition(x, dt)
    if rng is not None:
        v = rng.normal(0.0, 1.0, size=3) * np.array([cfg.sigma_vx, cfg.sigma_vy, cfg.sigma_vpsi])
        nxt = nxt + noise_gain(dt) @ v
    return nxt


def lps_detection_probability(d: float, cfg: WorldConfig) -> float:
    if d < 0:
        raise ValueError("distance must be non-negative")
    if d < cfg.r_r:
        return cfg.alpha
    if d <= cfg.r_lps:
        return cfg.alpha * math.exp(-cfg.beta * (d - cfg.r_r))
    return 0.0


@dataclass(frozen=True)
class LpsReport:
    detected: bool
    cause: str  # "target", "false_alarm" or "none"
    probability: float = 0.0


def sample_lps(node_pos: np.ndarray, targets: Sequence[np.ndarray], cfg: WorldConfig,
               rng: np.random.Generator) -> LpsReport:
    """Binary LPS scan: per-target true detections, else a possible false alarm."""
    best = 0.0
    for tgt in targets:
        d = math.hypot(tgt[0] - node_pos[0], tgt[2] - node_pos[1])
        p = lps_detection_probability(d, cfg)
        best = max(best, p)
        if p > 0.0 and rng.random() < p:
            return LpsReport(True, "target", p)
    if cfg.p_fa > 0.0 and rng.random() < cfg.p_fa:
        return LpsReport(True, "false_alarm", best)
    return LpsReport(False, "none", best)


@dataclass(frozen=True)
class Measurement:
    range: float
    azimuth: float
    origin: int
    truth: int = CLUTTER  # target index or CLUTTER; never read by the estimators

    @property
    def z(self) -> np.ndarray:
        return np.array([self.range, self.azimuth])


def measure_fn(x: np.ndarray, node_pos: np.ndarray) -> np.ndarray:
    dx, dy = x[0] - node_pos[0], x[2] - node_pos[1]
    return np.array([math.hypot(dx, dy), math.atan2(dy, dx)])


def measurement_jacobian(x: np.ndarray, node_pos: np.ndarray) -> np.ndarray:
    dx, dy = float(x[0] - node_pos[0]), float(x[2] - node_pos[1])
    r2 = dx * dx + dy * dy
    if r2 == 0.0:
        raise ValueError("measurement Jacobian is singular at zero range")
    r = math.sqrt(r2)
    h = np.zeros((2, 5))
    h[0, 0], h[0, 2] = dx / r, dy / r
    h[1, 0], h[1, 2] = -dy / r2, dx / r2
    return h


def measurement_noise_cov(cfg: WorldConfig) -> np.ndarray:
    return np.diag([cfg.sigma_r ** 2, cfg.sigma_phi ** 2])


def hps_measure(node_pos: np.ndarray, r_hps: float, targets: Sequence[np.ndarray],
                cfg: WorldConfig, rng: np.random.Generator, origin: int = -1,
                truth_ids: Optional[Sequence[int]] = None) -> list[Measurement]:
    """Range/azimuth returns of targets inside ``r_hps`` plus Poisson clutter."""
    out: list[Measurement] = []
    ids = range(len(targets)) if truth_ids is None else truth_ids
    for tid, tgt in zip(ids, targets):
        d = math.hypot(tgt[0] - node_pos[0], tgt[2] - node_pos[1])
        if d > r_hps:
            continue
        if rng.random() >= cfg.p_d:
            continue
        z = measure_fn(tgt, node_pos)
        z = z + rng.normal(0.0, 1.0, size=2) * np.array([cfg.sigma_r, cfg.sigma_phi])
        out.append(Measurement(abs(float(z[0])), wrap_angle(z[1]), origin, int(tid)))
    n_clutter = rng.poisson(cfg.mu_cl) if cfg.mu_cl > 0 else 0
    for _ in range(n_clutter):
        rr = r_hps * math.sqrt(rng.random())
        th = rng.uniform(-math.pi, math.pi)
        out.append(Measurement(rr, wrap_angle(th), origin, CLUTTER))
    return out

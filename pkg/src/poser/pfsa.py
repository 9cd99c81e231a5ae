"""Per-node probabilistic state machine: transition rows, detection-success probability, sampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import WorldConfig
from .network import State

_GL_N = 64
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_N)
_TRAP_N = 512
_FAR_SIGMAS = 9.0


@dataclass(frozen=True)
class TransitionRow:
    p_to_sleep: float
    p_to_lps: float
    p_to_hps: float

    def __post_init__(self):
        vals = (self.p_to_sleep, self.p_to_lps, self.p_to_hps)
        if min(vals) < 0 or abs(math.fsum(vals) - 1.0) > 1e-12:
            raise ValueError(f"not a stochastic row: {vals}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_to_sleep, self.p_to_lps, self.p_to_hps])


@dataclass(frozen=True)
class DncView:
    """What one node learned from collaboration about one predicted target."""
    selected: bool
    p_hat: float
    distance: float          # node to predicted position
    d_b: int
    selected_range: Optional[float] = None


@dataclass(frozen=True)
class PfsaContext:
    state: State
    info: bool = False           # trusted neighbor information was received
    p_own: float = 0.0           # own LPS or HPS evidence
    dnc: Optional[DncView] = None


def transition_row(ctx: PfsaContext, cfg: WorldConfig) -> tuple[TransitionRow, Optional[float], str]:
    """Branch table of the switching control. Returns (row, staged range, branch name)."""
    st = State(ctx.state)
    if st == State.SLEEP:
        return TransitionRow(cfg.p_sleep, 1.0 - cfg.p_sleep, 0.0), None, "sleep"
    if not ctx.info:
        if ctx.dnc is not None:
            raise ValueError("collaboration output given without received information")
        p = min(max(float(ctx.p_own), 0.0), 1.0)
        if st == State.LPS:
            return TransitionRow(1.0 - p, 0.0, p), None, "lps-own"
        return TransitionRow(0.0, 1.0 - p, p), None, "hps-own"
    v = ctx.dnc
    if v is None:
        raise ValueError("information received but no collaboration output")
    p = min(max(float(v.p_hat), 0.0), 1.0)
    if v.selected:
        if v.selected_range is None:
            raise ValueError("selected without a range")
        return TransitionRow(0.0, 1.0 - p, p), v.selected_range, "selected"
    if v.distance <= cfg.r_1:
        return TransitionRow(1.0 - p, p, 0.0), cfg.r_1, "near"
    if v.d_b >= cfg.n_sel:
        return TransitionRow(1.0, 0.0, 0.0), None, "far-sufficient"
    return TransitionRow(1.0 - p, p, 0.0), cfg.r_l, "far-insufficient"


def step_state(row: TransitionRow, rng: np.random.Generator) -> State:
    u = rng.random()
    if u < row.p_to_sleep:
        return State.SLEEP
    if u < row.p_to_sleep + row.p_to_lps:
        return State.LPS
    return State.HPS


def _whiten(cov: np.ndarray):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, 1e-300)
    return vecs * np.sqrt(vals)          # L with L L' = cov


def _ray_roots(u: np.ndarray, a_mat: np.ndarray, e: np.ndarray, c0: float):
    """Roots of |L(t u - e)|^2 = R^2 along unit directions u (2, m)."""
    qa = np.einsum("im,ij,jm->m", u, a_mat, u)
    qb = e @ a_mat @ u
    disc = np.maximum(qb * qb - qa * c0, 0.0)
    sq = np.sqrt(disc)
    return (qb - sq) / qa, (qb + sq) / qa


def disk_mass(center, radius: float, mean, cov) -> float:
    """Gaussian probability of the disk ``|x - center| <= radius``.

    Integrates along rays from the mean in whitened coordinates, where the
    radial mass has the closed form exp(-t1^2/2) - exp(-t2^2/2); only the
    angular integral is numerical.
    """
    if radius <= 0:
        return 0.0
    mean = np.asarray(mean, dtype=float)
    d = np.asarray(center, dtype=float) - mean
    cov = np.asarray(cov, dtype=float)
    smax = math.sqrt(max(float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[-1]), 0.0))
    dist = float(np.hypot(*d))
    if dist - radius >= _FAR_SIGMAS * smax and dist > radius:
        return 0.0
    if radius - dist >= _FAR_SIGMAS * smax:
        return 1.0
    if smax == 0.0:
        return 1.0 if dist <= radius else 0.0
    l_mat = _whiten(cov)
    a_mat = l_mat.T @ l_mat
    e = np.linalg.solve(l_mat, d)           # disk center, whitened
    c0 = float(e @ a_mat @ e) - radius ** 2
    if c0 <= 0:
        th = np.linspace(0.0, 2 * math.pi, _TRAP_N, endpoint=False)
        u = np.vstack([np.cos(th), np.sin(th)])
        _, t2 = _ray_roots(u, a_mat, e, c0)
        t2 = np.maximum(t2, 0.0)
        return float(np.clip(np.mean(1.0 - np.exp(-0.5 * t2 * t2)), 0.0, 1.0))
    # mean outside the disk: rays hit only inside the tangent cone
    q = a_mat @ np.outer(e, e) @ a_mat - c0 * a_mat
    lam, vec = np.linalg.eigh(q)
    if lam[1] <= 0 or lam[0] >= 0:
        return 0.0
    k = math.sqrt(-lam[0] / lam[1])
    dirs = []
    for sgn in (1.0, -1.0):
        w = vec[:, 0] + sgn * k * vec[:, 1]
        w = w / np.linalg.norm(w)
        if e @ a_mat @ w < 0:
            w = -w
        dirs.append(w)
    base = math.atan2(e[1], e[0])
    rel = [((math.atan2(w[1], w[0]) - base + math.pi) % (2 * math.pi)) - math.pi for w in dirs]
    lo, hi = min(rel), max(rel)
    if hi - lo <= 0:
        return 0.0
    # cosine map flattens the square-root behavior at the tangent directions
    s = 0.5 * (_GL_X + 1.0)
    th = base + lo + (hi - lo) * 0.5 * (1.0 - np.cos(math.pi * s))
    jac = (hi - lo) * 0.5 * math.pi * np.sin(math.pi * s) * 0.5
    u = np.vstack([np.cos(th), np.sin(th)])
    t1, t2 = _ray_roots(u, a_mat, e, c0)
    t1, t2 = np.maximum(t1, 0.0), np.maximum(t2, 0.0)
    f = np.exp(-0.5 * t1 * t1) - np.exp(-0.5 * t2 * t2)
    return float(np.clip(np.sum(_GL_W * f * jac) / (2 * math.pi), 0.0, 1.0))


def dops_probability(node_pos, r_next: float, predictions: Sequence[tuple[np.ndarray, np.ndarray]],
                     p_d: float) -> float:
    """Best detection-success probability over predicted target positions."""
    best = 0.0
    for mean, cov in predictions:
        best = max(best, p_d * disk_mass(node_pos, r_next, mean, cov))
    return best

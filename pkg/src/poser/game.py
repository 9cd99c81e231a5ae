"""Potential game over sensing ranges, its learning dynamics and an exhaustive oracle."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import WorldConfig, slope_lower_bound  # noqa: F401  (re-exported)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)
MIN_CELL = 0.1
EXHAUSTIVE_GUARD = 10 ** 7


@dataclass(frozen=True)
class Grid:
    x_edges: np.ndarray
    y_edges: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.x_edges) - 1, len(self.y_edges) - 1

    @property
    def centers(self) -> np.ndarray:
        cx = 0.5 * (self.x_edges[:-1] + self.x_edges[1:])
        cy = 0.5 * (self.y_edges[:-1] + self.y_edges[1:])
        gx, gy = np.meshgrid(cx, cy, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


def partition_uncertainty(pred_pos, pos_cov, u: int, v: int) -> Grid:
    """Split the +-3 sigma box around the prediction into u x v equal cells."""
    if u < 1 or v < 1:
        raise ValueError("grid needs at least one cell per axis")
    sx = math.sqrt(max(float(pos_cov[0, 0]), 0.0))
    sy = math.sqrt(max(float(pos_cov[1, 1]), 0.0))
    hx = max(3 * sx, 0.5 * MIN_CELL * u)
    hy = max(3 * sy, 0.5 * MIN_CELL * v)
    x0, y0 = float(pred_pos[0]), float(pred_pos[1])
    return Grid(np.linspace(x0 - hx, x0 + hx, u + 1), np.linspace(y0 - hy, y0 + hy, v + 1))


def _regularized(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (np.asarray(cov, dtype=float) + np.asarray(cov, dtype=float).T)
    eps = 1e-12 * max(float(np.trace(cov)), 1e-12)
    if np.linalg.eigvalsh(cov)[0] <= eps:
        cov = cov + eps * np.eye(2)
    return cov


def gaussian_pdf(pts: np.ndarray, mean, cov) -> np.ndarray:
    cov = _regularized(cov)
    inv = np.linalg.inv(cov)
    d = pts - np.asarray(mean, dtype=float)
    q = np.einsum("...i,ij,...j->...", d, inv, d)
    return np.exp(-0.5 * q) / (2 * math.pi * math.sqrt(np.linalg.det(cov)))


def cell_worth(grid: Grid, pred_pos, pos_cov) -> np.ndarray:
    """Normalized Gaussian mass per cell, flattened in ``grid.centers`` order."""
    xe, ye = grid.x_edges, grid.y_edges
    xm, xh = 0.5 * (xe[:-1] + xe[1:]), 0.5 * np.diff(xe)
    ym, yh = 0.5 * (ye[:-1] + ye[1:]), 0.5 * np.diff(ye)
    qx = xm[:, None] + xh[:, None] * _GL_NODES[None, :]          # (U, 5)
    qy = ym[:, None] + yh[:, None] * _GL_NODES[None, :]          # (V, 5)
    px = np.broadcast_to(qx[:, None, :, None], (len(xm), len(ym), 5, 5))
    py = np.broadcast_to(qy[None, :, None, :], (len(xm), len(ym), 5, 5))
    dens = gaussian_pdf(np.stack([px, py], axis=-1), pred_pos, pos_cov)
    w2 = _GL_WEIGHTS[:, None] * _GL_WEIGHTS[None, :]
    mass = np.einsum("uvij,ij->uv", dens, w2) * (xh[:, None] * yh[None, :])
    total = mass.sum()
    if not total > 0:
        return np.full(mass.size, 1.0 / mass.size)
    return (mass / total).ravel()


def energy_cost(action: float, cfg: WorldConfig) -> float:
    if action != 0:
        return cfg.w_hps * action * cfg.dt
    return cfg.e_lps * cfg.dt


def coverage_function(j, db1: float, db2: float, n_sel: int):
    j = np.asarray(j)
    return np.where(j <= n_sel, db1 * j, db1 * n_sel - db2 * (j - n_sel))


def select_leader(players: Sequence[int], energies: Mapping[int, float] | np.ndarray) -> int:
    if not players:
        raise ValueError("no players")
    return min(players, key=lambda p: (-float(energies[p]), p))


@dataclass
class GameInstance:
    player_ids: tuple[int, ...]
    positions: np.ndarray
    actions: np.ndarray
    centers: np.ndarray
    worth: np.ndarray
    db1: float
    db2: float
    n_sel: int
    costs: np.ndarray
    n_cap: Optional[int] = None          # N'_sel of the energy normalization; defaults to the player count
    cover: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        self.actions = np.asarray(self.actions, dtype=float)
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.worth = np.asarray(self.worth, dtype=float)
        self.costs = np.asarray(self.costs, dtype=float)
        if self.actions[0] != 0:
            raise ValueError("action 0 must come first")
        dist = np.linalg.norm(self.centers[None, :, :] - self.positions[:, None, :], axis=2)
        # cover[i, a, c]: player i with action a reaches cell c (boundary inclusive)
        reach = self.actions[None, :, None] * (1 + 1e-12)
        self.cover = (dist[:, None, :] <= reach) & (self.actions[None, :, None] > 0)
        cap = self.n_players if self.n_cap is None else int(self.n_cap)
        if cap < self.n_players:
            raise ValueError("more players than the player cap")
        self._norm = cap * self.costs[-1]
        self._table = coverage_function(np.arange(self.n_players + 1), self.db1, self.db2, self.n_sel)

    @property
    def n_players(self) -> int:
        return len(self.player_ids)

    def index_of(self, a: Sequence[float]) -> tuple[int, ...]:
        out = []
        for val in a:
            hit = np.flatnonzero(np.isclose(self.actions, float(val), rtol=0, atol=1e-9))
            if hit.size == 0:
                raise ValueError(f"action {val!r} not in the action set")
            out.append(int(hit[0]))
        return tuple(out)

    def values_of(self, idx: Sequence[int]) -> tuple[float, ...]:
        return tuple(float(self.actions[i]) for i in idx)

    def counts_idx(self, idx: Sequence[int]) -> np.ndarray:
        j = np.zeros(len(self.centers), dtype=int)
        for p, a in enumerate(idx):
            if a:
                j += self.cover[p, a]
        return j

    def coverage_term(self, counts: np.ndarray) -> float:
        return float(self.worth @ self._table[counts])

    def energy_term(self, idx: Sequence[int]) -> float:
        return float(sum(self.costs[a] for a in idx)) / self._norm

    def phi_counts(self, counts: np.ndarray, idx: Sequence[int]) -> float:
        return self.coverage_term(counts) - self.energy_term(idx)

    def phi_idx(self, idx: Sequence[int]) -> float:
        return self.phi_counts(self.counts_idx(idx), idx)


def build_game(players: Sequence[int], positions: np.ndarray, pred_pos, pos_cov,
               cfg: WorldConfig, worth: Optional[np.ndarray] = None) -> GameInstance:
    """Game for ``players`` (ids into ``positions``) around one predicted position."""
    grid = partition_uncertainty(pred_pos, pos_cov, cfg.grid_u, cfg.grid_v)
    w = cell_worth(grid, pred_pos, pos_cov) if worth is None else np.asarray(worth, dtype=float)
    actions = np.concatenate([[0.0], np.asarray(cfg.hps_ranges, dtype=float)])
    costs = np.array([energy_cost(a, cfg) for a in actions])
    pts = np.asarray(positions, dtype=float)[list(players)]
    return GameInstance(tuple(int(p) for p in players), pts, actions, grid.centers, w,
                        cfg.db1, cfg.db2, cfg.n_sel, costs, max(cfg.n_sel_ext, len(players)))


def coverage_count(a: Sequence[float], game: GameInstance) -> np.ndarray:
    return game.counts_idx(game.index_of(a))


def potential(a: Sequence[float], game: GameInstance) -> float:
    return game.phi_idx(game.index_of(a))


def utility(i: int, a: Sequence[float], game: GameInstance) -> float:
    """Marginal contribution of player ``i`` (position in the player order)."""
    idx = list(game.index_of(a))
    base = idx.copy()
    base[i] = 0
    return game.phi_idx(idx) - game.phi_idx(base)


def coverage_share(a: Sequence[float], game: GameInstance, degree: Optional[int] = None) -> float:
    """Worth mass covered by exactly ``degree`` players (default N_sel)."""
    j = coverage_count(a, game)
    return float(game.worth[j == (game.n_sel if degree is None else degree)].sum())


def maxlogit_solve(game: GameInstance, iterations: int, tau: float,
                   rng: np.random.Generator) -> tuple[float, ...]:
    """Log-linear learning from the all-zero action; returns the best joint action visited."""
    if iterations < 1 or tau <= 0:
        raise ValueError("need iterations >= 1 and tau > 0")
    n, n_act = game.n_players, len(game.actions)
    players = rng.integers(n, size=iterations)
    proposals = rng.integers(n_act, size=iterations)
    coins = rng.random(iterations)
    cover = game.cover.astype(np.int64)
    cost = game.costs / game._norm
    idx = [0] * n
    counts = np.zeros(len(game.centers), dtype=np.int64)
    energy = float(cost[0]) * n
    phi = game.coverage_term(counts) - energy
    best_idx, best_phi = tuple(idx), phi
    for j, cand, u in zip(players.tolist(), proposals.tolist(), coins.tolist()):
        cur = idx[j]
        if cand == cur:
            continue
        new_counts = counts + (cover[j, cand] - cover[j, cur])
        new_energy = energy + cost[cand] - cost[cur]
        new_phi = game.coverage_term(new_counts) - new_energy
        # utility differences equal potential differences, so the
        # acceptance ratio can be formed from the potential directly
        if u < math.exp(min(0.0, (new_phi - phi) / tau)):
            idx[j] = cand
            counts, energy, phi = new_counts, new_energy, new_phi
            if phi > best_phi:
                best_idx, best_phi = tuple(idx), phi
    return game.values_of(best_idx)


def exhaustive_optimum(game: GameInstance, guard: int = EXHAUSTIVE_GUARD) -> tuple[float, ...]:
    """Argmax of the potential over every joint action; ties keep the lexicographically first."""
    n_act = len(game.actions)
    if n_act ** game.n_players > guard:
        raise ValueError(f"search space {n_act}^{game.n_players} exceeds guard {guard}")
    best, best_phi = None, -math.inf
    for idx in itertools.product(range(n_act), repeat=game.n_players):
        phi = game.phi_idx(idx)
        if phi > best_phi:
            best, best_phi = idx, phi
    return game.values_of(best)


def is_nash(a: Sequence[float], game: GameInstance, tol: float = 1e-12) -> bool:
    idx = list(game.index_of(a))
    phi = game.phi_idx(idx)
    for p in range(game.n_players):
        for alt in range(len(game.actions)):
            trial = idx.copy()
            trial[p] = alt
            if game.phi_idx(trial) > phi + tol:
                return False
    return True

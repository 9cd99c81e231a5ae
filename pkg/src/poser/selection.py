"""Adaptive node selection: candidate regions, coverage degrees and EGDOP."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .config import WorldConfig

_R_FLOOR = 1e-3
_TIE_RTOL = 1e-9


class Path(str, Enum):
    BASE_EXACT = "base-exact"
    BASE_EGDOP = "base-egdop"
    EXTENDED_ALL = "extended-all"
    EXTENDED_GAME = "extended-game"
    UNPROTECTED = "unprotected"


@dataclass(frozen=True)
class CandidateRegion:
    center: np.ndarray
    semi_axes: tuple[float, float]
    r_s: float

    @property
    def degenerate(self) -> bool:
        # "uncertainty exceeds range": no node satisfies the ellipse test
        return self.semi_axes[0] <= 0 or self.semi_axes[1] <= 0


@dataclass
class SelectionOutcome:
    selected: tuple[int, ...]
    ranges: dict[int, float]
    path: Path
    d_b: int
    d_e: Optional[int] = None
    base_candidates: tuple[int, ...] = ()
    ext_candidates: tuple[int, ...] = ()
    players: tuple[int, ...] = ()
    leader: Optional[int] = None
    action: Optional[tuple[float, ...]] = None
    notes: list[str] = field(default_factory=list)


def candidate_region(pred_pos: np.ndarray, pos_cov: np.ndarray, r_s: float) -> CandidateRegion:
    sx = math.sqrt(max(float(pos_cov[0, 0]), 0.0))
    sy = math.sqrt(max(float(pos_cov[1, 1]), 0.0))
    return CandidateRegion(np.asarray(pred_pos, dtype=float), (r_s - 3 * sx, r_s - 3 * sy), r_s)


def _ellipse_value(pts: np.ndarray, region: CandidateRegion) -> np.ndarray:
    d = np.atleast_2d(pts) - region.center
    return (d[:, 0] / region.semi_axes[0]) ** 2 + (d[:, 1] / region.semi_axes[1]) ** 2


def candidate_membership(node_pos, pred_pos, pos_cov, r_s: float, fallback: bool = True) -> bool:
    """Ellipse test for one node.

    When 3 sigma exceeds ``r_s`` the region is empty; with ``fallback`` the
    node is then accepted if it lies within ``r_s`` of the predicted mean.
    """
    region = candidate_region(pred_pos, pos_cov, r_s)
    return bool(_members(np.atleast_2d(node_pos), region, fallback)[0])


def _members(pts: np.ndarray, region: CandidateRegion, fallback: bool) -> np.ndarray:
    if region.degenerate:
        if not fallback:
            return np.zeros(len(pts), dtype=bool)
        return np.linalg.norm(pts - region.center, axis=1) <= region.r_s
    return _ellipse_value(pts, region) <= 1.0


def candidate_set(pred_pos, pos_cov, awake_ids: Sequence[int], positions: np.ndarray,
                  r_s: float, fallback: bool = True) -> tuple[int, ...]:
    ids = np.array(sorted(awake_ids), dtype=int)
    if ids.size == 0:
        return ()
    region = candidate_region(pred_pos, pos_cov, r_s)
    mask = _members(np.asarray(positions, dtype=float)[ids], region, fallback)
    return tuple(int(i) for i in ids[mask])


def information_terms(node_pos: np.ndarray, pred_pos: np.ndarray, region: CandidateRegion,
                      weights: np.ndarray, cfg: WorldConfig) -> np.ndarray:
    """Per-node (a, b, d) entries of the weighted 2x2 geometric information."""
    pts = np.atleast_2d(np.asarray(node_pos, dtype=float))
    d = pts - np.asarray(pred_pos, dtype=float)
    phi = np.arctan2(d[:, 1], d[:, 0])
    ax = region.semi_axes
    if region.degenerate:
        ax = (region.r_s, region.r_s)
    r_n = np.sqrt((d[:, 0] / ax[0]) ** 2 + (d[:, 1] / ax[1]) ** 2)
    r_n = np.maximum(r_n, _R_FLOOR)
    sig_n = cfg.sigma_phi / (2 * math.pi)
    c = np.asarray(weights, dtype=float) / (sig_n ** 2 * r_n ** 2)
    s, co = np.sin(phi), np.cos(phi)
    return np.column_stack([c * s * s, -c * s * co, c * co * co])


def _mu(sums: np.ndarray) -> np.ndarray:
    a, b, d = sums[..., 0], sums[..., 1], sums[..., 2]
    tr = a + d
    det = a * d - b * b
    # rank-deficient sums come out as round-off; call those exactly zero
    det = np.where(np.abs(det) <= 1e-12 * tr * tr, 0.0, det)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(tr > 0, det / np.where(tr > 0, tr, 1.0), 0.0)


def egdop_score(node_pos, pred_pos, pos_cov, energies, cfg: WorldConfig, r_s: Optional[float] = None) -> float:
    """det(J)/trace(J) of the energy-weighted information of a node subset."""
    pts = np.atleast_2d(np.asarray(node_pos, dtype=float))
    if len(pts) == 0:
        raise ValueError("subset must be nonempty")
    region = candidate_region(pred_pos, pos_cov, cfg.r_1 if r_s is None else r_s)
    terms = information_terms(pts, pred_pos, region, energies, cfg)
    return float(_mu(terms.sum(axis=0)))


def _tie_key(ids: Sequence[int]):
    return (sum(ids), tuple(ids))


def best_subset(ids: Sequence[int], terms: np.ndarray, count: int,
                exhaustive_limit: int = 5000) -> tuple[int, ...]:
    """Subset of ``count`` ids maximizing det/trace of the summed terms.

    Ties (relative 1e-9) go to the smaller id-sum, then lexicographic ids.
    """
    order = np.argsort(ids, kind="stable")
    ids = [int(ids[i]) for i in order]
    terms = np.asarray(terms, dtype=float)[order]
    n = len(ids)
    if count >= n:
        return tuple(ids)
    if count <= 0:
        return ()
    if math.comb(n, count) <= exhaustive_limit:
        combos = np.array(list(itertools.combinations(range(n), count)), dtype=int)
        mu = _mu(terms[combos].sum(axis=1))
        top = float(mu.max())
        tied = np.flatnonzero(mu >= top - _TIE_RTOL * abs(top))
        best = min((tuple(ids[j] for j in combos[t]) for t in tied), key=_tie_key)
        return best
    return _greedy_swap(ids, terms, count)


def _better(mu_new: float, key_new, mu_old: float, key_old) -> bool:
    tol = _TIE_RTOL * max(abs(mu_new), abs(mu_old))
    if mu_new > mu_old + tol:
        return True
    if mu_new < mu_old - tol:
        return False
    return key_new < key_old


def _greedy_swap(ids: list[int], terms: np.ndarray, count: int) -> tuple[int, ...]:
    n = len(ids)
    # seed with the best pair: every singleton scores zero
    pairs = np.array(list(itertools.combinations(range(n), 2)), dtype=int)
    mu = _mu(terms[pairs].sum(axis=1))
    top = float(mu.max())
    tied = np.flatnonzero(mu >= top - _TIE_RTOL * abs(top))
    chosen = list(min((tuple(pairs[t]) for t in tied), key=lambda p: _tie_key([ids[i] for i in p])))
    if count == 1:
        chosen = [0]

    def score(sel):
        return float(_mu(terms[list(sel)].sum(axis=0)))

    def key(sel):
        return _tie_key(sorted(ids[i] for i in sel))

    while len(chosen) < count:
        best_j, best_mu = None, -np.inf
        for j in range(n):
            if j in chosen:
                continue
            m = score(chosen + [j])
            if best_j is None or _better(m, key(chosen + [j]), best_mu, key(chosen + [best_j])):
                best_j, best_mu = j, m
        chosen.append(best_j)
    cur = score(chosen)
    for pos in range(count):
        for j in range(n):
            if j in chosen:
                continue
            trial = chosen.copy()
            trial[pos] = j
            m = score(trial)
            if _better(m, key(trial), cur, key(chosen)):
                chosen, cur = trial, m
    return tuple(sorted(ids[i] for i in chosen))


def select_by_egdop(candidates: Sequence[int], energies: Mapping[int, float] | np.ndarray,
                    positions: np.ndarray, pred_pos, pos_cov, count: int, cfg: WorldConfig,
                    r_s: Optional[float] = None) -> tuple[int, ...]:
    cand = sorted(int(c) for c in candidates)
    if len(cand) <= count:
        return tuple(cand)
    region = candidate_region(pred_pos, pos_cov, cfg.r_1 if r_s is None else r_s)
    w = np.array([energies[c] for c in cand], dtype=float)
    terms = information_terms(np.asarray(positions)[cand], pred_pos, region, w, cfg)
    return best_subset(cand, terms, count, cfg.egdop_exhaustive_limit)


GameSolver = Callable[[Sequence[int], np.ndarray, np.ndarray], tuple[tuple[float, ...], int]]


def dans(pred_pos, pos_cov, awake_ids: Sequence[int], positions: np.ndarray,
         energies: Mapping[int, float] | np.ndarray, cfg: WorldConfig,
         solve_game: Optional[GameSolver] = None,
         selector: Optional[Callable] = None) -> SelectionOutcome:
    """Node selection flowchart for one predicted target.

    ``solve_game(players, pred_pos, pos_cov)`` returns the equilibrium joint
    action and the leader; it is only called on the extended paths.
    ``selector`` replaces EGDOP (same signature as ``select_by_egdop``).
    """
    pick = selector or select_by_egdop
    base = candidate_set(pred_pos, pos_cov, awake_ids, positions, cfg.r_1)
    d_b = len(base)
    if d_b == cfg.n_sel:
        return SelectionOutcome(base, {i: cfg.r_1 for i in base}, Path.BASE_EXACT, d_b,
                                base_candidates=base)
    if d_b > cfg.n_sel:
        sel = pick(base, energies, positions, pred_pos, pos_cov, cfg.n_sel, cfg, r_s=cfg.r_1)
        return SelectionOutcome(sel, {i: cfg.r_1 for i in sel}, Path.BASE_EGDOP, d_b,
                                base_candidates=base)
    ext = candidate_set(pred_pos, pos_cov, awake_ids, positions, cfg.r_l)
    d_e = len(ext)
    if d_e == 0:
        out = SelectionOutcome((), {}, Path.UNPROTECTED, d_b, d_e, base_candidates=base)
        out.notes.append("target unprotected: no candidates at R_L")
        return out
    if d_e <= cfg.n_sel:
        players, path = ext, Path.EXTENDED_ALL
    else:
        players = pick(ext, energies, positions, pred_pos, pos_cov, cfg.n_sel_ext, cfg, r_s=cfg.r_l)
        path = Path.EXTENDED_GAME
    if solve_game is None:
        raise ValueError("extended path reached without a game solver")
    action, leader = solve_game(players, pred_pos, pos_cov)
    if path is Path.EXTENDED_ALL:
        # the flowchart activates every extended candidate; a zero action
        # falls back to the largest range
        ranges = {p: (a if a > 0 else cfg.r_l) for p, a in zip(players, action)}
        sel = tuple(players)
    else:
        ranges = {p: a for p, a in zip(players, action) if a > 0}
        sel = tuple(p for p in players if p in ranges)
    return SelectionOutcome(sel, ranges, path, d_b, d_e, base_candidates=base,
                            ext_candidates=ext, players=tuple(players), leader=leader,
                            action=tuple(action))

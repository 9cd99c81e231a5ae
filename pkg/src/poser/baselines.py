"""Reference selectors: unweighted GDOP and maximum remaining energy."""
from __future__ import annotations

from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import WorldConfig
from .selection import best_subset, candidate_region, egdop_score, information_terms, select_by_egdop


class SelectorKind(str, Enum):
    EGDOP = "egdop"
    GDOP = "gdop"
    MAX_ENERGY = "max-energy"


def gdop_score(node_pos, pred_pos, pos_cov, cfg: WorldConfig, r_s: Optional[float] = None) -> float:
    pts = np.atleast_2d(np.asarray(node_pos, dtype=float))
    return egdop_score(pts, pred_pos, pos_cov, np.ones(len(pts)), cfg, r_s)


def select_by_gdop(candidates: Sequence[int], energies, positions: np.ndarray, pred_pos, pos_cov,
                   count: int, cfg: WorldConfig, r_s: Optional[float] = None) -> tuple[int, ...]:
    """Geometry-only pick; ``energies`` is accepted for signature parity and ignored."""
    cand = sorted(int(c) for c in candidates)
    if len(cand) <= count:
        return tuple(cand)
    region = candidate_region(pred_pos, pos_cov, cfg.r_1 if r_s is None else r_s)
    terms = information_terms(np.asarray(positions)[cand], pred_pos, region, np.ones(len(cand)), cfg)
    return best_subset(cand, terms, count, cfg.egdop_exhaustive_limit)


def select_max_energy(candidates: Sequence[int], energies: Mapping[int, float] | np.ndarray,
                      count: int) -> tuple[int, ...]:
    cand = sorted(int(c) for c in candidates)
    if count >= len(cand):
        return tuple(cand)
    ranked = sorted(cand, key=lambda c: (-float(energies[c]), c))
    return tuple(sorted(ranked[:count]))


def select(kind: SelectorKind, candidates, energies, positions, pred_pos, pos_cov, count, cfg,
           r_s: Optional[float] = None) -> tuple[int, ...]:
    kind = SelectorKind(kind)
    if kind is SelectorKind.EGDOP:
        return select_by_egdop(candidates, energies, positions, pred_pos, pos_cov, count, cfg, r_s)
    if kind is SelectorKind.GDOP:
        return select_by_gdop(candidates, energies, positions, pred_pos, pos_cov, count, cfg, r_s)
    return select_max_energy(candidates, energies, count)

"""Node model, deployment, neighborhoods and the seeded randomness contract."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .config import WorldConfig
from .energy import EnergyLedger

# stream purposes, part of the spawn key so streams never collide
_ENV = 0
_NODE = 1
_AUX = 2


class State(IntEnum):
    SLEEP = 1
    LPS = 2
    HPS = 3


@dataclass
class NodeState:
    id: int
    pos: np.ndarray
    ledger: EnergyLedger
    state: State = State.LPS
    r_hps: float = 0.0
    staged_range: Optional[float] = None
    tracks: list = field(default_factory=list)
    symbol: str = "e"

    @property
    def alive(self) -> bool:
        return not self.ledger.dead

    @property
    def awake(self) -> bool:
        return self.alive and self.state != State.SLEEP


def env_stream(seed: int, run: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, _ENV)))


def node_stream(seed: int, run: int, node: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, _NODE, node)))


def aux_stream(seed: int, run: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(run, _AUX) + tuple(key)))


def uniform_deployment(cfg: WorldConfig, rng: np.random.Generator,
                       n: Optional[int] = None) -> list[NodeState]:
    """Deploy nodes i.i.d. uniformly over the region, all in LPS with full energy."""
    if cfg.width <= 0 or cfg.height <= 0:
        raise ValueError("zero-area region")
    count = cfg.node_count if n is None else int(n)
    xy = rng.uniform(0.0, 1.0, size=(count, 2)) * np.array([cfg.width, cfg.height])
    return [
        NodeState(id=i, pos=xy[i].copy(), ledger=EnergyLedger(cfg.e0), r_hps=cfg.r_1)
        for i in range(count)
    ]


def positions_of(nodes) -> np.ndarray:
    if not nodes:
        return np.zeros((0, 2))
    return np.array([n.pos for n in nodes], dtype=float)


def neighborhood(node: int, positions: np.ndarray, r_c: float) -> set[int]:
    pts = np.asarray(positions, dtype=float)
    d = np.linalg.norm(pts - pts[node], axis=1)
    out = set(int(j) for j in np.flatnonzero(d <= r_c))
    out.discard(node)
    return out


def neighbor_lists(positions: np.ndarray, r_c: float) -> list[np.ndarray]:
    """Sorted communication neighborhoods of every node (self excluded)."""
    pts = np.asarray(positions, dtype=float)
    if len(pts) == 0:
        return []
    tree = cKDTree(pts)
    # the tree uses <= r, with a hair of slack for exact-boundary pairs
    raw = tree.query_ball_point(pts, r_c * (1 + 1e-12))
    out = []
    for i, idx in enumerate(raw):
        idx = np.array(sorted(j for j in idx if j != i), dtype=int)
        if idx.size:
            d = np.linalg.norm(pts[idx] - pts[i], axis=1)
            idx = idx[d <= r_c]
        out.append(idx)
    return out


def disk_count(cfg: WorldConfig, radius: float) -> float:
    """Expected number of nodes inside a disk of ``radius`` at the configured density."""
    return cfg.density * math.pi * radius ** 2

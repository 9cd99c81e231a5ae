"""Per-node energy accounting and network lifetime."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .config import WorldConfig

DEVICES = ("lps", "hps", "dpu", "tx", "rx", "clock")


@dataclass
class DeviceFlags:
    lps: bool = False
    hps: bool = False
    dpu: bool = False
    tx: bool = False
    rx: bool = False
    clock: bool = False
    n_tx: int = 0
    hps_range: float = 0.0

    @classmethod
    def for_state(cls, state: int, hps_range: float = 0.0, n_tx: int = 0) -> "DeviceFlags":
        """Device pattern of a PFSA state (1 = Sleep, 2 = LPS, 3 = HPS).

        The clock runs in every powered state.
        """
        if state == 1:
            return cls(dpu=True, clock=True)
        if state == 2:
            return cls(lps=True, dpu=True, tx=True, rx=True, clock=True, n_tx=n_tx)
        if state == 3:
            return cls(hps=True, dpu=True, tx=True, rx=True, clock=True,
                       n_tx=n_tx, hps_range=hps_range)
        raise ValueError(f"unknown state {state!r}")


def device_energy(flags: DeviceFlags, cfg: WorldConfig, dt: Optional[float] = None) -> dict[str, float]:
    """Joules drawn by each device over one step."""
    dt = cfg.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    if flags.n_tx < 0:
        raise ValueError("n_tx must be non-negative")
    return {
        "lps": cfg.e_lps * dt if flags.lps else 0.0,
        "hps": cfg.w_hps * flags.hps_range * dt if flags.hps else 0.0,
        "dpu": cfg.e_dpu * dt if flags.dpu else 0.0,
        "tx": flags.n_tx * cfg.e_tx * dt if flags.tx else 0.0,
        "rx": cfg.e_rx * dt if flags.rx else 0.0,
        "clock": cfg.e_clock * dt if flags.clock else 0.0,
    }


def step_energy(flags: DeviceFlags, cfg: WorldConfig, dt: Optional[float] = None) -> float:
    return sum(device_energy(flags, cfg, dt).values())


@dataclass
class EnergyLedger:
    e0: float
    per_device: dict[str, float] = field(default_factory=lambda: {d: 0.0 for d in DEVICES})
    consumed_total: float = 0.0

    @property
    def dead(self) -> bool:
        return self.consumed_total >= self.e0

    @property
    def remaining_fraction(self) -> float:
        if self.e0 <= 0:
            return 0.0
        return max(0.0, 1.0 - self.consumed_total / self.e0)

    @property
    def remaining(self) -> float:
        return max(0.0, self.e0 - self.consumed_total)

    def charge(self, joules: float, device: Optional[str] = None) -> "EnergyLedger":
        if joules < 0:
            raise ValueError("cannot charge negative energy")
        if device is not None:
            self.per_device[device] += joules
        self.consumed_total += joules
        return self

    def charge_flags(self, flags: DeviceFlags, cfg: WorldConfig) -> float:
        """Charge one step of device usage; dead nodes draw nothing."""
        if self.dead:
            return 0.0
        total = 0.0
        for dev, joules in device_energy(flags, cfg).items():
            if joules:
                self.per_device[dev] += joules
                total += joules
        self.consumed_total += total
        return total


def charge(ledger: EnergyLedger, joules: float) -> EnergyLedger:
    return ledger.charge(joules)


def tube_membership(positions: np.ndarray, polyline: np.ndarray, radius: float) -> set[int]:
    """Indices of nodes within ``radius`` (inclusive) of a polyline."""
    poly = np.asarray(polyline, dtype=float)
    if poly.ndim != 2 or poly.shape[0] < 2 or poly.shape[1] != 2:
        raise ValueError("polyline needs at least two 2-D vertices")
    seg = np.diff(poly, axis=0)
    seg_len2 = np.einsum("ij,ij->i", seg, seg)
    if np.any(seg_len2 == 0):
        raise ValueError("degenerate polyline: repeated vertex")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    best = np.full(len(pts), np.inf)
    for a, d, l2 in zip(poly[:-1], seg, seg_len2):
        t = np.clip((pts - a) @ d / l2, 0.0, 1.0)
        proj = a + t[:, None] * d
        best = np.minimum(best, np.linalg.norm(pts - proj, axis=1))
    return {int(i) for i in np.flatnonzero(best <= radius + 1e-12)}


def network_lifetime(times: Sequence[float], consumed: np.ndarray, e0: np.ndarray,
                     tube_nodes: Iterable[int], eta: float = 1.0) -> float:
    """Earliest time at which the tube has lost a fraction ``eta`` of its energy.

    ``consumed`` has shape (n_steps, n_nodes) holding cumulative joules at each
    logged time, ``e0`` the initial energy per node. Between log points the
    depletion is interpolated linearly. Returns ``inf`` when the fraction is
    not reached within the logged horizon.
    """
    tube = sorted(set(tube_nodes))
    if not tube:
        raise ValueError("tube_nodes is empty")
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    t = np.asarray(times, dtype=float)
    used = np.minimum(np.asarray(consumed, dtype=float)[:, tube], np.asarray(e0, dtype=float)[tube])
    total = float(np.sum(np.asarray(e0, dtype=float)[tube]))
    if total <= 0:
        return float(t[0]) if len(t) else 0.0
    frac = used.sum(axis=1) / total
    if eta == 1.0:
        # exact depletion check avoids float round-off at the last joule
        hit = np.flatnonzero(np.all(used >= np.asarray(e0, dtype=float)[tube] - 1e-9, axis=1))
        if hit.size == 0:
            return float("inf")
        i = int(hit[0])
    else:
        hit = np.flatnonzero(frac >= eta - 1e-12)
        if hit.size == 0:
            return float("inf")
        i = int(hit[0])
    if i == 0:
        return float(t[0])
    f0, f1 = frac[i - 1], frac[i]
    if f1 == f0:
        return float(t[i])
    return float(t[i - 1] + (min(eta, f1) - f0) / (f1 - f0) * (t[i] - t[i - 1]))


def lifetime_from_rates(power: Mapping[int, float] | np.ndarray, e0: np.ndarray,
                        tube_nodes: Iterable[int]) -> float:
    """Depletion time of the slowest tube node under constant per-node power."""
    tube = sorted(set(tube_nodes))
    if not tube:
        raise ValueError("tube_nodes is empty")
    p = np.asarray([power[i] for i in tube], dtype=float)
    e = np.asarray(e0, dtype=float)[tube]
    with np.errstate(divide="ignore"):
        t = np.where(p > 0, e / np.where(p > 0, p, 1.0), np.where(e > 0, np.inf, 0.0))
    return float(np.max(t))

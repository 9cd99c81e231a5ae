"""World configuration: every tunable of a run, its defaults, and validation."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants.

    ``violations`` lists one human-readable message per failed invariant.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class WorldConfig:
    # region (m) and deployment
    width: float = 500.0
    height: float = 500.0
    density: float = 1.4e-3
    n_nodes: Optional[int] = None

    # ranges (m)
    r_lps: float = 30.0
    r_r: float = 15.0
    r_c: float = 120.0
    hps_ranges: tuple[float, ...] = (30.0, 36.0, 42.0, 48.0, 54.0, 60.0)
    delta_r: float = 6.0

    # detection / measurement
    alpha: float = 0.95
    beta: float = 0.0036
    p_fa: float = 0.01
    p_d: float = 0.95
    sigma_r: float = 0.075
    sigma_phi: float = math.radians(0.25)
    mu_cl: float = 0.025

    # target motion
    sigma_vx: float = 0.1
    sigma_vy: float = 0.1
    sigma_vpsi: float = math.radians(0.1)
    target_speed: float = 5.0

    # energy rates (W), W/m for the HPS device, J, s
    e_clock: float = 0.01
    e_lps: float = 0.115
    e_dpu: float = 1.0
    e_tx: float = 1.26
    e_rx: float = 0.63
    w_hps: float = 0.2
    e0: float = 137592.0
    dt: float = 0.5

    # selection and game
    n_sel: int = 3
    n_sel_ext: int = 5
    p_sleep: float = 0.5
    p_rand: float = 0.5
    delta: float = 0.05
    db1: float = 0.5
    db2: float = 0.5
    xi: Optional[float] = None
    trust_by_range: bool = True
    grid_u: int = 10
    grid_v: int = 10
    maxlogit_iters: int = 500
    tau: float = 0.01
    egdop_exhaustive_limit: int = 5000

    # tracking
    m_confirm: int = 2
    n_confirm: int = 3
    v_max: float = 15.0
    gate_prob: float = 0.99

    # lifetime
    eta: float = 1.0

    # listed in the parameter table without a definition; carried, unused
    chi: float = 0.1

    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hps_ranges", tuple(float(r) for r in self.hps_ranges))

    @property
    def r_1(self) -> float:
        return self.hps_ranges[0]

    @property
    def r_l(self) -> float:
        return self.hps_ranges[-1]

    @property
    def trust_tolerance(self) -> float:
        """Maximum position-error trace (m^2) of a trustworthy broadcast."""
        if self.xi is not None:
            return self.xi
        return (self.r_1 ** 2 * self.sigma_phi ** 2 + self.sigma_r ** 2) / 2.0

    def trust_tolerance_at(self, r_hps: Optional[float]) -> float:
        """Tolerance for a track reported by a sender sensing at ``r_hps``.

        With ``trust_by_range`` the base tolerance formula is evaluated at the
        sender's range instead of R_1, so extended-range trackers are judged
        against their own initialization error. Never below the base value.
        """
        if self.xi is not None or not self.trust_by_range or r_hps is None:
            return self.trust_tolerance
        r = max(float(r_hps), self.r_1)
        return (r ** 2 * self.sigma_phi ** 2 + self.sigma_r ** 2) / 2.0

    @property
    def node_count(self) -> int:
        if self.n_nodes is not None:
            return int(self.n_nodes)
        # guard against float noise such as 1.4e-3 * 250000 = 350.00000000000006
        return int(math.ceil(round(self.density * self.width * self.height, 9)))

    def replace(self, **changes: Any) -> "WorldConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["hps_ranges"] = list(self.hps_ranges)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "WorldConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown config key '{k}'" for k in unknown])
        data = dict(data)
        if "hps_ranges" in data:
            data["hps_ranges"] = tuple(data["hps_ranges"])
        return cls(**data)


def slope_lower_bound(delta_r: float, n_players: int, r_l: float, delta: float) -> float:
    """Smallest admissible coverage slope for a target coverage risk ``delta``."""
    if delta_r <= 0 or n_players <= 0 or r_l <= 0:
        raise ValueError("delta_r, n_players and r_l must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return delta_r / (n_players * r_l * delta)


def validate_config(cfg: WorldConfig) -> WorldConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError."""
    errors: list[str] = []
    if cfg.width <= 0 or cfg.height <= 0:
        errors.append("region must have positive width and height")
    if cfg.density < 0:
        errors.append("density must be non-negative")
    ranges = cfg.hps_ranges
    if len(ranges) == 0:
        errors.append("hps_ranges must be non-empty")
    else:
        if any(b <= a for a, b in zip(ranges, ranges[1:])):
            errors.append("hps_ranges must be strictly increasing")
        elif any(not math.isclose(b - a, cfg.delta_r, rel_tol=1e-9, abs_tol=1e-9)
                 for a, b in zip(ranges, ranges[1:])):
            errors.append("consecutive hps_ranges must differ by delta_r")
        if ranges[0] <= 0:
            errors.append("hps_ranges must be positive")
        if cfg.r_c < 2 * cfg.r_l:
            errors.append(f"R_c < 2*R_L ({cfg.r_c:g} < {2 * cfg.r_l:g})")
    if cfg.r_r > cfg.r_lps:
        errors.append("reliable radius R_r exceeds R_LPS")
    if not cfg.n_sel > 1:
        errors.append("n_sel must exceed 1")
    if not cfg.n_sel_ext > cfg.n_sel:
        errors.append("n_sel_ext must exceed n_sel")
    for name in ("alpha", "p_fa", "p_d", "p_sleep", "p_rand", "gate_prob"):
        v = getattr(cfg, name)
        if not 0.0 <= v <= 1.0:
            errors.append(f"{name} must lie in [0, 1]")
    if not 0.0 < cfg.delta < 1.0:
        errors.append("delta must lie in (0, 1)")
    elif ranges and cfg.delta_r > 0:
        bound = slope_lower_bound(cfg.delta_r, cfg.n_sel_ext, cfg.r_l, cfg.delta)
        if not cfg.db1 > bound:
            errors.append(f"slope bound violated: db1={cfg.db1:g} <= {bound:.6g}")
    if not cfg.db2 > 0:
        errors.append("slope bound violated: db2 must be positive")
    if cfg.dt <= 0:
        errors.append("dt must be positive")
    if cfg.e0 < 0:
        errors.append("e0 must be non-negative")
    for name in ("e_clock", "e_lps", "e_dpu", "e_tx", "e_rx", "w_hps",
                 "sigma_r", "sigma_phi", "sigma_vx", "sigma_vy", "sigma_vpsi", "mu_cl"):
        if getattr(cfg, name) < 0:
            errors.append(f"{name} must be non-negative")
    if cfg.grid_u < 1 or cfg.grid_v < 1:
        errors.append("grid dimensions must be >= 1")
    if cfg.maxlogit_iters < 1 or cfg.tau <= 0:
        errors.append("maxlogit needs iterations >= 1 and tau > 0")
    if not 1 <= cfg.m_confirm <= cfg.n_confirm:
        errors.append("M-of-N requires 1 <= M <= N")
    if not (0.0 <= cfg.eta <= 1.0):
        errors.append("eta must lie in [0, 1]")
    if errors:
        raise ConfigError(errors)
    return cfg


def default_config() -> WorldConfig:
    return load_config(resources.files("poser.data").joinpath("default.json"))


def load_config(path) -> WorldConfig:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if "world" in data:
        data = data["world"]
    return WorldConfig.from_dict(data)


def dump_config(cfg: WorldConfig, path: Path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")

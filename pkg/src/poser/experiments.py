"""Monte Carlo orchestration, validation studies and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .baselines import select_by_gdop, select_max_energy
from .config import ConfigError, WorldConfig, validate_config
from .energy import lifetime_from_rates, tube_membership
from .game import (build_game, coverage_share, exhaustive_optimum, maxlogit_solve, utility)
from .metrics import detection_series, hps_per_target, missed_detection_rate, rmse
from .network import aux_stream, uniform_deployment, positions_of
from .selection import candidate_set, select_by_egdop
from .sim import Scheduler, TargetSpec, inject_gap, make_world, run_step, truth_at

CELL_KEYS = ("scheduler", "density", "p_sleep", "p_rand", "fixed_range_m", "n_targets")
METRICS = ("pm", "pm_track", "rmse_pos_m", "rmse_vel_mps", "hps_per_target", "lifetime_s")
RUN_COLUMNS = CELL_KEYS + ("run", "seed", "status") + METRICS + ("error",)
EGDOP_BOUNDS = (0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


# ----------------------------------------------------------------------------- specs

@dataclass(frozen=True)
class RunSpec:
    schedulers: tuple[str, ...] = ("poser",)
    densities: tuple[float, ...] = (1.4e-3,)
    p_sleeps: tuple[float, ...] = (0.5,)
    p_rands: tuple[float, ...] = (0.5,)
    fixed_ranges: tuple[Optional[float], ...] = (None,)      # None means R_1
    n_targets: tuple[int, ...] = (1,)
    runs: int = 100
    seed: int = 0
    steps: int = 200
    warmup: int = 40
    gap_radius: float = 0.0
    gap_time: float = 50.0
    # lifetime geometry: a tube_length x 2 R_L strip with targets on its centre line
    tube: bool = False
    tube_length: float = 600.0

    def __post_init__(self):
        for name in ("schedulers", "densities", "p_sleeps", "p_rands", "fixed_ranges", "n_targets"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self) -> "RunSpec":
        errors = []
        for name in ("schedulers", "densities", "p_sleeps", "p_rands", "fixed_ranges", "n_targets"):
            if not getattr(self, name):
                errors.append(f"sweep '{name}' is empty")
        for s in self.schedulers:
            try:
                Scheduler(s)
            except ValueError:
                errors.append(f"unknown scheduler '{s}'")
        if self.runs < 1:
            errors.append("runs must be >= 1")
        if self.steps < 1:
            errors.append("steps must be >= 1")
        if any(n < 0 for n in self.n_targets):
            errors.append("target counts must be non-negative")
        if self.gap_radius < 0:
            errors.append("gap_radius must be non-negative")
        if errors:
            raise ConfigError(errors)
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError([f"unknown run key '{k}'" for k in unknown])
        return cls(**data)


def load_experiment(path: str | Path) -> tuple[WorldConfig, RunSpec]:
    """Read a JSON document with optional ``world`` and ``run`` sections."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = sorted(set(data) - {"world", "run"})
    if unknown:
        raise ConfigError([f"unknown top-level key '{k}'" for k in unknown])
    cfg = WorldConfig.from_dict(data.get("world", {}))
    spec = RunSpec.from_dict(data.get("run", {}))
    return validate_config(cfg), spec.validate()


def config_hash(cfg: WorldConfig, spec: Optional[RunSpec] = None) -> str:
    doc = {"world": cfg.to_dict(), "run": spec.to_dict() if spec else None}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


# ----------------------------------------------------------------------------- cells and runs

@dataclass(frozen=True)
class Cell:
    scheduler: str
    density: float
    p_sleep: Optional[float]
    p_rand: Optional[float]
    fixed_range_m: Optional[float]
    n_targets: int

    def as_row(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def cells(spec: RunSpec, cfg: WorldConfig) -> list[Cell]:
    """Sweep grid; parameters a scheduler ignores are left empty instead of repeated."""
    out = []
    for s in spec.schedulers:
        sched = Scheduler(s)
        sleeps = spec.p_sleeps if sched is Scheduler.POSER else (None,)
        rands = spec.p_rands if sched is Scheduler.RANDOM else (None,)
        ranges = (None,) if sched is Scheduler.POSER else tuple(
            cfg.r_1 if r is None else float(r) for r in spec.fixed_ranges)
        for d, ps, pr, fr, lam in itertools.product(spec.densities, sleeps, rands, ranges, spec.n_targets):
            out.append(Cell(sched.value, float(d), ps, pr, fr, int(lam)))
    return out


def _targets(cfg: WorldConfig, count: int) -> list[TargetSpec]:
    crossing = int(round(cfg.width / (cfg.target_speed * cfg.dt)))
    y = cfg.height / 2.0
    return [TargetSpec((0.0, cfg.target_speed, y, 0.0, 0.0), j * crossing // max(count, 1))
            for j in range(count)]


def scenario_config(cfg: WorldConfig, cell: Cell, spec: RunSpec, run: int) -> WorldConfig:
    changes: dict[str, Any] = {"density": cell.density, "seed": spec.seed + run, "n_nodes": None}
    if cell.p_sleep is not None:
        changes["p_sleep"] = cell.p_sleep
    if cell.p_rand is not None:
        changes["p_rand"] = cell.p_rand
    if spec.tube:
        changes.update(width=spec.tube_length, height=2 * cfg.r_l)
    return cfg.replace(**changes)


def run_one(cfg: WorldConfig, cell: Cell, spec: RunSpec, run: int) -> dict[str, Any]:
    """One Monte Carlo run of one cell; failures become a row with status 'failed'."""
    row: dict[str, Any] = {**cell.as_row(), "run": run, "seed": spec.seed + run, "status": "ok", "error": ""}
    row.update({m: math.nan for m in METRICS})
    try:
        c = scenario_config(cfg, cell, spec, run)
        targets = _targets(c, cell.n_targets)
        w = make_world(c, cell.scheduler, run=0, targets=targets, fixed_range=cell.fixed_range_m,
                       respawn=spec.tube)
        if spec.gap_radius > 0 and targets:
            center = truth_at(c, 0, targets[0], int(round(spec.gap_time / c.dt)))[[0, 2]]
            inject_gap(w, center, spec.gap_radius)
        logs = [run_step(w) for _ in range(spec.steps)]
        row["pm"] = missed_detection_rate(logs)
        row["pm_track"] = missed_detection_rate(logs, track_based=True)
        try:
            row["rmse_pos_m"], row["rmse_vel_mps"] = rmse(logs)
        except ValueError:
            pass
        row["hps_per_target"] = hps_per_target(logs, spec.warmup)
        if spec.tube:
            row["lifetime_s"] = tube_lifetime(w, spec.steps * c.dt)
    except Exception as exc:     # a broken run must not take the sweep down
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def tube_lifetime(w, horizon_s: float) -> float:
    """Depletion time of the slowest tube node, extrapolated from mean power over the horizon."""
    cfg = w.cfg
    line = np.array([[0.0, cfg.height / 2.0], [cfg.width, cfg.height / 2.0]])
    tube = tube_membership(w.positions, line, cfg.r_lps)
    power = np.array([nd.ledger.consumed_total / horizon_s for nd in w.nodes])
    e0 = np.array([nd.ledger.e0 for nd in w.nodes])
    return lifetime_from_rates(power, e0, tube)


def _task(args):
    return run_one(*args)


# ----------------------------------------------------------------------------- aggregation

@dataclass
class Accumulator:
    """Count, mean and sum of squared deviations; merges associatively."""
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float) -> "Accumulator":
        if math.isnan(x):
            return self
        return self.merge(Accumulator(1, float(x), 0.0))

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.n == 0:
            return Accumulator(self.n, self.mean, self.m2)
        if self.n == 0:
            return Accumulator(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return Accumulator(n, mean, m2)

    @property
    def sem(self) -> float:
        if self.n < 2:
            return math.nan
        return math.sqrt(self.m2 / (self.n - 1) / self.n)

    @property
    def value(self) -> float:
        return self.mean if self.n else math.nan


def _cell_key(row: dict[str, Any]) -> tuple:
    return tuple(row[k] for k in CELL_KEYS)


def aggregate(rows: Iterable[dict[str, Any]]) -> dict[tuple, dict[str, Accumulator]]:
    out: dict[tuple, dict[str, Accumulator]] = {}
    for r in rows:
        acc = out.setdefault(_cell_key(r), {m: Accumulator() for m in METRICS + ("failed",)})
        acc["failed"] = acc["failed"].add(1.0 if r["status"] != "ok" else 0.0)
        if r["status"] != "ok":
            continue
        for m in METRICS:
            acc[m] = acc[m].add(float(r[m]))
    return out


def merge_aggregates(parts: Sequence[dict[tuple, dict[str, Accumulator]]]) -> dict[tuple, dict[str, Accumulator]]:
    out: dict[tuple, dict[str, Accumulator]] = {}
    for part in parts:
        for key, accs in part.items():
            cur = out.setdefault(key, {m: Accumulator() for m in accs})
            for m, a in accs.items():
                cur[m] = cur[m].merge(a)
    return out


@dataclass
class MetricsTable:
    rows: list[dict[str, Any]]
    summary: dict[tuple, dict[str, Accumulator]]
    cfg: WorldConfig
    spec: RunSpec

    def lifetime_reference(self) -> float:
        """Mean lifetime of the POSE.R cell with no targets and p_sleep 0.75, if present."""
        for key, acc in self.summary.items():
            cell = dict(zip(CELL_KEYS, key))
            if cell["scheduler"] == "poser" and cell["n_targets"] == 0 and cell["p_sleep"] == 0.75:
                return acc["lifetime_s"].value
        return math.nan

    def value(self, metric: str, **match) -> float:
        acc = self._find(match)
        if metric == "lifetime_norm":
            return acc["lifetime_s"].value / self.lifetime_reference()
        return acc[metric].value

    def _find(self, match):
        hits = [acc for key, acc in self.summary.items()
                if all(dict(zip(CELL_KEYS, key))[k] == v for k, v in match.items())]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {match}")
        return hits[0]


def monte_carlo(cfg: WorldConfig, spec: RunSpec, parallel: int = 1) -> MetricsTable:
    """Run every cell of the sweep ``spec.runs`` times with seeds ``spec.seed + i``."""
    validate_config(cfg)
    spec.validate()
    tasks = [(cfg, cell, spec, i) for cell in cells(spec, cfg) for i in range(spec.runs)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            rows = list(ex.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
    else:
        rows = [_task(t) for t in tasks]
    return MetricsTable(rows, aggregate(rows), cfg, spec)


# ----------------------------------------------------------------------------- serialization

def _fmt(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_value(text: str, column: str) -> Any:
    if text == "":
        return None if column in CELL_KEYS else ""
    if column in ("scheduler", "status", "error"):
        return text
    if column in ("n_targets", "run", "seed"):
        return int(text)
    return float(text)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])


def read_runs(path: Path) -> list[dict[str, Any]]:
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: parse_value(v, k) for k, v in r.items()} for r in rd]


def write_table(table: MetricsTable, out_dir: str | Path) -> list[Path]:
    """``runs.csv``, one summary CSV per metric, ``plot.gp`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "runs.csv"]
    write_csv(written[0], RUN_COLUMNS, ([r[c] for c in RUN_COLUMNS] for r in table.rows))
    keys = list(table.summary)
    ref = table.lifetime_reference()
    for m in METRICS + ("lifetime_norm",):
        if m == "lifetime_norm" and not table.spec.tube:
            continue
        path = out / f"{m}.csv"
        body = []
        for key in keys:
            acc = table.summary[key]["lifetime_s" if m == "lifetime_norm" else m]
            scale = ref if m == "lifetime_norm" else 1.0
            body.append(list(key) + [acc.n, acc.value / scale, acc.sem / scale])
        write_csv(path, CELL_KEYS + ("n", m, f"{m}_sem"), body)
        written.append(path)
    written.append(_write_plot_script(out, [p.stem for p in written[1:]]))
    from . import __version__
    manifest = {
        "config_hash": config_hash(table.cfg, table.spec),
        "seed_base": table.spec.seed,
        "runs": table.spec.runs,
        "code_version": __version__,
        "world": table.cfg.to_dict(),
        "run": table.spec.to_dict(),
        "failed_runs": sum(1 for r in table.rows if r["status"] != "ok"),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(out / "manifest.json")
    return written


def _write_plot_script(out: Path, metrics: Sequence[str]) -> Path:
    """gnuplot script drawing each summary CSV against density, one curve per scheduler."""
    lines = ["set datafile separator ','", "set terminal pngcairo size 800,500", "set xlabel 'density (nodes/m^2)'",
             "scheds = 'poser ans lpshps random'"]
    for m in metrics:
        lines += [f"set output '{m}.png'", f"set ylabel '{m}'",
                  f"plot for [s in scheds] '{m}.csv' using 2:(strcol(1) eq s ? $8 : NaN):9 "
                  "with yerrorlines title s"]
    path = out / "plot.gp"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# ----------------------------------------------------------------------------- coverage gap

@dataclass
class GapResult:
    scheduler: str
    p_det: np.ndarray           # per-step mean coverage over runs
    in_window: np.ndarray       # per-step flag: target inside the gap in some run
    window_mean: float          # mean coverage over (run, step) pairs inside the gap
    longest_zero: int           # longest run of consecutive steps with p_det == 0


def gap_experiment(cfg: WorldConfig, runs: int = 50, seed: int = 0,
                   schedulers: Sequence[str] = ("poser", "ans", "lpshps", "random"),
                   r_gap: float = 50.0, t_gap: float = 50.0, steps: Optional[int] = None,
                   fixed_range: Optional[float] = None) -> list[GapResult]:
    """Dead-node disk centred on the target's true position at ``t_gap``."""
    k_gap = int(round(t_gap / cfg.dt))
    if steps is None:
        steps = k_gap + int(math.ceil(r_gap / (cfg.target_speed * cfg.dt))) + 10
    out = []
    for s in schedulers:
        series, windows, inside = [], [], []
        for i in range(runs):
            c = cfg.replace(seed=seed + i)
            tgt = _targets(c, 1)
            center = truth_at(c, 0, tgt[0], k_gap)[[0, 2]]
            w = make_world(c, s, run=0, targets=tgt, fixed_range=fixed_range)
            inject_gap(w, center, r_gap)
            logs = [run_step(w) for _ in range(steps)]
            series.append(detection_series(logs))
            win = np.array([bool(lg.truth_ids) and np.linalg.norm(lg.truths[0][[0, 2]] - center) <= r_gap
                            for lg in logs])
            windows.append(win)
            inside.extend(series[-1][win])
        arr, win = np.array(series), np.array(windows)
        with np.errstate(invalid="ignore"):
            p_det = np.nanmean(np.where(np.isnan(arr), np.nan, arr), axis=0)
        any_win = win.any(axis=0)
        out.append(GapResult(s, p_det, any_win, float(np.mean(inside)) if inside else math.nan,
                             _longest_zero(p_det)))
    return out


def _longest_zero(x: np.ndarray) -> int:
    best = cur = 0
    for v in x:
        cur = cur + 1 if v == 0 else 0
        best = max(best, cur)
    return best


# ----------------------------------------------------------------------------- EGDOP comparison

def _bearing_cov(node_pos: np.ndarray, target: np.ndarray, sigma: float) -> np.ndarray:
    d = node_pos - target
    r2 = np.einsum("ij,ij->i", d, d)
    phi = np.arctan2(d[:, 1], d[:, 0])
    s, c = np.sin(phi), np.cos(phi)
    w = 1.0 / (sigma ** 2 * r2)
    info = np.array([[np.sum(w * s * s), -np.sum(w * s * c)], [-np.sum(w * s * c), np.sum(w * c * c)]])
    return np.linalg.inv(info)


def gaussian_kl(cov0: np.ndarray, cov1: np.ndarray) -> float:
    """KL divergence between zero-mean-offset Gaussians N(m, cov0) || N(m, cov1)."""
    k = cov0.shape[0]
    inv1 = np.linalg.inv(cov1)
    _, ld0 = np.linalg.slogdet(cov0)
    _, ld1 = np.linalg.slogdet(cov1)
    return 0.5 * (float(np.trace(inv1 @ cov0)) - k + ld1 - ld0)


@dataclass
class EgdopRow:
    bound: float
    e_savings_pct: float
    e_eff_egdop: float
    e_eff_gdop: float
    dkl_gdop_egdop: float
    dkl_gdop_me: float
    runs_used: int


def egdop_comparison(cfg: WorldConfig, runs: int = 100, seed: int = 0,
                     bounds: Sequence[float] = EGDOP_BOUNDS, pred_sigma: float = 0.2) -> list[EgdopRow]:
    """Energy and geometry statistics of EGDOP, GDOP and maximum-energy picks.

    Every bound reuses the same deployments, predictions and uniform draws u,
    with initial energy (b + (1 - b) u) E_0, so the columns differ only by b.
    """
    n_sel, e0 = cfg.n_sel, cfg.e0
    cost = cfg.w_hps * cfg.r_1 * cfg.dt
    stats = {b: {k: [] for k in ("sav", "eg", "g", "kl_eg", "kl_me")} for b in bounds}
    for i in range(runs):
        rng = aux_stream(seed, i, 2)
        nodes = uniform_deployment(cfg, rng)
        pos = positions_of(nodes)
        margin = cfg.r_l
        pred = rng.uniform([margin, margin], [cfg.width - margin, cfg.height - margin])
        pcov = np.eye(2) * pred_sigma ** 2
        u = rng.uniform(size=len(nodes))
        cand = candidate_set(pred, pcov, range(len(nodes)), pos, cfg.r_1)
        if len(cand) < n_sel:
            continue
        for b in bounds:
            frac = b + (1.0 - b) * u
            energy = frac * e0
            s_eg = select_by_egdop(cand, frac, pos, pred, pcov, n_sel, cfg, cfg.r_1)
            s_g = select_by_gdop(cand, frac, pos, pred, pcov, n_sel, cfg, cfg.r_1)
            s_me = select_max_energy(cand, frac, n_sel)
            rem = {s: float(np.sum(energy[list(s)] - cost)) for s in (s_eg, s_g, s_me)}
            st = stats[b]
            st["sav"].append((rem[s_eg] - rem[s_g]) / (n_sel * e0) * 100.0)
            st["eg"].append(rem[s_eg] / rem[s_me])
            st["g"].append(rem[s_g] / rem[s_me])
            try:
                c_g = _bearing_cov(pos[list(s_g)], pred, cfg.sigma_phi)
                st["kl_eg"].append(gaussian_kl(c_g, _bearing_cov(pos[list(s_eg)], pred, cfg.sigma_phi)))
                st["kl_me"].append(gaussian_kl(c_g, _bearing_cov(pos[list(s_me)], pred, cfg.sigma_phi)))
            except np.linalg.LinAlgError:
                pass
    rows = []
    for b in bounds:
        st = stats[b]
        rows.append(EgdopRow(b, float(np.mean(st["sav"])), float(np.mean(st["eg"])), float(np.mean(st["g"])),
                             float(np.mean(st["kl_eg"])), float(np.mean(st["kl_me"])), len(st["sav"])))
    return rows


# ----------------------------------------------------------------------------- game studies

GAME_SIGMA = (0.04, 0.25)


def random_game(cfg: WorldConfig, n_players: int, rng: np.random.Generator,
                sigma_range: tuple[float, float] = GAME_SIGMA, max_tries: int = 10_000):
    """A random game that has small uncertainty and enough nodes to cover it.

    Position standard deviations are log-uniform over ``sigma_range`` (the
    default spans what the simulator's fused predictions produce) and capped
    at R_L/6. At least min(N_sel, players) players can each cover the whole
    grid at R_L, while fewer than N_sel cover it at R_1, so extension is needed.
    """
    need = min(cfg.n_sel, n_players)
    lo, hi = math.log(sigma_range[0]), math.log(min(sigma_range[1], cfg.r_l / 6.0))
    game_cfg = cfg.replace(n_sel_ext=max(cfg.n_sel_ext, n_players)) if n_players > cfg.n_sel_ext else cfg
    for _ in range(max_tries):
        sx, sy = np.exp(rng.uniform(lo, hi, size=2))
        rho = rng.uniform(-0.5, 0.5)
        pcov = np.array([[sx * sx, rho * sx * sy], [rho * sx * sy, sy * sy]])
        ang = rng.uniform(0.0, 2 * math.pi, n_players)
        rad = cfg.r_l * np.sqrt(rng.uniform(0.0, 1.0, n_players))
        pos = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        game = build_game(range(n_players), pos, np.zeros(2), pcov, game_cfg)
        full_l = int(np.sum(game.cover[:, -1, :].all(axis=1)))
        full_base = int(np.sum(game.cover[:, 1, :].all(axis=1)))
        if full_l >= need and full_base < cfg.n_sel:
            return game
    raise RuntimeError("no admissible game geometry found")


@dataclass
class GameRow:
    n_players: int
    games: int
    chi_star: float
    phi_eff: float
    t_game_s: float
    t_opt_s: float


def game_validation(cfg: WorldConfig, players: Sequence[int] = (3, 4, 5), games: int = 200,
                    seed: int = 0) -> list[GameRow]:
    """Maxlogit equilibria against the exhaustive optimum of the same game."""
    rows = []
    for n in players:
        chi, eff, tg, to = [], [], [], []
        for g in range(games):
            rng = aux_stream(seed, g, 3, n)
            game = random_game(cfg.replace(n_sel_ext=max(n, cfg.n_sel + 1)), n, rng)
            t0 = time.perf_counter()
            a = maxlogit_solve(game, cfg.maxlogit_iters, cfg.tau, rng)
            t1 = time.perf_counter()
            opt = exhaustive_optimum(game)
            t2 = time.perf_counter()
            phi_a, phi_o = game.phi_idx(game.index_of(a)), game.phi_idx(game.index_of(opt))
            chi.append(coverage_share(a, game))
            eff.append(phi_a / phi_o if phi_o != 0 else 1.0)
            tg.append(t1 - t0)
            to.append(t2 - t1)
        rows.append(GameRow(n, games, float(np.mean(chi)), float(np.mean(eff)),
                            float(np.mean(tg)), float(np.mean(to))))
    return rows


def exact_coverage_statistic(cfg: WorldConfig, instances: int = 200, seed: int = 0,
                       n_players: Optional[int] = None) -> np.ndarray:
    """Worth mass covered by exactly N_sel players at the maxlogit equilibrium, per instance."""
    n = cfg.n_sel_ext if n_players is None else n_players
    out = np.empty(instances)
    for g in range(instances):
        rng = aux_stream(seed, g, 4, n)
        game = random_game(cfg, n, rng)
        out[g] = coverage_share(maxlogit_solve(game, cfg.maxlogit_iters, cfg.tau, rng), game)
    return out


def potential_identity(cfg: WorldConfig, instances: int = 1000, seed: int = 0) -> float:
    """Largest |dU_i - dPhi| over random games, joint actions and unilateral deviations."""
    worst = 0.0
    for g in range(instances):
        rng = aux_stream(seed, g, 5)
        n = int(rng.integers(2, cfg.n_sel_ext + 1))
        game = random_game(cfg, n, rng)
        n_act = len(game.actions)
        a = list(game.values_of(rng.integers(n_act, size=n)))
        i = int(rng.integers(n))
        b = list(a)
        b[i] = float(game.actions[int(rng.integers(n_act))])
        du = utility(i, b, game) - utility(i, a, game)
        dphi = game.phi_idx(game.index_of(b)) - game.phi_idx(game.index_of(a))
        worst = max(worst, abs(du - dphi))
    return worst

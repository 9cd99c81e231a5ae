"""The per-step world loop for the adaptive scheduler and the three baselines."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .baselines import select_by_gdop
from .config import WorldConfig, validate_config
from .energy import DeviceFlags
from .fusion import FusedEstimate, TrackBroadcast, t2ta_group, t2tf_fuse, predict_fused, trusted_for
from .game import build_game, maxlogit_solve, select_leader
from .network import (NodeState, State, aux_stream, env_stream, neighbor_lists, node_stream,
                      positions_of, uniform_deployment)
from .pfsa import DncView, PfsaContext, TransitionRow, dops_probability, step_state, transition_row
from .selection import Path, SelectionOutcome, candidate_set, dans
from .target import hps_measure, propagate_target, sample_lps
from .tracking import (CONFIRMED, DROPPED, Track, initialize_track, jpda_update, mofn_update,
                       predict_track)


class Scheduler(str, Enum):
    POSER = "poser"
    ANS = "ans"
    LPSHPS = "lpshps"
    RANDOM = "random"


@dataclass(frozen=True)
class TargetSpec:
    start: tuple[float, ...]
    birth_step: int = 0


@dataclass
class Truth:
    id: int
    state: np.ndarray
    active: bool = True


@dataclass
class StepLog:
    k: int
    t: float
    truth_ids: tuple[int, ...]
    truths: np.ndarray
    covered: tuple[bool, ...]
    tracked: tuple[bool, ...]
    states: np.ndarray
    r_hps: np.ndarray
    hps_count: int
    selections: tuple[tuple[int, ...], ...]
    paths: tuple[str, ...]
    estimates: list
    n_games: int
    energy: Optional[np.ndarray] = None


@dataclass
class _Group:
    fused: FusedEstimate
    outcome: SelectionOutcome
    energy_senders: frozenset
    games: int


@dataclass
class World:
    cfg: WorldConfig
    scheduler: Scheduler
    nodes: list[NodeState]
    positions: np.ndarray
    nbrs: list[np.ndarray]
    rngs: list[np.random.Generator]
    env: np.random.Generator
    specs: list[TargetSpec]
    run: int = 0
    fixed_range: Optional[float] = None
    respawn: bool = False
    record_energy: bool = False
    k: int = 0
    truths: list[Truth] = field(default_factory=list)
    next_truth: int = 0
    next_track: list[int] = field(default_factory=list)
    spawn_offset: int = 0

    @property
    def time(self) -> float:
        return self.k * self.cfg.dt


def default_target(cfg: WorldConfig) -> TargetSpec:
    return TargetSpec((0.0, cfg.target_speed, cfg.height / 2.0, 0.0, 0.0), 0)


def make_world(cfg: WorldConfig, scheduler: Scheduler | str = Scheduler.POSER, run: int = 0,
               targets: Optional[Sequence[TargetSpec]] = None, fixed_range: Optional[float] = None,
               respawn: bool = False, record_energy: bool = False, validate: bool = True) -> World:
    if validate:
        validate_config(cfg)
    sched = Scheduler(scheduler)
    nodes = uniform_deployment(cfg, aux_stream(cfg.seed, run, 0))
    r_fixed = None
    if sched is not Scheduler.POSER:
        r_fixed = cfg.r_1 if fixed_range is None else float(fixed_range)
        for n in nodes:
            n.r_hps = r_fixed
    pos = positions_of(nodes)
    return World(
        cfg=cfg, scheduler=sched, nodes=nodes, positions=pos, nbrs=neighbor_lists(pos, cfg.r_c),
        rngs=[node_stream(cfg.seed, run, i) for i in range(len(nodes))],
        env=env_stream(cfg.seed, run),
        specs=list(targets) if targets is not None else [default_target(cfg)],
        run=run, fixed_range=r_fixed, respawn=respawn, record_energy=record_energy,
        next_track=[0] * len(nodes),
    )


def inject_gap(world: World, center, r_gap: float) -> World:
    """Nodes within ``r_gap`` of ``center`` start with no energy and stay dead."""
    if r_gap < 0:
        raise ValueError("gap radius must be non-negative")
    if r_gap == 0 or not world.nodes:
        return world
    d = np.linalg.norm(world.positions - np.asarray(center, dtype=float), axis=1)
    for i in np.flatnonzero(d <= r_gap):
        world.nodes[i].ledger.e0 = 0.0
    return world


def truth_at(cfg: WorldConfig, run: int, spec: TargetSpec, steps: int) -> np.ndarray:
    """Truth state of the first target after ``steps`` steps (same stream as the run)."""
    rng = env_stream(cfg.seed, run)
    x = np.asarray(spec.start, dtype=float)
    for _ in range(steps):
        x = propagate_target(x, cfg.dt, cfg, rng)
    return x


def _inside(cfg: WorldConfig, x: np.ndarray) -> bool:
    return 0.0 <= x[0] <= cfg.width and 0.0 <= x[2] <= cfg.height


def _advance_targets(w: World) -> None:
    cfg = w.cfg
    for tr in w.truths:
        if tr.active:
            tr.state = propagate_target(tr.state, cfg.dt, cfg, w.env)
            if not _inside(cfg, tr.state):
                tr.active = False
    if w.respawn and w.specs and not any(t.active for t in w.truths) and w.truths:
        if all(w.k - w.spawn_offset > s.birth_step for s in w.specs):
            w.spawn_offset = w.k
    for s in w.specs:
        if w.k - w.spawn_offset == s.birth_step:
            x = np.asarray(s.start, dtype=float)
            w.truths.append(Truth(w.next_truth, x.copy(), _inside(cfg, x)))
            w.next_truth += 1


def _new_track_id(w: World, i: int) -> int:
    w.next_track[i] += 1
    return i * 1_000_000 + w.next_track[i]


def _hps_sense(w: World, i: int, targets: list[np.ndarray]) -> tuple[list[TrackBroadcast], bool]:
    cfg, node, rng = w.cfg, w.nodes[i], w.rngs[i]
    live = [predict_track(t, cfg.dt, cfg) for t in node.tracks if t.status != DROPPED]
    meas = hps_measure(node.pos, node.r_hps, targets, cfg, rng, origin=i)
    if live:
        live, result, assoc = jpda_update(live, meas, node.pos, node.r_hps, cfg)
        for t, a in zip(live, assoc):
            mofn_update(t, a, cfg)
        fresh = [meas[j] for j in result.unassociated]
    else:
        fresh = list(meas)
    for m in fresh:
        t = initialize_track(m, node.pos, cfg, _new_track_id(w, i))
        mofn_update(t, True, cfg)
        live.append(t)
    node.tracks = [t for t in live if t.status != DROPPED]
    out = [TrackBroadcast(i, t.mean.copy(), t.cov.copy(), t.gain.copy(), w.k, t.id, node.r_hps)
           for t in node.tracks if t.status == CONFIRMED]
    return out, bool(node.tracks)


def _seed_track(w: World, i: int, fused: FusedEstimate) -> None:
    """Adopt a fused posterior as a confirmed local track, replacing local duplicates."""
    cfg, node = w.cfg, w.nodes[i]
    pos, pcov = fused.mean[[0, 2]], fused.cov[np.ix_([0, 2], [0, 2])]
    keep = []
    for t in node.tracks:
        d = t.position - pos
        s = t.position_cov + pcov
        try:
            close = float(d @ np.linalg.solve(s, d)) <= 9.21
        except np.linalg.LinAlgError:
            close = bool(np.allclose(d, 0))
        if not close:
            keep.append(t)
    seeded = Track(_new_track_id(w, i), fused.mean.copy(), fused.cov.copy(), status=CONFIRMED)
    seeded.hits = deque([True] * cfg.m_confirm, maxlen=cfg.n_confirm)
    node.tracks = keep + [seeded]


def _ans_select(w: World, pred_pos, pos_cov, awake: Sequence[int], energies) -> SelectionOutcome:
    cfg, r = w.cfg, w.fixed_range
    cand = candidate_set(pred_pos, pos_cov, awake, w.positions, r)
    if len(cand) == cfg.n_sel:
        sel, path = cand, Path.BASE_EXACT
    elif len(cand) > cfg.n_sel:
        sel = select_by_gdop(cand, energies, w.positions, pred_pos, pos_cov, cfg.n_sel, cfg, r_s=r)
        path = Path.BASE_EGDOP
    else:
        sel, path = cand, Path.BASE_EXACT
    return SelectionOutcome(tuple(sel), {i: r for i in sel}, path, len(cand), base_candidates=cand)


def _solve_group(w: World, group: list[TrackBroadcast], awake_mask: np.ndarray,
                 energies: np.ndarray) -> _Group:
    cfg = w.cfg
    mean, cov = t2tf_fuse(group)
    pm, pc = predict_fused(mean, cov, cfg.dt, cfg)
    fused = FusedEstimate(mean, cov, pm, pc, tuple(b.key for b in group))
    pool = set()
    for s in fused.senders:
        pool.update(int(j) for j in w.nbrs[s])
        pool.add(s)
    awake = sorted(j for j in pool if awake_mask[j])
    pred_pos, pos_cov = fused.pred_position, fused.pred_position_cov
    games = 0
    if w.scheduler is Scheduler.ANS:
        out = _ans_select(w, pred_pos, pos_cov, awake, energies)
    else:
        first = fused.members[0]

        def solver(players, pp, pcv):
            nonlocal games
            leader = select_leader(players, energies)
            game = build_game(players, w.positions, pp, pcv, cfg)
            rng = aux_stream(cfg.seed, w.run, 1, w.k, leader, first[0], first[1])
            games += 1
            return maxlogit_solve(game, cfg.maxlogit_iters, cfg.tau, rng), leader

        out = dans(pred_pos, pos_cov, awake, w.positions, energies, cfg, solve_game=solver)
    talkers = set(out.base_candidates) | set(out.ext_candidates)
    return _Group(fused, out, frozenset(talkers), games)


def run_step(w: World) -> StepLog:
    """Advance the world by one step and return its log record."""
    cfg, n = w.cfg, len(w.nodes)
    sched = w.scheduler
    collaborate = sched in (Scheduler.POSER, Scheduler.ANS)

    # (1) targets
    _advance_targets(w)
    active = [t for t in w.truths if t.active]
    tstates = [t.state for t in active]

    alive = np.array([nd.alive for nd in w.nodes], dtype=bool)
    state_k = np.array([int(nd.state) for nd in w.nodes], dtype=np.int8)
    r_k = np.array([nd.r_hps for nd in w.nodes], dtype=float)
    awake_mask = alive & (state_k != State.SLEEP)
    energies = np.array([nd.ledger.remaining_fraction for nd in w.nodes])

    # (2) sensing
    lps_hit = np.zeros(n, dtype=bool)
    live_track = np.zeros(n, dtype=bool)
    bcasts: dict[int, list[TrackBroadcast]] = {}
    for i, nd in enumerate(w.nodes):
        if not alive[i]:
            continue
        if nd.state == State.LPS:
            lps_hit[i] = sample_lps(nd.pos, tstates, cfg, w.rngs[i]).detected
            nd.symbol = "1" if lps_hit[i] else "0"
        elif nd.state == State.HPS:
            out, live_track[i] = _hps_sense(w, i, tstates)
            if out and collaborate:
                bcasts[i] = out
            nd.symbol = "1" if live_track[i] else "0"
        else:
            nd.symbol = "e"

    # (3) delivery to awake neighbors (and to the sender itself)
    inbox: dict[int, list[TrackBroadcast]] = {}
    for s in sorted(bcasts):
        for r in [s, *map(int, w.nbrs[s])]:
            if awake_mask[r]:
                inbox.setdefault(r, []).extend(bcasts[s])

    # (4) collaboration
    n_tx = np.zeros(n, dtype=int)
    for s in bcasts:
        n_tx[s] += 1
    cache: dict[tuple, _Group] = {}
    views: dict[int, list[tuple[_Group, DncView]]] = {}
    for i in sorted(inbox):
        trusted = trusted_for(inbox[i], cfg)
        if not trusted:
            continue
        vlist = []
        for group in t2ta_group(trusted, cfg.gate_prob):
            key = tuple(b.key for b in group)
            g = cache.get(key)
            if g is None:
                g = _solve_group(w, group, awake_mask, energies)
                cache[key] = g
            vlist.append((g, None))
        views[i] = vlist
    energy_tx = set().union(*(g.energy_senders for g in cache.values())) if cache else set()
    for j in energy_tx:
        n_tx[j] += 1
    n_games = 0
    for g in cache.values():
        n_games += g.games
        if g.outcome.leader is not None:
            n_tx[g.outcome.leader] += 1

    # (5) transitions
    next_state = state_k.copy()
    seeds: dict[int, list[FusedEstimate]] = {}
    for i, nd in enumerate(w.nodes):
        if not alive[i]:
            continue
        st = State(nd.state)
        row, staged = _row_for(w, i, st, lps_hit[i], live_track[i], views.get(i), seeds)
        new = step_state(row, w.rngs[i])
        if staged is not None:
            nd.r_hps = staged
        next_state[i] = int(new)
    # (6) energy for the step just sensed, then commit the new states
    for i, nd in enumerate(w.nodes):
        if not alive[i]:
            continue
        st = State(int(state_k[i]))
        tx = int(n_tx[i]) if st != State.SLEEP else 0
        nd.ledger.charge_flags(DeviceFlags.for_state(int(st), r_k[i], tx), cfg)
        new = State(int(next_state[i]))
        if new != State.HPS:
            nd.tracks = []
        elif i in seeds:
            for f in seeds[i]:
                _seed_track(w, i, f)
        nd.state = new

    # (7) log
    covered, tracked = [], []
    hps_now = np.flatnonzero(alive & (state_k == State.HPS))
    for t in active:
        p = t.state[[0, 2]]
        d = np.linalg.norm(w.positions[hps_now] - p, axis=1) if hps_now.size else np.zeros(0)
        covered.append(bool(np.any(d <= r_k[hps_now])) if hps_now.size else False)
        tracked.append(_is_tracked(w, hps_now, p))
    if collaborate:
        estimates = [(g.fused.mean, g.fused.cov) for g in cache.values()]
    else:
        estimates = [(t.mean.copy(), t.cov.copy()) for i in hps_now for t in w.nodes[i].tracks
                     if t.status == CONFIRMED]
    log = StepLog(
        k=w.k, t=w.time,
        truth_ids=tuple(t.id for t in active),
        truths=np.array(tstates).reshape(-1, 5),
        covered=tuple(covered), tracked=tuple(tracked),
        states=np.where(alive, state_k, 0).astype(np.int8),
        r_hps=r_k, hps_count=int(hps_now.size),
        selections=tuple(g.outcome.selected for g in cache.values()),
        paths=tuple(g.outcome.path.value for g in cache.values()),
        estimates=estimates, n_games=n_games,
        energy=np.array([nd.ledger.consumed_total for nd in w.nodes]) if w.record_energy else None,
    )
    w.k += 1
    return log


def _is_tracked(w: World, hps_ids: np.ndarray, p: np.ndarray) -> bool:
    for i in hps_ids:
        for t in w.nodes[i].tracks:
            if t.status != CONFIRMED:
                continue
            d = t.position - p
            try:
                if float(d @ np.linalg.solve(t.position_cov, d)) <= 9.0:
                    return True
            except np.linalg.LinAlgError:
                continue
    return False


def _row_for(w: World, i: int, st: State, lps_hit: bool, live: bool,
             groups: Optional[list], seeds: dict) -> tuple[TransitionRow, Optional[float]]:
    cfg, nd, sched = w.cfg, w.nodes[i], w.scheduler
    if sched is Scheduler.RANDOM:
        return TransitionRow(cfg.p_rand, 0.0, 1.0 - cfg.p_rand), None
    if sched is Scheduler.LPSHPS:
        if st == State.LPS:
            p = 1.0 if lps_hit else 0.0
        else:
            p = 1.0 if live else 0.0
        return TransitionRow(0.0, 1.0 - p, p), None
    if st == State.SLEEP:
        row, staged, _ = transition_row(PfsaContext(st), cfg)
        return _no_sleep(row, sched), staged
    if not groups:
        p = float(lps_hit) if st == State.LPS else float(live)
        row, staged, _ = transition_row(PfsaContext(st, False, p), cfg)
        return _no_sleep(row, sched), staged
    row, staged = _dnc_row(w, i, st, [g for g, _ in groups], seeds)
    if sched is Scheduler.ANS:
        staged = None
    return _no_sleep(row, sched), staged


def _no_sleep(row: TransitionRow, sched: Scheduler) -> TransitionRow:
    if sched is not Scheduler.ANS:
        return row
    return TransitionRow(0.0, row.p_to_sleep + row.p_to_lps, row.p_to_hps)


def _dnc_row(w: World, i: int, st: State, groups: list[_Group], seeds: dict):
    cfg, pos = w.cfg, w.nodes[i].pos
    fixed = w.fixed_range
    selecting = [g for g in groups if i in g.outcome.ranges]
    if selecting:
        r_next = max(g.outcome.ranges[i] for g in selecting)
        preds = [(g.fused.pred_position, g.fused.pred_position_cov) for g in selecting]
        p_hat = dops_probability(pos, r_next, preds, cfg.p_d)
        view = DncView(True, p_hat, 0.0, selecting[0].outcome.d_b, r_next)
        row, staged, _ = transition_row(PfsaContext(st, True, 0.0, view), cfg)
        seeds[i] = [g.fused for g in selecting if i not in g.fused.senders]
        return row, staged
    best = None
    for g in groups:
        pp, pc = g.fused.pred_position, g.fused.pred_position_cov
        dist = float(np.linalg.norm(pos - pp))
        if dist <= cfg.r_1:
            r_next = fixed or cfg.r_1
        elif g.outcome.d_b >= cfg.n_sel:
            r_next = None
        else:
            r_next = fixed or cfg.r_l
        p_hat = dops_probability(pos, r_next, [(pp, pc)], cfg.p_d) if r_next else 0.0
        view = DncView(False, p_hat, dist, g.outcome.d_b)
        row, staged, _ = transition_row(PfsaContext(st, True, 0.0, view), cfg)
        if best is None or row.p_to_sleep < best[0].p_to_sleep:
            best = (row, staged)
    return best


def run(w: World, steps: int) -> list[StepLog]:
    return [run_step(w) for _ in range(steps)]

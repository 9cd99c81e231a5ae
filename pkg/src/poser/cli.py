"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, WorldConfig, default_config, validate_config
from .experiments import (RunSpec, config_hash, egdop_comparison, gap_experiment, game_validation,
                          load_experiment, monte_carlo, write_csv, write_table)


def _load(args) -> tuple[WorldConfig, RunSpec]:
    if args.config:
        cfg, spec = load_experiment(args.config)
    else:
        cfg, spec = default_config(), RunSpec()
    changes = {}
    if args.runs is not None:
        changes["runs"] = args.runs
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "scheduler", None):
        changes["schedulers"] = (args.scheduler,)
    if changes:
        spec = RunSpec.from_dict({**spec.to_dict(), **changes})
    return cfg, spec.validate()


def _manifest(out: Path, cfg: WorldConfig, spec: RunSpec, kind: str) -> None:
    from . import __version__
    doc = {"kind": kind, "config_hash": config_hash(cfg, spec), "seed_base": spec.seed,
           "runs": spec.runs, "code_version": __version__}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    cfg, spec = _load(args)
    if args.scheduler is None:
        spec = RunSpec.from_dict({**spec.to_dict(), "schedulers": spec.schedulers[:1]})
    spec = RunSpec.from_dict({**spec.to_dict(), "densities": spec.densities[:1], "p_sleeps": spec.p_sleeps[:1],
                              "p_rands": spec.p_rands[:1], "fixed_ranges": spec.fixed_ranges[:1],
                              "n_targets": spec.n_targets[:1]})
    return _emit(cfg, spec, args)


def cmd_sweep(args) -> int:
    cfg, spec = _load(args)
    return _emit(cfg, spec, args)


def _emit(cfg, spec, args) -> int:
    table = monte_carlo(cfg, spec, parallel=args.parallel)
    for p in write_table(table, args.out):
        print(p)
    failed = sum(1 for r in table.rows if r["status"] != "ok")
    if failed:
        print(f"{failed} run(s) failed; see runs.csv", file=sys.stderr)
    return 0


def cmd_gap(args) -> int:
    cfg, spec = _load(args)
    scheds = [args.scheduler] if args.scheduler else ["poser", "ans", "lpshps", "random"]
    res = gap_experiment(cfg, runs=spec.runs, seed=spec.seed, schedulers=scheds,
                         r_gap=args.r_gap, t_gap=args.t_gap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    steps = len(res[0].p_det)
    write_csv(out / "p_det.csv", ["k", "in_gap"] + [f"p_det_{r.scheduler}" for r in res],
              ([k, int(res[0].in_window[k])] + [float(r.p_det[k]) for r in res] for k in range(steps)))
    write_csv(out / "gap_summary.csv", ["scheduler", "p_det_gap", "longest_zero_steps"],
              ([r.scheduler, r.window_mean, r.longest_zero] for r in res))
    _manifest(out, cfg, spec, "gap")
    for r in res:
        print(f"{r.scheduler}: mean P_det in gap {r.window_mean:.3f}, longest zero stretch {r.longest_zero} steps")
    return 0


def cmd_validate_game(args) -> int:
    cfg, spec = _load(args)
    rows = game_validation(cfg, players=args.players, games=args.games, seed=spec.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "game_validation.csv", ["n_players", "games", "chi_star", "phi_eff", "t_game_s", "t_opt_s"],
              ([r.n_players, r.games, r.chi_star, r.phi_eff, r.t_game_s, r.t_opt_s] for r in rows))
    _manifest(out, cfg, spec, "validate-game")
    for r in rows:
        print(f"N'={r.n_players}: chi*={r.chi_star:.4f} phi_eff={r.phi_eff:.4f} "
              f"t_game={r.t_game_s:.4f}s t_opt={r.t_opt_s:.4f}s")
    return 0


def cmd_compare_egdop(args) -> int:
    cfg, spec = _load(args)
    rows = egdop_comparison(cfg, runs=spec.runs, seed=spec.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "egdop.csv", ["bound", "e_savings_pct", "e_eff_egdop", "e_eff_gdop",
                                  "dkl_gdop_egdop", "dkl_gdop_me", "runs_used"],
              ([r.bound, r.e_savings_pct, r.e_eff_egdop, r.e_eff_gdop, r.dkl_gdop_egdop, r.dkl_gdop_me,
                r.runs_used] for r in rows))
    _manifest(out, cfg, spec, "compare-egdop")
    for r in rows:
        print(f"[{r.bound:.1f}, 1]E0: savings {r.e_savings_pct:.3f}%  E_eff {r.e_eff_egdop:.3f}/{r.e_eff_gdop:.3f}  "
              f"KL {r.dkl_gdop_egdop:.4f}/{r.dkl_gdop_me:.4f}")
    return 0


def cmd_check_config(args) -> int:
    try:
        cfg, spec = _load(args)
        validate_config(cfg)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return 2
    print(f"ok: {cfg.node_count} nodes, ranges {list(cfg.hps_ranges)}, trust tolerance {cfg.trust_tolerance:.5f} m^2")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poser", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with 'world' and 'run' sections")
    common.add_argument("--runs", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="results")
    common.add_argument("--parallel", type=int, default=1)
    common.add_argument("--scheduler", choices=["poser", "ans", "lpshps", "random"])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single scenario").set_defaults(fn=cmd_run)
    sub.add_parser("sweep", parents=[common], help="full sweep grid").set_defaults(fn=cmd_sweep)
    g = sub.add_parser("gap", parents=[common], help="coverage-gap experiment")
    g.add_argument("--r-gap", type=float, default=50.0)
    g.add_argument("--t-gap", type=float, default=50.0)
    g.set_defaults(fn=cmd_gap)
    v = sub.add_parser("validate-game", parents=[common], help="maxlogit against the exhaustive optimum")
    v.add_argument("--players", type=int, nargs="+", default=[3, 4, 5, 6, 7])
    v.add_argument("--games", type=int, default=200)
    v.set_defaults(fn=cmd_validate_game)
    sub.add_parser("compare-egdop", parents=[common], help="EGDOP vs GDOP vs max-energy").set_defaults(
        fn=cmd_compare_egdop)
    sub.add_parser("check-config", parents=[common], help="validate a configuration").set_defaults(
        fn=cmd_check_config)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"invalid: {v}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (bypassing output
capture) before asserting, so ``pytest -v`` shows the verdicts inline.
"""
import math
import time

import numpy as np
import pytest

from poser.config import WorldConfig
from poser.experiments import (RunSpec, egdop_comparison, gap_experiment, game_validation, monte_carlo,
                               potential_identity, exact_coverage_statistic, write_table)
from poser.fusion import TrackBroadcast, t2tf_fuse
from poser.network import State
from poser.pfsa import DncView, PfsaContext, transition_row
from poser.target import (Measurement, ct_jacobian, ct_transition, measure_fn, measurement_jacobian,
                          measurement_noise_cov, wrap_angle)
from poser.tracking import Track, jpda_association, jpda_update

CFG = WorldConfig()
DENSITIES = (0.6e-3, 0.8e-3, 1.0e-3, 1.2e-3, 1.4e-3)
BASELINES = ("ans", "lpshps", "random")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def density_sweep():
    spec = RunSpec(schedulers=("poser",) + BASELINES, densities=DENSITIES, runs=3, steps=200, warmup=40)
    return monte_carlo(CFG, spec)


def test_potential_identity(report):
    t0 = time.perf_counter()
    worst = potential_identity(CFG, instances=1000, seed=0)
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-12 and dt < 5.0, f"max |dU - dPhi| = {worst:.2e} over 1000 games in {dt:.2f} s")


def test_game_validation(report):
    t0 = time.perf_counter()
    rows = game_validation(CFG, players=(3, 4, 5), games=200, seed=0)
    dt = time.perf_counter() - t0
    five = next(r for r in rows if r.n_players == 5)
    ratio = five.t_opt_s / five.t_game_s
    ok = all(r.chi_star >= 0.98 and r.phi_eff >= 0.95 for r in rows) and ratio >= 10 and dt < 600
    detail = "; ".join(f"N'={r.n_players} chi*={r.chi_star:.4f} phi_eff={r.phi_eff:.4f}" for r in rows)
    report(2, ok, f"{detail}; t_opt/t_game at N'=5 = {ratio:.0f}x; {dt:.0f} s")


def test_exact_coverage_statistic(report):
    cfg = CFG.replace(hps_ranges=tuple(range(30, 61, 5)), delta_r=5.0, delta=0.035, db1=0.5, db2=0.5)
    s = exact_coverage_statistic(cfg, instances=200, seed=0)
    target = 1 - 0.035 - 0.02
    report(3, len(s) >= 200 and s.mean() >= target, f"mean exact-N_sel mass {s.mean():.4f} >= {target:.3f} (n={len(s)})")


def test_egdop_comparison(report):
    rows = egdop_comparison(CFG, runs=100, seed=0)
    sav = [r.e_savings_pct for r in rows]
    decreasing = all(b < a for a, b in zip(sav, sav[1:]))
    eff = all(r.e_eff_egdop >= r.e_eff_gdop for r in rows)
    kl = all(r.dkl_gdop_me >= 3 * r.dkl_gdop_egdop and r.dkl_gdop_egdop < r.dkl_gdop_me for r in rows)
    ok = decreasing and sav[-1] <= 0.1 and eff and kl
    detail = (f"savings % {[round(v, 3) for v in sav]}; E_eff ok={eff}; "
              f"KL egdop/me {[f'{r.dkl_gdop_egdop:.3f}/{r.dkl_gdop_me:.3f}' for r in rows]}")
    report(4, ok, detail)


def test_gap_resilience(report):
    t0 = time.perf_counter()
    res = {r.scheduler: r for r in gap_experiment(CFG, runs=50, seed=0, r_gap=50.0, t_gap=50.0)}
    dt = time.perf_counter() - t0
    pose = res["poser"].window_mean
    blind = {s: res[s].longest_zero for s in BASELINES}
    ok = pose >= 0.8 and all(v >= 1 for v in blind.values()) and dt < 900
    report(5, ok, f"POSE.R P_det in gap {pose:.3f}; baseline zero stretches (steps) {blind}; {dt:.0f} s")


def test_hps_count(report, density_sweep):
    vals = {d: density_sweep.value("hps_per_target", scheduler="poser", density=d) for d in DENSITIES if d >= 0.8e-3}
    ok = all(2.5 <= v <= 4.0 for v in vals.values())
    report(6, ok, "HPS per target " + ", ".join(f"{d:.1e}: {v:.2f}" for d, v in vals.items()))


def test_orderings(report, density_sweep):
    pm_ok, pm_txt = True, []
    for d in DENSITIES:
        mine = density_sweep.value("pm", scheduler="poser", density=d)
        others = [density_sweep.value("pm", scheduler=s, density=d) for s in BASELINES]
        pm_ok &= all(mine <= o for o in others)
        pm_txt.append(f"{d:.1e}: {mine:.3f} vs {min(others):.3f}")
    spec = RunSpec(schedulers=("poser", "lpshps", "random"), p_sleeps=(0.75,), p_rands=(0.0,),
                   n_targets=(0, 1, 2), runs=2, steps=480, warmup=0, tube=True)
    life = monte_carlo(CFG, spec)
    life_ok, life_txt = True, []
    for lam in (0, 1, 2):
        v = [life.value("lifetime_norm", scheduler=s, n_targets=lam) for s in ("poser", "lpshps", "random")]
        life_ok &= v[0] >= v[1] >= v[2]
        life_txt.append(f"lambda={lam}: " + "/".join(f"{x:.2f}" for x in v))
    report(7, pm_ok and life_ok, f"P_m {'; '.join(pm_txt)} | lifetime {'; '.join(life_txt)}")


def _fd(f, x, h=1e-6):
    cols = []
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def test_estimators(report):
    rng = np.random.default_rng(0)
    cfg = CFG.replace(mu_cl=0.0, p_d=1.0)
    node = np.zeros(2)
    ekf_err = 0.0
    for _ in range(100):
        mean = np.array([rng.uniform(10, 40), rng.normal(), rng.uniform(10, 40), rng.normal(), 0.01 * rng.normal()])
        cov = np.diag([0.05, 0.5, 0.05, 0.5, 1e-4])
        z = measure_fn(mean, node) + rng.normal(size=2) * [cfg.sigma_r, cfg.sigma_phi]
        trk = Track(0, mean.copy(), cov.copy())
        jpda_update([trk], [Measurement(z[0], z[1], 0)], node, 60.0, cfg)
        h = measurement_jacobian(mean, node)
        s = h @ cov @ h.T + measurement_noise_cov(cfg)
        k = cov @ h.T @ np.linalg.inv(s)
        nu = z - measure_fn(mean, node)
        nu[1] = wrap_angle(nu[1])
        ekf_err = max(ekf_err, np.max(np.abs(trk.mean - (mean + k @ nu))),
                      np.max(np.abs(trk.cov - (cov - k @ s @ k.T))))
    jac_err = 0.0
    for _ in range(100):
        x = np.array([rng.uniform(-100, 100), rng.uniform(-15, 15), rng.uniform(-100, 100),
                      rng.uniform(-15, 15), rng.uniform(-0.5, 0.5)])
        f_an = ct_jacobian(x, 0.5)
        f_num = _fd(lambda v: ct_transition(v, 0.5), x)
        h_an = measurement_jacobian(x, node)
        h_num = _fd(lambda v: measure_fn(v, node), x)
        jac_err = max(jac_err, np.max(np.abs(f_an - f_num)) / max(1.0, np.max(np.abs(f_an))),
                      np.max(np.abs(h_an - h_num)) / max(1.0, np.max(np.abs(h_an))))
    beta_err = 0.0
    c2 = CFG.replace(mu_cl=2.0)
    for _ in range(200):
        tracks = [Track(t, np.array([20 + rng.normal(), 0, rng.normal(), 0, 0]), np.diag([1, 1, 1, 1, 1e-4]))
                  for t in range(rng.integers(1, 4))]
        meas = [Measurement(20 + rng.normal(), 0.05 * rng.normal(), 0) for _ in range(rng.integers(0, 6))]
        res, _ = jpda_association(tracks, meas, node, 60.0, c2)
        beta_err = max([beta_err] + [abs(b.sum() - 1.0) for b in res.beta])
    fuse_ok = True
    for _ in range(1000):
        group = []
        for i in range(rng.integers(2, 6)):
            a = rng.normal(size=(5, 5)) * rng.uniform(0.1, 3)
            group.append(TrackBroadcast(i, rng.normal(size=5), a @ a.T + 1e-3 * np.eye(5)))
        _, cov = t2tf_fuse(group)
        fuse_ok &= np.trace(cov) <= min(np.trace(b.cov) for b in group) + 1e-9
    ok = ekf_err <= 1e-9 and jac_err <= 1e-6 and beta_err <= 1e-12 and fuse_ok
    report(8, ok, f"JPDA-EKF gap {ekf_err:.1e}; Jacobian rel err {jac_err:.1e}; "
                  f"beta sum err {beta_err:.1e}; fused trace bound held={fuse_ok}")


def test_determinism(report, tmp_path):
    cfg = CFG.replace(width=250.0, height=250.0)
    spec = RunSpec(schedulers=("poser", "ans", "lpshps", "random"), runs=2, steps=40, warmup=5)
    write_table(monte_carlo(cfg, spec), tmp_path / "a")
    write_table(monte_carlo(cfg, spec), tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names)
    report(9, same, f"{len(names)} output files compared byte for byte")


def test_stochastic_rows(report):
    rng = np.random.default_rng(1)
    worst, sleep_hps = 0.0, 0.0
    for _ in range(100_000):
        state = State(int(rng.integers(1, 4)))
        if rng.random() < 0.3:
            ctx = PfsaContext(state, False, float(rng.uniform(-0.2, 1.2)))
        else:
            sel = bool(rng.random() < 0.4)
            view = DncView(sel, float(rng.uniform(-0.2, 1.2)), float(rng.uniform(0, 120)), int(rng.integers(0, 8)),
                           float(rng.choice(CFG.hps_ranges)) if sel else None)
            ctx = PfsaContext(state, True, 0.0, view)
        row = transition_row(ctx, CFG)[0].as_array()
        worst = max(worst, abs(math.fsum(row) - 1.0), -min(row.min(), 0.0))
        if state == State.SLEEP:
            sleep_hps = max(sleep_hps, row[2])
    report(10, worst <= 1e-12 and sleep_hps == 0.0,
           f"max row error {worst:.1e} over 1e5 contexts; max Sleep->HPS {sleep_hps}")

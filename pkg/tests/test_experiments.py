import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from poser.config import ConfigError, WorldConfig
from poser.experiments import (Accumulator, CELL_KEYS, METRICS, RunSpec, aggregate, cells, config_hash,
                               gaussian_kl, load_experiment, merge_aggregates, monte_carlo, read_runs,
                               run_one, write_table)

SMALL = WorldConfig(width=200.0, height=200.0, density=3e-3)
QUICK = RunSpec(schedulers=("poser", "lpshps"), densities=(3e-3,), runs=2, steps=20, warmup=5)


@pytest.fixture(scope="module")
def table():
    return monte_carlo(SMALL, QUICK)


def test_rows_and_summary(table):
    assert len(table.rows) == 4
    assert all(r["status"] == "ok" for r in table.rows)
    assert table.value("pm", scheduler="poser") == pytest.approx(np.mean(
        [r["pm"] for r in table.rows if r["scheduler"] == "poser"]))


def test_csv_round_trip(table, tmp_path):
    write_table(table, tmp_path)
    back = read_runs(tmp_path / "runs.csv")
    for a, b in zip(table.rows, back):
        for k, v in a.items():
            if isinstance(v, float) and math.isnan(v):
                assert math.isnan(b[k])
            else:
                assert b[k] == v


def test_reruns_are_byte_identical(table, tmp_path):
    write_table(table, tmp_path / "a")
    write_table(monte_carlo(SMALL, QUICK), tmp_path / "b")
    for name in ("runs.csv", "pm.csv", "rmse_pos_m.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest(table, tmp_path):
    write_table(table, tmp_path)
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert doc["config_hash"] == config_hash(SMALL, QUICK)
    assert doc["runs"] == 2 and doc["failed_runs"] == 0


def test_failed_run_becomes_a_row():
    bad = SMALL.replace(r_c=10.0)
    cell = cells(QUICK, SMALL)[0]
    row = run_one(bad, cell, QUICK, 0)
    assert row["status"] == "failed" and "ConfigError" in row["error"]
    assert all(math.isnan(row[m]) for m in METRICS)
    summary = aggregate([row])
    acc = next(iter(summary.values()))
    assert acc["failed"].value == 1.0 and acc["pm"].n == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.integers(1, 7))
def test_chunked_aggregation_matches(values, chunks):
    rows = [{**{k: None for k in CELL_KEYS}, "scheduler": "poser", "status": "ok",
             **{m: v for m in METRICS}} for v in values]
    whole = aggregate(rows)
    parts = [aggregate(rows[i::chunks]) for i in range(chunks)]
    merged = merge_aggregates([p for p in parts if p])
    (key,) = whole
    for m in METRICS:
        a, b = whole[key][m], merged[key][m]
        assert a.n == b.n
        assert a.mean == pytest.approx(b.mean, abs=1e-12 * max(1.0, abs(a.mean)))
        assert a.m2 == pytest.approx(b.m2, rel=1e-9, abs=1e-9)


def test_accumulator_matches_numpy():
    x = np.random.default_rng(0).normal(size=500)
    acc = Accumulator()
    for v in x:
        acc = acc.add(v)
    assert acc.value == pytest.approx(x.mean(), abs=1e-12)
    assert acc.sem == pytest.approx(x.std(ddof=1) / math.sqrt(len(x)), rel=1e-10)
    assert math.isnan(Accumulator().value) and math.isnan(Accumulator(1, 2.0, 0.0).sem)


def test_cells_leave_ignored_parameters_empty(cfg):
    spec = RunSpec(schedulers=("poser", "random", "ans"), p_sleeps=(0.5, 0.75), p_rands=(0.0, 1.0),
                   fixed_ranges=(None, 60.0))
    got = cells(spec, cfg)
    assert sum(c.scheduler == "poser" for c in got) == 2
    assert sum(c.scheduler == "random" for c in got) == 4
    assert all(c.p_rand is None for c in got if c.scheduler != "random")
    assert {c.fixed_range_m for c in got if c.scheduler == "ans"} == {30.0, 60.0}


def test_normalized_lifetime_reference_is_one():
    spec = RunSpec(schedulers=("poser", "lpshps"), p_sleeps=(0.75,), n_targets=(0, 1), runs=2, steps=20,
                   warmup=0, tube=True, tube_length=120.0)
    t = monte_carlo(SMALL, spec)
    assert t.value("lifetime_norm", scheduler="poser", n_targets=0) == 1.0
    assert t.value("lifetime_norm", scheduler="lpshps", n_targets=0) > 0


def test_spec_validation_and_loading(tmp_path):
    with pytest.raises(ConfigError):
        RunSpec(schedulers=("bogus",)).validate()
    with pytest.raises(ConfigError):
        RunSpec.from_dict({"nope": 1})
    p = tmp_path / "e.json"
    p.write_text(json.dumps({"world": {"p_sleep": 0.75}, "run": {"runs": 3}}))
    c, s = load_experiment(p)
    assert c.p_sleep == 0.75 and s.runs == 3
    p.write_text(json.dumps({"wrold": {}}))
    with pytest.raises(ConfigError):
        load_experiment(p)


def test_kl_closed_form():
    a = np.diag([1.0, 2.0])
    assert gaussian_kl(a, a) == pytest.approx(0.0, abs=1e-15)
    b = np.diag([2.0, 2.0])
    assert gaussian_kl(a, b) == pytest.approx(0.5 * (0.5 + 1.0 - 2 + math.log(4 / 2)))


def test_plot_script_lists_every_metric(table, tmp_path):
    write_table(table, tmp_path)
    text = (tmp_path / "plot.gp").read_text()
    for m in METRICS:
        assert f"'{m}.csv'" in text

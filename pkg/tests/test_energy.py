import numpy as np
import pytest
from hypothesis import given, strategies as st

from poser.energy import (DeviceFlags, EnergyLedger, device_energy, lifetime_from_rates,
                          network_lifetime, step_energy, tube_membership)


def test_hps_step_example(cfg):
    # 0.2*30 + DPU 1 + RX 0.63 + clock 0.01 + one TX 1.26, over 0.5 s
    flags = DeviceFlags.for_state(3, hps_range=30.0, n_tx=1)
    assert step_energy(flags, cfg) == pytest.approx(4.45, abs=1e-12)


def test_sleep_step_example(cfg):
    assert step_energy(DeviceFlags.for_state(1), cfg) == pytest.approx(0.505, abs=1e-12)


def test_lps_step(cfg):
    got = step_energy(DeviceFlags.for_state(2, n_tx=0), cfg)
    assert got == pytest.approx((0.115 + 1.0 + 0.63 + 0.01) * 0.5, abs=1e-12)


def test_all_off_is_free(cfg):
    assert step_energy(DeviceFlags(), cfg) == 0.0


def test_bad_inputs(cfg):
    with pytest.raises(ValueError):
        DeviceFlags.for_state(4)
    with pytest.raises(ValueError):
        device_energy(DeviceFlags(tx=True, n_tx=-1), cfg)
    with pytest.raises(ValueError):
        device_energy(DeviceFlags(), cfg, dt=0)


@given(st.floats(30, 60), st.integers(0, 5))
def test_state_ordering(r, n_tx):
    from poser.config import WorldConfig
    cfg = WorldConfig()
    s = step_energy(DeviceFlags.for_state(1), cfg)
    lps = step_energy(DeviceFlags.for_state(2, n_tx=n_tx), cfg)
    hps = step_energy(DeviceFlags.for_state(3, r, n_tx), cfg)
    assert s < lps < hps


@given(st.integers(0, 5), st.integers(0, 5))
def test_tx_linear(a, b):
    from poser.config import WorldConfig
    cfg = WorldConfig()
    e = lambda n: step_energy(DeviceFlags.for_state(3, 42.0, n), cfg)
    assert e(a) - e(b) == pytest.approx((a - b) * cfg.e_tx * cfg.dt, abs=1e-9)


def test_ledger_depletion(cfg):
    led = EnergyLedger(e0=1.0)
    flags = DeviceFlags.for_state(1)
    assert led.charge_flags(flags, cfg) == pytest.approx(0.505)
    led.charge_flags(flags, cfg)
    assert led.dead and led.remaining == 0.0 and led.remaining_fraction == 0.0
    assert led.charge_flags(flags, cfg) == 0.0
    with pytest.raises(ValueError):
        led.charge(-1.0)


def test_lifetime_constant_power():
    # 1 W, 100 J, half drained at 50 s
    t = np.arange(0, 201, 1.0)
    consumed = t[:, None] * np.ones((1, 3))
    e0 = np.full(3, 100.0)
    assert network_lifetime(t, consumed, e0, [0, 1, 2], eta=0.5) == pytest.approx(50.0)
    assert network_lifetime(t, consumed, e0, [0, 1, 2], eta=1.0) == pytest.approx(100.0)
    assert network_lifetime(t[:20], consumed[:20], e0, [0], eta=1.0) == float("inf")


def test_lifetime_interpolates():
    t = np.array([0.0, 10.0])
    consumed = np.array([[0.0], [10.0]])
    assert network_lifetime(t, consumed, np.array([10.0]), [0], eta=0.25) == pytest.approx(2.5)


def test_lifetime_from_rates_slowest_node():
    e0 = np.array([100.0, 100.0, 100.0])
    assert lifetime_from_rates({0: 1.0, 1: 2.0, 2: 4.0}, e0, [1, 2]) == pytest.approx(50.0)
    assert lifetime_from_rates(np.array([1.0, 0.0, 1.0]), e0, [0, 1]) == float("inf")
    with pytest.raises(ValueError):
        lifetime_from_rates(np.ones(3), e0, [])


def test_tube_membership_boundary():
    pos = np.array([[5.0, 30.0], [5.0, 30.0001], [-30.0, 0.0], [40.0, -30.0]])
    line = np.array([[0.0, 0.0], [10.0, 0.0]])
    assert tube_membership(pos, line, 30.0) == {0, 2}
    bent = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, -30.0]])
    assert tube_membership(pos, bent, 30.0) == {0, 2, 3}
    with pytest.raises(ValueError):
        tube_membership(pos, np.array([[0.0, 0.0], [0.0, 0.0]]), 1.0)


def test_ledger_examples():
    led = EnergyLedger(137592.0)
    led.charge(0.0)
    assert led.remaining == 137592.0
    led.charge(137592.0)
    assert led.remaining == 0.0 and led.dead
    led.charge(5.0)
    assert led.remaining == 0.0


def test_tube_membership_examples():
    line = np.array([[0.0, 0.0], [600.0, 0.0]])
    assert tube_membership(np.array([[10.0, 30.0], [10.0, 30.1]]), line, 30.0) == {0}


def test_full_energy_never_reaches_lifetime():
    t = np.arange(5.0)
    assert network_lifetime(t, np.zeros((5, 2)), np.full(2, 10.0), [0, 1]) == float("inf")


def test_full_depletion_is_slowest_node():
    t = np.arange(0, 11, 1.0)
    consumed = np.column_stack([t * 2.0, t * 1.0])
    assert network_lifetime(t, consumed, np.full(2, 10.0), [0, 1], eta=1.0) == pytest.approx(10.0)

from __future__ import annotations

import numpy as np
import pytest

from ponqkd import dps
from ponqkd.detector import SpadParams
from ponqkd.montecarlo import monte_carlo_run, wilson_interval


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(30, 1000)
    assert lo < 0.03 < hi
    assert wilson_interval(0, 100)[0] == 0.0
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_signal_only_qber_is_intrinsic_error():
    link = dps.DpsLinkParams(receiver_insertion_loss_db=0.0)
    spad = SpadParams(efficiency=1.0, dark_rate=0.0, dead_time=0.0)
    mc = monte_carlo_run(link, 0.0, 0.0, spad, 2_000_000, seed=1)
    lo, hi = mc.qber_interval
    assert lo <= link.error <= hi
    assert mc.n_registered > 10_000


def test_same_seed_is_bit_identical(link, spad):
    a = monte_carlo_run(link, 12.0, 1e4, spad, 3_000_000, seed=42, block_pulses=500_000)
    b = monte_carlo_run(link, 12.0, 1e4, spad, 3_000_000, seed=42, block_pulses=500_000)
    assert a == b
    c = monte_carlo_run(link, 12.0, 1e4, spad, 3_000_000, seed=43, block_pulses=500_000)
    assert c != a


@pytest.mark.parametrize("n", [0, -5])
def test_nonpositive_pulse_count(link, spad, n):
    with pytest.raises(dps.DomainError):
        monte_carlo_run(link, 12.0, 0.0, spad, n, seed=0)


def test_random_draws_agree_with_analytic(cal):
    rng = np.random.default_rng(2024)
    for k in range(20):
        link = cal.link(mu=float(rng.uniform(0.05, 0.3)))
        spad = cal.spad(dead_time=float(rng.uniform(0.0, 1e-4)), window_accept=float(rng.uniform(0.1, 1.0)))
        budget, noise = float(rng.uniform(4.0, 22.0)), float(rng.uniform(0.0, 5e4))
        raw, qber = dps.raw_rate_and_qber(link, budget, noise, spad)
        mc = monte_carlo_run(link, budget, noise, spad, 10_000_000, seed=k)
        assert mc.raw_interval[0] <= raw <= mc.raw_interval[1], (k, raw, mc)
        assert mc.qber_interval[0] <= qber <= mc.qber_interval[1], (k, qber, mc)

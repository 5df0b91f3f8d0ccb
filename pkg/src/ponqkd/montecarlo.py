"""Pulse-level Monte Carlo of the DPS receiver, used to cross-check the analytic model.

Each slot carries a random phase-difference bit. The monitored interferometer
port receives mean photon number 2*pf*mu*T*(1 - e) when the bit matches the
port and 2*pf*mu*T*e otherwise, so the slot average is pf*mu*T as in the
analytic model. Noise and dark counts arrive as a Poisson process thinned by
the window acceptance and are wrong half of the time. Events are merged in
time order and pass a non-paralyzable dead-time filter whose state carries
across blocks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import SpadParams, apply_dead_time
from .dps import DomainError, DpsLinkParams, signal_photon_rate

BLOCK_PULSES = 1_000_000


@dataclass(frozen=True)
class MonteCarloResult:
    raw_rate: float
    qber: float
    raw_interval: tuple[float, float]
    qber_interval: tuple[float, float]
    n_pulses: int
    n_registered: int
    n_errors: int


def wilson_interval(successes: int, trials: int, z: float = 3.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _block_events(rng: np.random.Generator, n: int, t0: float, slot: float, m_match: float,
                  m_mismatch: float, noise_rate: float, efficiency: float):
    """Event times and error flags of one block, in time order."""
    bits = rng.random(n) < 0.5
    mean = np.where(bits, m_match, m_mismatch)
    clicks = rng.random(n) < -np.expm1(-efficiency * mean)
    sig_idx = np.flatnonzero(clicks)
    sig_t = t0 + sig_idx * slot
    sig_err = ~bits[sig_idx]

    n_noise = rng.poisson(noise_rate * n * slot)
    noise_t = t0 + np.sort(rng.random(n_noise)) * n * slot
    noise_idx = np.minimum(((noise_t - t0) / slot).astype(np.int64), n - 1)
    noise_err = ~bits[noise_idx]

    times = np.concatenate([sig_t, noise_t])
    errors = np.concatenate([sig_err, noise_err])
    order = np.argsort(times, kind="stable")
    return times[order], errors[order]


def monte_carlo_run(link: DpsLinkParams, budget_db: float, noise_rate: float, spad: SpadParams,
                    n_pulses: int, seed: int, z: float = 3.0, block_pulses: int = BLOCK_PULSES) -> MonteCarloResult:
    """Estimate raw rate and QBER by simulating ``n_pulses`` slots.

    ``noise_rate`` is the Raman photon rate incident on the SPAD, as in the
    analytic model. Blocks use seeds spawned from ``seed``, so a run is a
    deterministic function of its arguments.
    """
    if n_pulses <= 0:
        raise DomainError("n_pulses must be positive")
    if budget_db < 0 or noise_rate < 0:
        raise DomainError("budget and noise rate must be >= 0")
    slot = 1.0 / link.symbol_rate
    mean_slot = signal_photon_rate(link, budget_db) / link.symbol_rate
    m_match = 2.0 * mean_slot * (1.0 - link.error)
    m_mismatch = 2.0 * mean_slot * link.error
    gated_noise = (noise_rate * spad.efficiency + spad.dark_rate) * spad.window_accept

    n_blocks = -(-n_pulses // block_pulses)
    seeds = np.random.SeedSequence(seed).spawn(n_blocks)
    ready = -math.inf
    registered = errors = 0
    for b, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        n = min(block_pulses, n_pulses - b * block_pulses)
        t0 = b * block_pulses * slot
        times, err = _block_events(rng, n, t0, slot, m_match, m_mismatch, gated_noise, spad.efficiency)
        # events still inside the previous block's last dead window are lost
        live = times >= ready
        times, err = times[live], err[live]
        keep = apply_dead_time(times, spad.dead_time)
        times, err = times[keep], err[keep]
        if spad.afterpulse_frac and len(err):
            ap = rng.random(len(err)) < spad.afterpulse_frac
            err = np.where(ap, rng.random(len(err)) < 0.5, err)
        if len(times):
            ready = times[-1] + spad.dead_time
        registered += len(times)
        errors += int(err.sum())

    duration = n_pulses * slot
    raw = registered / duration
    lo, hi = wilson_interval(registered, n_pulses, z)
    qber = errors / registered if registered else 0.0
    q_lo, q_hi = wilson_interval(errors, registered, z) if registered else (0.0, 1.0)
    return MonteCarloResult(raw, qber, (lo / slot, hi / slot), (q_lo, q_hi), n_pulses, registered, errors)

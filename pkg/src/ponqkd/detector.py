"""Free-running SPAD: efficiency, dark counts, time-window acceptance, dead time."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import constants

from .spectral import check_wavelength

HC_J_NM = constants.h * constants.c * 1e9  # photon energy times wavelength, J*nm


@dataclass(frozen=True)
class SpadParams:
    efficiency: float = 0.10
    dark_rate: float = 500.0
    dead_time: float = 0.0
    window_accept: float = 1.0
    afterpulse_frac: float = 0.0

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must be in (0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0:
            raise ValueError("dark rate and dead time must be >= 0")
        if not 0 < self.window_accept <= 1:
            raise ValueError("window acceptance must be in (0, 1]")
        if not 0 <= self.afterpulse_frac < 1:
            raise ValueError("afterpulse fraction must be in [0, 1)")

    @property
    def gated_dark_rate(self) -> float:
        return self.dark_rate * self.window_accept


@dataclass(frozen=True)
class CountReport:
    signal: float
    noise: float
    total_registered: float

    @property
    def noise_fraction(self) -> float:
        return self.noise / self.total_registered if self.total_registered > 0 else 0.0


def optical_power_to_photon_rate(power_w, wavelength_nm):
    """Photons per second carried by ``power_w`` at ``wavelength_nm``."""
    check_wavelength(wavelength_nm)
    if np.any(np.asarray(power_w) < 0):
        raise ValueError("optical power must be >= 0")
    rate = np.asarray(power_w, dtype=float) * np.asarray(wavelength_nm, dtype=float) / HC_J_NM
    return rate if np.ndim(rate) else float(rate)


def saturate(rate, dead_time: float):
    """Non-paralyzable dead-time law r / (1 + r*tau)."""
    return rate / (1.0 + rate * dead_time)


def register_counts(incident_signal: float, incident_noise: float, p: SpadParams) -> CountReport:
    """Registered signal and noise counts (per second) of the SPAD.

    Noise photons and dark counts are thinned by the time-window acceptance;
    signal pulses sit inside the window. Saturation scales both shares
    alike. Afterpulses move a fraction of the registered counts into the
    noise share without changing the total.
    """
    if incident_signal < 0 or incident_noise < 0:
        raise ValueError("incident rates must be >= 0")
    sig = incident_signal * p.efficiency
    noise = (incident_noise * p.efficiency + p.dark_rate) * p.window_accept
    raw = sig + noise
    if raw == 0:
        return CountReport(0.0, 0.0, 0.0)
    total = saturate(raw, p.dead_time)
    keep = total / raw
    sig, noise = sig * keep, noise * keep
    if p.afterpulse_frac:
        ap = p.afterpulse_frac * total
        sig, noise = sig * (1 - p.afterpulse_frac), noise * (1 - p.afterpulse_frac) + ap
    return CountReport(sig, noise, total)


def apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Boolean mask of events a non-paralyzable detector registers.

    ``times`` must be sorted. Events inside the dead time of the last
    registered event are lost and do not extend it.
    """
    keep = np.zeros(len(times), dtype=bool)
    if dead_time <= 0:
        keep[:] = True
        return keep
    ready = -np.inf
    # jump straight to the next event after each dead window
    i = 0
    n = len(times)
    while i < n:
        if times[i] >= ready:
            keep[i] = True
            ready = times[i] + dead_time
            i = int(np.searchsorted(times, ready, side="left"))
        else:
            i += 1
    return keep

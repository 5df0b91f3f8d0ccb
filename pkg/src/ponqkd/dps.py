"""DPS-QKD link performance: raw key rate, QBER and secure key rate.

The receiver is a one-bit delay interferometer followed by a single
free-running SPAD on one output port. Each registered click yields a raw key
bit; noise clicks are wrong half of the time, signal clicks with the
interferometer's intrinsic error probability.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import odn
from .detector import HC_J_NM, SpadParams, register_counts
from .raman import RamanProfile
from .spectral import BANDS, ChannelPlan, ConfigurationError, FilterSpec, band_of, integrate_inband

TRANSMITTERS = ("dml", "linbo3")


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class DpsLinkParams:
    symbol_rate: float = 1e9
    mu: float = 0.1
    intrinsic_error: float = 0.0182
    receiver_insertion_loss_db: float = 0.0
    port_fraction: float = 0.5
    ec_efficiency: float = 1.16
    waveband_loss_db: float = 1.4
    transmitter: str = "dml"
    dml_penalty: float = 0.001

    def __post_init__(self):
        if not 0 < self.mu < 1:
            raise ValueError("mu must be in (0, 1)")
        if not 0 <= self.intrinsic_error < 0.5:
            raise ValueError("intrinsic error must be in [0, 0.5)")
        if not 0 < self.port_fraction <= 1:
            raise ValueError("port fraction must be in (0, 1]")
        if self.ec_efficiency < 1:
            raise ValueError("error-correction efficiency must be >= 1")
        if self.symbol_rate <= 0 or self.receiver_insertion_loss_db < 0 or self.waveband_loss_db < 0:
            raise ValueError("symbol rate must be positive and losses >= 0")
        if self.transmitter not in TRANSMITTERS:
            raise ValueError(f"transmitter must be one of {TRANSMITTERS}")

    @property
    def error(self) -> float:
        """Intrinsic error of the signal clicks.

        The default intrinsic error was measured with the chirp-modulated
        laser; an ideal LiNbO3 phase modulator removes the DML penalty.
        """
        if self.transmitter == "dml":
            return self.intrinsic_error
        return max(self.intrinsic_error - self.dml_penalty, 0.0)

    @property
    def receiver_transmission(self) -> float:
        return 10.0 ** (-self.receiver_insertion_loss_db / 10.0) * self.port_fraction


@dataclass(frozen=True)
class LinkReport:
    raw_rate: float
    qber: float
    raman_counts: float
    secure_fraction: float
    secure_rate: float
    secure_bits_per_pulse: float
    budget_db: float = float("nan")
    signal_counts: float = 0.0
    noise_counts: float = 0.0
    breakdown: dict = field(default_factory=dict, compare=False)


def signal_photon_rate(link: DpsLinkParams, budget_db: float) -> float:
    """Signal photons per second reaching the monitored SPAD."""
    return (link.symbol_rate * link.mu * 10.0 ** (-(budget_db + link.receiver_insertion_loss_db) / 10.0)
            * link.port_fraction)


def _qber(link: DpsLinkParams, counts) -> float:
    if counts.total_registered == 0:
        return 0.0
    return (0.5 * counts.noise + link.error * counts.signal) / counts.total_registered


def _counts(link: DpsLinkParams, budget_db: float, noise_rate: float, spad: SpadParams):
    if budget_db < 0:
        raise DomainError("loss budget must be >= 0 dB")
    sig = 0.0 if math.isinf(budget_db) else signal_photon_rate(link, budget_db)
    return register_counts(sig, noise_rate, spad)


def raw_rate_and_qber(link: DpsLinkParams, budget_db: float, noise_rate: float, spad: SpadParams):
    """Raw key rate (bits/s) and QBER for a loss budget and a noise photon rate.

    ``noise_rate`` is the Raman photon rate incident on the SPAD. An infinite
    budget leaves only noise and dark counts (QBER 0.5).
    """
    counts = _counts(link, budget_db, noise_rate, spad)
    return counts.total_registered, _qber(link, counts)


def binary_entropy(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    h = np.where((p <= 0) | (p >= 1), 0.0, h)
    return h if np.ndim(h) else float(h)


# the collision-probability expression turns back up above this error rate and
# diverges near e = 0.37; it is held at its minimum beyond it
SHRINK_TURNING_POINT = 6.0 / 38.0


def collision_shrink(e):
    """Privacy-amplification shrink factor against individual attacks on DPS."""
    e = np.minimum(np.asarray(e, dtype=float), SHRINK_TURNING_POINT)
    out = -np.log2(1 - e ** 2 - (1 - 6 * e) ** 2 / 2)
    return out if np.ndim(out) else float(out)


def secure_key_fraction(qber, mu: float, f: float = 1.16):
    """Secure bits per sifted bit; negative when no key can be distilled.

    (1 - 2 mu) * tau(e) - f * h2(e), the individual-attack bound for DPS.
    """
    e = np.asarray(qber, dtype=float)
    if np.any(e < 0) or np.any(e >= 0.5) or np.any(~np.isfinite(e)):
        raise DomainError(f"QBER must be in [0, 0.5), got {qber}")
    s = (1 - 2 * mu) * collision_shrink(e) - f * binary_entropy(e)
    return s if np.ndim(s) else float(s)


def _report(link: DpsLinkParams, counts, raman_counts: float, budget_db: float,
            breakdown: dict | None = None) -> LinkReport:
    raw, qber = counts.total_registered, _qber(link, counts)
    s = secure_key_fraction(qber, link.mu, link.ec_efficiency) if qber < 0.5 else -math.inf
    secure = max(0.0, s) * raw
    return LinkReport(
        raw_rate=raw,
        qber=qber,
        raman_counts=raman_counts,
        secure_fraction=s,
        secure_rate=secure,
        secure_bits_per_pulse=secure / link.symbol_rate,
        budget_db=budget_db,
        signal_counts=counts.signal,
        noise_counts=counts.noise,
        breakdown=breakdown or {},
    )


def evaluate_back_to_back(link: DpsLinkParams, budget_db: float, spad: SpadParams,
                          noise_rate: float = 0.0) -> LinkReport:
    """Link at an explicit loss budget; ``noise_rate`` is the Raman photon rate at the SPAD."""
    counts = _counts(link, budget_db, noise_rate, spad)
    return _report(link, counts, noise_rate * spad.efficiency, budget_db)


def receive_window(filt: FilterSpec) -> tuple[float, float]:
    """Wavelength span passed by the waveband demultiplexers ahead of ``filt``."""
    name = band_of(filt.center_nm)
    if name is None:
        raise ConfigurationError(f"filter center {filt.center_nm} nm lies outside the O-L bands")
    band = BANDS[name]
    return band.low_nm, band.high_nm


def raman_photon_rate(topology: odn.PonTopology, plan: ChannelPlan, filt: FilterSpec,
                      profile: RamanProfile, window: tuple[float, float] | None = None) -> float:
    """Raman photons per second leaving the narrowband filter."""
    if not plan.channels:
        return 0.0

    model = odn.RamanNoiseModel(topology, plan.channels, profile)

    def photon_density(wl):
        return model(wl) * wl / HC_J_NM

    photon_density.breakpoints = model.breakpoints
    return integrate_inband(photon_density, filt, window or receive_window(filt))


def link_budget_db(link: DpsLinkParams, topology: odn.PonTopology, filt: FilterSpec, quantum_nm: float) -> float:
    return float(odn.path_loss(topology, "onu_to_co", quantum_nm)) + link.waveband_loss_db + filt.insertion_loss_db


def check_receiver(plan: ChannelPlan, filt: FilterSpec) -> None:
    tolerance = filt.bandwidth_nm / 2.0
    if abs(filt.center_nm - plan.quantum_wavelength_nm) > tolerance:
        raise ConfigurationError(
            f"filter {filt.name} at {filt.center_nm} nm does not pass the quantum channel "
            f"at {plan.quantum_wavelength_nm} nm"
        )
    for ch in plan.channels:
        if abs(ch.wavelength_nm - plan.quantum_wavelength_nm) < filt.bandwidth_nm:
            raise ConfigurationError(
                f"classical channel {ch.name} at {ch.wavelength_nm} nm is within one filter "
                f"bandwidth of the quantum channel"
            )


def raman_rate_at_spad(link: DpsLinkParams, topology: odn.PonTopology, plan: ChannelPlan, filt: FilterSpec,
                       profile: RamanProfile, window: tuple[float, float] | None = None) -> float:
    """Raman photons per second reaching the SPAD through the full receiver chain."""
    # noise sees the same receiver chain as the signal after the narrowband filter
    noise = raman_photon_rate(topology, plan, filt, profile, window)
    return noise * 10.0 ** (-link.waveband_loss_db / 10.0) * link.receiver_transmission


def evaluate_link(link: DpsLinkParams, topology: odn.PonTopology, plan: ChannelPlan, filt: FilterSpec,
                  spad: SpadParams, profile: RamanProfile, window: tuple[float, float] | None = None) -> LinkReport:
    """Full lit-PON evaluation: Raman budget, filtering, detection and key rates."""
    check_receiver(plan, filt)
    budget = link_budget_db(link, topology, filt, plan.quantum_wavelength_nm)
    noise = raman_rate_at_spad(link, topology, plan, filt, profile, window)
    counts = _counts(link, budget, noise, spad)
    breakdown = {
        "dark_gated": spad.gated_dark_rate,
        "raman_gated": noise * spad.efficiency * spad.window_accept,
    }
    return _report(link, counts, noise * spad.efficiency, budget, breakdown)

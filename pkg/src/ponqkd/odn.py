"""Optical distribution network: loss along PON paths and Raman noise aggregation.

The ODN has separate downstream and upstream feeders joined at a 2:N tree
splitter, and N drop fibers. The quantum channel runs upstream from an ONU
through its drop and the upstream feeder to the receiver at the CO, where it
is multiplexed after the CO-side 1:M stage so it bypasses that split.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .raman import (
    FiberSpan,
    RamanProfile,
    backward_raman_power,
    forward_raman_power,
    raman_efficiency,
)
from .spectral import C_NM_THZ, ChannelPlan, ClassicalChannel, check_wavelength

PATHS = ("onu_to_co", "co_to_onu")


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class PonTopology:
    feeder_ds: FiberSpan = field(default_factory=lambda: FiberSpan(15.2))
    feeder_us: FiberSpan = field(default_factory=lambda: FiberSpan(13.2))
    drop: FiberSpan = field(default_factory=lambda: FiberSpan(0.256))
    split_m: int = 2
    split_n: int = 16
    n_onus_active: int = 16
    splitter_excess_db: float = 0.0
    directivity_db: float = 55.0
    quantum_direction: str = "upstream"

    def __post_init__(self):
        if self.split_m < 1 or self.split_n < 1:
            raise ValueError("split ratios must be >= 1")
        if not 1 <= self.n_onus_active <= self.split_n:
            raise ValueError("n_onus_active must be in [1, split_n]")
        if self.splitter_excess_db < 0 or self.directivity_db < 0:
            raise ValueError("splitter excess loss and directivity must be >= 0 dB")
        if self.quantum_direction != "upstream":
            raise ValueError("only upstream quantum channels are modeled")

    @property
    def split_loss_db(self) -> float:
        """Loss of one pass through the tree splitter."""
        return 10.0 * math.log10(self.split_n) + self.splitter_excess_db

    @property
    def reach_km(self) -> float:
        return self.feeder_us.length_km + self.drop.length_km

    def with_reach(self, reach_km: float) -> "PonTopology":
        """Same ODN with the upstream reach (feeder + drop) set to ``reach_km``.

        The downstream feeder keeps its length ratio to the upstream one.
        """
        feeder = max(reach_km - self.drop.length_km, 0.0)
        drop = self.drop if reach_km >= self.drop.length_km else self.drop.with_length(reach_km)
        ratio = self.feeder_ds.length_km / self.feeder_us.length_km if self.feeder_us.length_km else 1.0
        return replace(self, feeder_us=self.feeder_us.with_length(feeder),
                       feeder_ds=self.feeder_ds.with_length(feeder * ratio), drop=drop)

    def with_split(self, split_n: int) -> "PonTopology":
        return replace(self, split_n=split_n, n_onus_active=min(self.n_onus_active, split_n))


def path_loss(t: PonTopology, path: str, wavelength_nm, include_first_stage: bool = False):
    """Passive loss in dB between an ONU and the CO at ``wavelength_nm``.

    The CO-side 1:M split is excluded unless ``include_first_stage``; the
    quantum channel is multiplexed behind it.
    """
    check_wavelength(wavelength_nm)
    if path not in PATHS:
        raise ValueError(f"path must be one of {PATHS}")
    feeder = t.feeder_us if path == "onu_to_co" else t.feeder_ds
    loss = feeder.loss_db(wavelength_nm) + t.drop.loss_db(wavelength_nm) + t.split_loss_db
    if include_first_stage:
        loss = loss + 10.0 * math.log10(t.split_m)
    return loss


def fold_tdma_upstream(channels: Iterable[ClassicalChannel], n_onus_active: int = 1) -> list[ClassicalChannel]:
    """Collapse TDMA bursts into one continuous source per wavelength.

    Bursts on a wavelength are time-shared, so the equivalent source keeps the
    per-ONU launch power rather than summing it. Input order is preserved.
    """
    if n_onus_active < 1:
        raise ValueError("n_onus_active must be >= 1")
    folded: OrderedDict[float, ClassicalChannel] = OrderedDict()
    for ch in channels:
        if ch.mode != "tdma" or ch.direction != "upstream":
            raise ContractError(f"channel {ch.name or ch.wavelength_nm} is not an upstream TDMA channel")
        if ch.wavelength_nm in folded:
            prev = folded[ch.wavelength_nm]
            if prev.power_dbm != ch.power_dbm:
                raise ContractError(f"bursts at {ch.wavelength_nm} nm disagree on launch power")
            continue
        folded[ch.wavelength_nm] = replace(ch, mode="continuous")
    return list(folded.values())


@dataclass(frozen=True)
class NoiseTerm:
    source: str
    path: str
    direction: str
    density_w_per_nm: float


@dataclass(frozen=True)
class NoiseBudget:
    per_source: tuple[NoiseTerm, ...] = ()

    @property
    def total_density(self) -> float:
        return math.fsum(term.density_w_per_nm for term in self.per_source)

    def by_source(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for term in self.per_source:
            out[term.source] = out.get(term.source, 0.0) + term.density_w_per_nm
        return out


def _db(x):
    return 10.0 ** (-np.asarray(x, dtype=float) / 10.0)


def effective_sources(plan_or_channels: ChannelPlan | Sequence[ClassicalChannel], n_onus_active: int = 1):
    channels = plan_or_channels.channels if isinstance(plan_or_channels, ChannelPlan) else list(plan_or_channels)
    tdma = [ch for ch in channels if ch.mode == "tdma"]
    others = [ch for ch in channels if ch.mode != "tdma"]
    return others + fold_tdma_upstream(tdma, n_onus_active)


class RamanNoiseModel:
    """Raman density at the CO end of the upstream feeder for a fixed source set.

    Pump-side quantities are computed once; calls evaluate every source at
    once, vectorized over probe wavelengths.
    """

    def __init__(self, t: PonTopology, channels: Sequence[ClassicalChannel], profile: RamanProfile):
        self.topology = t
        self.profile = profile
        sources = effective_sources(channels, t.n_onus_active)
        self.upstream = [ch for ch in sources if ch.direction == "upstream"]
        self.downstream = [ch for ch in sources if ch.direction == "downstream"]
        self._us = self._pumps(self.upstream)
        self._ds = self._pumps(self.downstream)

    @staticmethod
    def _pumps(group):
        wl = np.array([ch.wavelength_nm for ch in group], dtype=float)
        power = np.array([ch.power_w for ch in group], dtype=float)
        return wl[:, None], power[:, None]

    def breakpoints(self, lo_nm: float, hi_nm: float) -> list[float]:
        """Probe wavelengths in [lo, hi] where the density has kinks.

        These are the Raman table nodes mapped through every pump, on both
        sides of it.
        """
        pumps = np.unique(np.concatenate([self._us[0].ravel(), self._ds[0].ravel()]))
        shifts = np.asarray(self.profile.shifts_thz, dtype=float)
        shifts = np.concatenate([-shifts[::-1], shifts])
        nu = C_NM_THZ / pumps[:, None] - shifts[None, :]
        nu = nu[nu > 0]
        wl = C_NM_THZ / nu
        return sorted(float(v) for v in wl if lo_nm <= v <= hi_nm)

    @property
    def names(self) -> list[str]:
        return [ch.name or f"{ch.wavelength_nm:.3f}nm" for ch in self.upstream + self.downstream]

    def _upstream_terms(self, probe):
        t, prof = self.topology, self.profile
        wl, power = self._us
        split = _db(t.split_loss_db)
        to_co = split * _db(t.feeder_us.loss_db(probe))
        eff = raman_efficiency(prof, wl, probe, t.drop.temperature_k)
        # generated in the emitting ONU's drop, then through splitter and feeder
        yield "drop", "co", forward_raman_power(power, t.drop, eff, pump_nm=wl, probe_nm=probe) * to_co
        p_feeder = power * _db(t.drop.loss_db(wl)) * split
        if t.feeder_us.temperature_k != t.drop.temperature_k:
            eff = raman_efficiency(prof, wl, probe, t.feeder_us.temperature_k)
        yield "feeder_us", "co", forward_raman_power(p_feeder, t.feeder_us, eff, pump_nm=wl, probe_nm=probe)

    def _downstream_terms(self, probe):
        t, prof = self.topology, self.profile
        wl, power = self._ds
        split = _db(t.split_loss_db)
        leak = _db(t.directivity_db)
        feeder_us_att = _db(t.feeder_us.loss_db(probe))
        p_splitter = power * _db(t.feeder_ds.loss_db(wl))
        # backscatter from every drop the broadcast reaches, back through the splitter
        eff = raman_efficiency(prof, wl, probe, t.drop.temperature_k)
        per_drop = backward_raman_power(p_splitter * split, t.drop, eff, pump_nm=wl, probe_nm=probe)
        yield "drop", "counter", t.split_n * per_drop * split * feeder_us_att
        # forward noise of the downstream feeder leaking across the splitter
        eff = raman_efficiency(prof, wl, probe, t.feeder_ds.temperature_k)
        fwd = forward_raman_power(power, t.feeder_ds, eff, pump_nm=wl, probe_nm=probe)
        yield "feeder_ds", "co", fwd * leak * feeder_us_att
        # pump light leaking into the upstream feeder, scattering toward the CO
        eff = raman_efficiency(prof, wl, probe, t.feeder_us.temperature_k)
        yield "feeder_us", "co", forward_raman_power(p_splitter * leak, t.feeder_us, eff, pump_nm=wl, probe_nm=probe)

    def terms(self, probe_nm):
        """``(source, path, direction, density)`` for every source and generation path."""
        probe = np.atleast_1d(np.asarray(probe_nm, dtype=float))
        out = []
        for group, gen in ((self.upstream, self._upstream_terms), (self.downstream, self._downstream_terms)):
            if not group:
                continue
            for path, geometry, dens in gen(probe[None, :]):
                dens = np.broadcast_to(dens, (len(group), probe.size))
                for ch, d in zip(group, dens):
                    d = d.reshape(np.shape(probe_nm)) if np.ndim(probe_nm) else float(d[0])
                    out.append((ch.name or f"{ch.wavelength_nm:.3f}nm", path, geometry, d))
        return out

    def __call__(self, probe_nm):
        probe = np.atleast_1d(np.asarray(probe_nm, dtype=float))
        total = np.zeros(probe.size)
        if self.upstream:
            for _, _, dens in self._upstream_terms(probe[None, :]):
                total += dens.sum(axis=0)
        if self.downstream:
            for _, _, dens in self._downstream_terms(probe[None, :]):
                total += dens.sum(axis=0)
        return total.reshape(np.shape(probe_nm)) if np.ndim(probe_nm) else float(total[0])


def noise_terms(t: PonTopology, channels: Sequence[ClassicalChannel], probe_nm, profile: RamanProfile):
    """All Raman contributions (W/nm) at the CO end of the upstream feeder."""
    return RamanNoiseModel(t, channels, profile).terms(probe_nm)


def noise_density(t: PonTopology, channels: Sequence[ClassicalChannel], probe_nm, profile: RamanProfile):
    """Total Raman density (W/nm) at the receiver input, vectorized over ``probe_nm``."""
    return RamanNoiseModel(t, channels, profile)(probe_nm)


def aggregate_raman_noise(t: PonTopology, plan: ChannelPlan, quantum_nm: float | None,
                          profile: RamanProfile) -> NoiseBudget:
    """Per-source Raman budget at the quantum wavelength before the receive filters."""
    wl = plan.quantum_wavelength_nm if quantum_nm is None else quantum_nm
    terms = tuple(
        NoiseTerm(src, path, direction, float(dens))
        for src, path, direction, dens in noise_terms(t, plan.channels, wl, profile)
    )
    return NoiseBudget(terms)

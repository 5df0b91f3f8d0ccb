"""Quantum-wavelength assignment on a tree shared by GPON and NG-PON2 users.

The detected Raman density on the upstream quantum channel is scanned over a
wavelength grid. Classical sources are split into components whose weights
follow the take-rate: TDMA upstream of each standard scales with its share of
the ONU population, the legacy GPON downstream stays lit, and the NG-PON2
downstream and fronthaul overlay switches on with the first migrated user.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import odn
from .detector import HC_J_NM
from .raman import RamanProfile
from .spectral import BANDS, ChannelPlan, ClassicalChannel, band_of, build_channel_plan

GRID_LIMITS_NM = (1260.0, 1625.0)
COMPONENTS = ("gpon_us", "gpon_ds", "ngpon2_us", "ngpon2_overlay")


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class MixedTreeConfig:
    topology: odn.PonTopology
    gpon_plan: ChannelPlan
    ngpon2_plan: ChannelPlan
    profile: RamanProfile
    take_rate: float = 0.0
    candidate_bands: tuple[str, ...] = ("E", "S")
    guard_nm: float = 5.0
    grid_step_nm: float = 0.5
    exclusion_zones: tuple[tuple[float, float], ...] = ()
    # gated counts per incident photon, see detection_factor()
    detection_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.take_rate <= 1.0:
            raise ValueError(f"take rate must be in [0, 1], got {self.take_rate}")
        unknown = [b for b in self.candidate_bands if b not in BANDS]
        if unknown or not self.candidate_bands:
            raise ValueError(f"candidate bands must be a non-empty subset of {sorted(BANDS)}")
        if self.guard_nm < 0 or self.grid_step_nm <= 0 or self.detection_factor <= 0:
            raise ValueError("guard band must be >= 0, grid step and detection factor > 0")
        if not self.exclusion_zones:
            zones = tuple((ch.wavelength_nm - self.guard_nm, ch.wavelength_nm + self.guard_nm)
                          for ch in self.classical_channels)
            object.__setattr__(self, "exclusion_zones", zones)

    @property
    def classical_channels(self) -> list[ClassicalChannel]:
        return list(self.gpon_plan.channels) + list(self.ngpon2_plan.channels)

    def with_take_rate(self, take_rate: float) -> "MixedTreeConfig":
        return replace(self, take_rate=take_rate)


@dataclass(frozen=True)
class PlanResult:
    take_rate: float
    lambda_opt: float
    noise_at_opt: float
    curve: tuple[tuple[float, float], ...] = field(repr=False, compare=False)

    @property
    def band(self) -> str | None:
        return band_of(self.lambda_opt)


def detection_factor(spad, link=None) -> float:
    """Gated counts per Raman photon at the receiver input.

    Efficiency times window acceptance; with ``link`` the receiver chain
    (waveband filter, insertion loss, monitored port) is folded in too.
    """
    factor = spad.efficiency * spad.window_accept
    if link is not None:
        factor *= 10.0 ** (-link.waveband_loss_db / 10.0) * link.receiver_transmission
    return factor


def default_mixed_config(profile: RamanProfile, take_rate: float = 0.0, detection_factor: float = 1.0,
                         topology: odn.PonTopology | None = None, **kwargs) -> MixedTreeConfig:
    """Both presets on the default ODN; the quantum wavelength is a placeholder the scan ignores."""
    gpon = build_channel_plan("GPON", 1550.12)
    ngpon2 = build_channel_plan("NGPON2", 1310.55, ngpon2_power_dbm=kwargs.pop("ngpon2_power_dbm", 3.0))
    return MixedTreeConfig(topology or odn.PonTopology(), gpon, ngpon2, profile, take_rate,
                           detection_factor=detection_factor, **kwargs)


def scan_grid(step_nm: float = 0.5, limits: tuple[float, float] = GRID_LIMITS_NM) -> np.ndarray:
    n = int(round((limits[1] - limits[0]) / step_nm))
    return limits[0] + step_nm * np.arange(n + 1)


def component_channels(cfg: MixedTreeConfig) -> dict[str, list[ClassicalChannel]]:
    def pick(plan, direction):
        return [ch for ch in plan.channels if ch.direction == direction]

    return {
        "gpon_us": pick(cfg.gpon_plan, "upstream"),
        "gpon_ds": pick(cfg.gpon_plan, "downstream"),
        "ngpon2_us": pick(cfg.ngpon2_plan, "upstream"),
        "ngpon2_overlay": pick(cfg.ngpon2_plan, "downstream"),
    }


def source_weights(take_rate: float) -> dict[str, float]:
    return {
        "gpon_us": 1.0 - take_rate,
        "gpon_ds": 1.0,
        "ngpon2_us": take_rate,
        "ngpon2_overlay": 1.0 if take_rate > 0 else 0.0,
    }


def source_spectra(cfg: MixedTreeConfig, grid) -> dict[str, np.ndarray]:
    """Unweighted detected density (counts/s/nm) of each source component."""
    grid = np.asarray(grid, dtype=float)
    out = {}
    for name, channels in component_channels(cfg).items():
        if not channels:
            out[name] = np.zeros_like(grid)
            continue
        watts = odn.RamanNoiseModel(cfg.topology, channels, cfg.profile)(grid)
        out[name] = watts * grid / HC_J_NM * cfg.detection_factor
    return out


def noise_spectrum(cfg: MixedTreeConfig, grid=None) -> tuple[np.ndarray, np.ndarray]:
    """(grid, detected Raman density in counts/s/nm) at the configured take rate."""
    grid = scan_grid(cfg.grid_step_nm) if grid is None else np.asarray(grid, dtype=float)
    weights = source_weights(cfg.take_rate)
    spectra = source_spectra(cfg, grid)
    total = sum(weights[name] * spectra[name] for name in COMPONENTS)
    return grid, total


def feasible_mask(cfg: MixedTreeConfig, grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    ok = np.zeros(grid.shape, dtype=bool)
    for name in cfg.candidate_bands:
        band = BANDS[name]
        ok |= (grid >= band.low_nm) & (grid <= band.high_nm)
    for lo, hi in cfg.exclusion_zones:
        ok &= ~((grid >= lo) & (grid <= hi))
    return ok


def _argmin(take_rate: float, grid: np.ndarray, density: np.ndarray, ok: np.ndarray) -> PlanResult:
    if not ok.any():
        raise PlanningError("no feasible quantum wavelength outside the exclusion zones")
    best = density[ok].min()
    # the grid ascends, so the last minimum is the longest wavelength
    idx = np.flatnonzero(ok & (density <= best))[-1]
    curve = tuple((float(a), float(b)) for a, b in zip(grid, density))
    return PlanResult(take_rate, float(grid[idx]), float(density[idx]), curve)


def optimal_lambda(cfg: MixedTreeConfig, grid=None) -> PlanResult:
    """Feasible grid point of least detected noise; ties go to the longer wavelength."""
    grid, density = noise_spectrum(cfg, grid)
    return _argmin(cfg.take_rate, grid, density, feasible_mask(cfg, grid))


def take_rate_sweep(cfg: MixedTreeConfig, rates: Sequence[float]) -> list[PlanResult]:
    if len(rates) == 0:
        raise PlanningError("take-rate sweep needs at least one value")
    grid = scan_grid(cfg.grid_step_nm)
    spectra = source_spectra(cfg, grid)
    ok = feasible_mask(cfg, grid)
    results = []
    # spectra are linear in the weights, so one evaluation serves every rate
    for t in sorted(float(r) for r in rates):
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"take rate must be in [0, 1], got {t}")
        weights = source_weights(t)
        density = sum(weights[name] * spectra[name] for name in COMPONENTS)
        results.append(_argmin(t, grid, density, ok))
    return results


PLAN_CSV_HEADER = ("take_rate", "lambda_opt_nm", "band", "noise_at_opt_counts_per_s_per_nm")


def write_plan_csv(results: Sequence[PlanResult], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLAN_CSV_HEADER)
        for r in results:
            writer.writerow([f"{r.take_rate:.6g}", f"{r.lambda_opt:.3f}", r.band or "", f"{r.noise_at_opt:.6e}"])

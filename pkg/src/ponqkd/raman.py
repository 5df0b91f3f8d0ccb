"""Spontaneous Raman noise generated by classical pumps in a fiber span.

Efficiencies are in 1/(km*nm): scattered power per watt of pump, per km of
fiber, per nm of probe bandwidth. Attenuations are in dB/km.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import constants

from .spectral import C_NM_THZ, ClassicalChannel, check_wavelength

H_OVER_K = constants.h / constants.k  # s*K
GEOMETRIES = ("co", "counter")
DEFAULT_TEMPERATURE_K = 293.0
MAX_SHIFT_THZ = 40.0


class RamanDomainError(ValueError):
    pass


def _data_path(name: str) -> Path:
    return Path(str(resources.files("ponqkd") / "data" / name))


def _load_table(path: str | Path) -> np.ndarray:
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns")
    return table


@dataclass(frozen=True)
class RamanProfile:
    shifts_thz: tuple[float, ...]
    rho: tuple[float, ...]
    scale: float = 1.0

    def __post_init__(self):
        shifts = np.asarray(self.shifts_thz)
        rho = np.asarray(self.rho)
        if shifts.shape != rho.shape or shifts.size < 2:
            raise ValueError("shift and efficiency tables must have equal length >= 2")
        if np.any(np.diff(shifts) <= 0):
            raise ValueError("Raman table must be sorted by shift")
        if np.any(rho < 0) or np.any(rho > 1) or not math.isclose(rho.max(), 1.0):
            raise ValueError("normalized Raman efficiencies must lie in [0, 1] with peak 1")
        if not self.scale > 0:
            raise ValueError("Raman scale must be positive")

    @property
    def peak_shift_thz(self) -> float:
        return float(self.shifts_thz[int(np.argmax(self.rho))])

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.shifts_thz, dtype=float), np.asarray(self.rho, dtype=float)

    def normalized(self, shift_thz):
        """Interpolated rho_n at |shift|; zero beyond the tabulated range."""
        return np.interp(np.abs(shift_thz), *self._table, left=0.0, right=0.0)

    def with_scale(self, scale: float) -> "RamanProfile":
        return RamanProfile(self.shifts_thz, self.rho, scale)


def load_raman_profile(path: str | Path | None = None, scale: float = 1.0) -> RamanProfile:
    """Read a ``shift_THz rho_normalized`` table; the packaged silica table by default."""
    table = _load_table(path or _data_path("raman_profile.txt"))
    return RamanProfile(tuple(table[:, 0]), tuple(table[:, 1]), scale)


def default_attenuation_table() -> tuple[tuple[float, float], ...]:
    table = _load_table(_data_path("smf_attenuation.txt"))
    return tuple((float(a), float(b)) for a, b in table)


@dataclass(frozen=True)
class FiberSpan:
    length_km: float
    attenuation: tuple[tuple[float, float], ...] = field(default_factory=default_attenuation_table)
    temperature_k: float = DEFAULT_TEMPERATURE_K
    connector_loss_db: float = 0.0

    def __post_init__(self):
        if not self.length_km >= 0:
            raise RamanDomainError(f"span length must be >= 0, got {self.length_km}")
        if any(a <= 0 for _, a in self.attenuation):
            raise RamanDomainError("attenuation must be positive over the window")
        if not self.temperature_k > 0 or self.connector_loss_db < 0:
            raise RamanDomainError("temperature must be positive and connector loss >= 0")

    @cached_property
    def _table(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.asarray(self.attenuation, dtype=float)
        return pts[:, 0].copy(), pts[:, 1].copy()

    def alpha_db_per_km(self, wavelength_nm):
        return np.interp(wavelength_nm, *self._table)

    def loss_db(self, wavelength_nm):
        return self.alpha_db_per_km(wavelength_nm) * self.length_km + self.connector_loss_db

    def with_length(self, length_km: float) -> "FiberSpan":
        return FiberSpan(length_km, self.attenuation, self.temperature_k, self.connector_loss_db)


def raman_efficiency(profile: RamanProfile, pump_nm, probe_nm, temperature_k: float = DEFAULT_TEMPERATURE_K):
    """Absolute Raman efficiency for scattering from ``pump_nm`` into ``probe_nm``.

    Probes on the anti-Stokes side (shorter wavelength than the pump) carry the
    Boltzmann factor exp(-h*dnu/kT).
    """
    shift = C_NM_THZ / np.asarray(pump_nm, dtype=float) - C_NM_THZ / np.asarray(probe_nm, dtype=float)
    # shift > 0: probe red of the pump (Stokes)
    eff = profile.scale * profile.normalized(shift)
    boltzmann = np.exp(-H_OVER_K * np.abs(shift) * 1e12 / temperature_k)
    eff = np.where(shift < 0, eff * boltzmann, eff)
    eff = np.where(np.abs(shift) > MAX_SHIFT_THZ, 0.0, eff)
    return eff if np.ndim(eff) else float(eff)


_LN10_10 = math.log(10.0) / 10.0


def forward_integral(length_km, alpha_pump, alpha_signal):
    """Effective length of co-propagating generation seen at the span output.

    Closed form of  int_0^L 10^(-a_p z/10) 10^(-a_s (L-z)/10) dz.
    """
    L = np.asarray(length_km, dtype=float)
    a_p = np.asarray(alpha_pump, dtype=float)
    a_s = np.asarray(alpha_signal, dtype=float)
    d = (a_s - a_p) * _LN10_10
    with np.errstate(divide="ignore", invalid="ignore"):
        grown = np.where(np.abs(d * L) > 1e-12, np.expm1(d * L) / np.where(d == 0, 1.0, d), L)
    out = grown * np.exp(-a_s * _LN10_10 * L)
    return out if np.ndim(out) else float(out)


def backward_integral(length_km, alpha_pump, alpha_signal):
    """Effective length of counter-propagating generation seen at the pump input.

    Closed form of  int_0^L 10^(-(a_p + a_s) z/10) dz.
    """
    L = np.asarray(length_km, dtype=float)
    a = (np.asarray(alpha_pump, dtype=float) + np.asarray(alpha_signal, dtype=float)) * _LN10_10
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a * L > 1e-12, -np.expm1(-a * L) / np.where(a == 0, 1.0, a), L)
    return out if np.ndim(out) else float(out)


def _check_nonnegative(**values):
    for name, v in values.items():
        if np.any(np.asarray(v) < 0) or np.any(~np.isfinite(np.asarray(v, dtype=float))):
            raise RamanDomainError(f"{name} must be finite and >= 0, got {v}")


def forward_raman_power(p0_w, span: FiberSpan, efficiency, bandwidth_nm=1.0, *, pump_nm, probe_nm):
    """Co-propagating Raman power (W) leaving the far end of ``span``."""
    _check_nonnegative(p0_w=p0_w, efficiency=efficiency, bandwidth_nm=bandwidth_nm)
    l_eff = forward_integral(span.length_km, span.alpha_db_per_km(pump_nm), span.alpha_db_per_km(probe_nm))
    return p0_w * efficiency * bandwidth_nm * l_eff


def backward_raman_power(p0_w, span: FiberSpan, efficiency, bandwidth_nm=1.0, *, pump_nm, probe_nm):
    """Counter-propagating Raman power (W) leaving the pump-input end of ``span``."""
    _check_nonnegative(p0_w=p0_w, efficiency=efficiency, bandwidth_nm=bandwidth_nm)
    l_eff = backward_integral(span.length_km, span.alpha_db_per_km(pump_nm), span.alpha_db_per_km(probe_nm))
    return p0_w * efficiency * bandwidth_nm * l_eff


@dataclass(frozen=True)
class RamanContribution:
    density_w_per_nm: float
    direction: str

    def __post_init__(self):
        if self.direction not in GEOMETRIES:
            raise ValueError(f"direction must be one of {GEOMETRIES}")
        if self.density_w_per_nm < 0:
            raise ValueError("Raman density must be >= 0")


def raman_density_at(
    probe_nm,
    pump: ClassicalChannel,
    span: FiberSpan,
    geometry: str,
    profile: RamanProfile,
    pump_power_w: float | None = None,
):
    """Raman spectral density (W/nm) at ``probe_nm`` leaving ``span``.

    ``co`` noise exits at the far end alongside the pump, ``counter`` noise at
    the end the pump enters. The pump enters with its launch power unless
    ``pump_power_w`` gives the power already attenuated upstream.
    """
    check_wavelength(probe_nm)
    if geometry not in GEOMETRIES:
        raise ValueError(f"geometry must be one of {GEOMETRIES}, got {geometry!r}")
    p0 = pump.power_w if pump_power_w is None else pump_power_w
    eff = raman_efficiency(profile, pump.wavelength_nm, probe_nm, span.temperature_k)
    fn = forward_raman_power if geometry == "co" else backward_raman_power
    return fn(p0, span, eff, 1.0, pump_nm=pump.wavelength_nm, probe_nm=probe_nm)

"""Wavelength bookkeeping, PON channel plans and receive-filter transfer functions.

Wavelengths are vacuum values in nm, frequencies in THz, filter bandwidths in
GHz. Everything here is an immutable value or a pure function.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

C_NM_THZ = 299792.458  # speed of light in nm*THz
WINDOW_NM = (1200.0, 1700.0)


class SpectralDomainError(ValueError):
    """A wavelength or spectral density outside the validated domain."""


class ConfigurationError(ValueError):
    """An inconsistent channel plan or filter definition."""


@dataclass(frozen=True)
class Band:
    name: str
    low_nm: float
    high_nm: float

    def __contains__(self, wavelength_nm: float) -> bool:
        return self.low_nm <= wavelength_nm < self.high_nm


BANDS: dict[str, Band] = {
    "O": Band("O", 1260.0, 1360.0),
    "E": Band("E", 1360.0, 1460.0),
    "S": Band("S", 1460.0, 1530.0),
    "C": Band("C", 1530.0, 1565.0),
    "L": Band("L", 1565.0, 1625.0),
}


def band_of(wavelength_nm: float) -> str | None:
    """Name of the ITU band holding ``wavelength_nm`` (upper edge of L inclusive)."""
    for band in BANDS.values():
        if wavelength_nm in band:
            return band.name
    if wavelength_nm == BANDS["L"].high_nm:
        return "L"
    return None


def check_wavelength(wavelength_nm) -> np.ndarray | float:
    arr = np.asarray(wavelength_nm, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < WINDOW_NM[0]) or np.any(arr > WINDOW_NM[1]):
        raise SpectralDomainError(
            f"wavelength {wavelength_nm} nm outside validated window {WINDOW_NM}"
        )
    return wavelength_nm


def wavelength_to_frequency(wavelength_nm):
    """Optical frequency in THz of a vacuum wavelength in nm (scalar or array)."""
    check_wavelength(wavelength_nm)
    return _reciprocal(wavelength_nm)


def frequency_to_wavelength(frequency_thz):
    wl = _reciprocal(frequency_thz)
    check_wavelength(wl)
    return wl


def _reciprocal(x):
    if np.ndim(x):
        return C_NM_THZ / np.asarray(x, dtype=float)
    return C_NM_THZ / float(x)


def ghz_to_nm(bandwidth_ghz: float, center_nm: float) -> float:
    """Exact wavelength width of a frequency interval centered on ``center_nm``."""
    nu0 = C_NM_THZ / center_nm
    half = bandwidth_ghz * 1e-3 / 2.0
    return C_NM_THZ / (nu0 - half) - C_NM_THZ / (nu0 + half)


# ---------------------------------------------------------------------------
# Channel plans

DIRECTIONS = ("downstream", "upstream")
MODES = ("continuous", "tdma")
STANDARDS = ("GPON", "NGPON2", "mixed")


@dataclass(frozen=True)
class ClassicalChannel:
    wavelength_nm: float
    power_dbm: float
    direction: str
    mode: str = "continuous"
    name: str = ""
    group: str = ""

    def __post_init__(self):
        check_wavelength(self.wavelength_nm)
        if self.direction not in DIRECTIONS:
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown multiplexing mode {self.mode!r}")
        if self.mode == "tdma" and self.direction != "upstream":
            raise ConfigurationError("TDMA is only valid for upstream channels")
        if not self.power_dbm <= 15.0:
            raise ConfigurationError(f"launch power {self.power_dbm} dBm exceeds +15 dBm")

    @property
    def power_w(self) -> float:
        return 1e-3 * 10.0 ** (self.power_dbm / 10.0)


@dataclass(frozen=True)
class ChannelPlan:
    standard: str
    channels: tuple[ClassicalChannel, ...]
    quantum_wavelength_nm: float
    min_separation_nm: float = 0.8

    def __post_init__(self):
        if self.standard not in STANDARDS:
            raise ConfigurationError(f"unknown standard {self.standard!r}")
        check_wavelength(self.quantum_wavelength_nm)
        object.__setattr__(self, "channels", tuple(self.channels))
        for ch in self.channels:
            if abs(ch.wavelength_nm - self.quantum_wavelength_nm) < self.min_separation_nm:
                raise ConfigurationError(
                    f"quantum wavelength {self.quantum_wavelength_nm} nm collides with "
                    f"classical channel {ch.name or ch.wavelength_nm} at {ch.wavelength_nm} nm"
                )

    def select(self, groups: Sequence[str]) -> "ChannelPlan":
        """Plan restricted to the channel groups in ``groups`` (e.g. ``["DS", "FH"]``)."""
        keep = tuple(ch for ch in self.channels if ch.group in set(groups))
        return ChannelPlan(self.standard, keep, self.quantum_wavelength_nm, self.min_separation_nm)

    def with_quantum_wavelength(self, wavelength_nm: float) -> "ChannelPlan":
        return ChannelPlan(self.standard, self.channels, wavelength_nm, self.min_separation_nm)


NGPON2_CHANNEL_POWER_DBM = 3.0
NGPON2_GRID_GHZ = 100.0
NGPON2_GROUP_START_NM = {"DS": 1596.0, "FH": 1550.0, "US": 1532.0}
NGPON2_GROUP_COUNT = {"DS": 4, "FH": 11, "US": 4}


def _grid_from(start_nm: float, count: int, spacing_ghz: float) -> list[float]:
    # channels march toward longer wavelength from the start of each sub-band
    nu0 = C_NM_THZ / start_nm
    return [C_NM_THZ / (nu0 - k * spacing_ghz * 1e-3) for k in range(count)]


def _preset_channels(standard: str, ngpon2_power_dbm: float) -> list[ClassicalChannel]:
    if standard == "GPON":
        return [
            ClassicalChannel(1489.0, 2.2, "downstream", "continuous", "GPON-DS", "DS"),
            ClassicalChannel(1310.0, 0.3, "upstream", "tdma", "GPON-US", "US"),
        ]
    if standard == "NGPON2":
        chans = []
        for group, direction, mode in (
            ("DS", "downstream", "continuous"),
            ("FH", "downstream", "continuous"),
            ("US", "upstream", "tdma"),
        ):
            grid = _grid_from(NGPON2_GROUP_START_NM[group], NGPON2_GROUP_COUNT[group], NGPON2_GRID_GHZ)
            for k, wl in enumerate(grid, start=1):
                chans.append(ClassicalChannel(round(wl, 3), ngpon2_power_dbm, direction, mode,
                                              f"NGPON2-{group}{k}", group))
        return chans
    raise ConfigurationError(f"no preset channel plan for standard {standard!r}")


def build_channel_plan(
    standard: str,
    quantum_wavelength_nm: float,
    power_overrides: Mapping[str, float] | None = None,
    ngpon2_power_dbm: float = NGPON2_CHANNEL_POWER_DBM,
    min_separation_nm: float = 0.8,
) -> ChannelPlan:
    """Preset GPON or NG-PON2 plan around a quantum wavelength.

    ``power_overrides`` maps a channel name (``"GPON-DS"``, ``"NGPON2-US3"``), a
    group (``"DS"``, ``"FH"``, ``"US"``) or ``"all"`` to a launch power in dBm.
    Names win over groups, groups over ``"all"``.
    """
    if standard not in ("GPON", "NGPON2"):
        raise ConfigurationError(f"standard must be GPON or NGPON2, got {standard!r}")
    overrides = dict(power_overrides or {})
    chans = []
    for ch in _preset_channels(standard, ngpon2_power_dbm):
        power = overrides.get(ch.name, overrides.get(ch.group, overrides.get("all", ch.power_dbm)))
        chans.append(ClassicalChannel(ch.wavelength_nm, float(power), ch.direction, ch.mode, ch.name, ch.group))
    known = {ch.name for ch in chans} | {ch.group for ch in chans} | {"all"}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigurationError(f"power override for unknown channel(s) {sorted(unknown)}")
    return ChannelPlan(standard, tuple(chans), quantum_wavelength_nm, min_separation_nm)


# ---------------------------------------------------------------------------
# Filters

SHAPES = ("rectangular", "supergaussian", "tabulated")


@dataclass(frozen=True)
class FilterSpec:
    name: str
    center_nm: float
    bandwidth_ghz: float
    shape: str = "supergaussian"
    order: float = 4.0
    insertion_loss_db: float = 0.0
    stopband_rejection_db: float = 30.0
    curve: tuple[tuple[float, float], ...] | None = field(default=None, compare=True)

    def __post_init__(self):
        check_wavelength(self.center_nm)
        if not self.bandwidth_ghz > 0:
            raise ConfigurationError("filter bandwidth must be positive")
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown filter shape {self.shape!r}")
        if self.shape == "supergaussian" and not self.order > 0:
            raise ConfigurationError("super-Gaussian order must be positive")
        if self.shape == "tabulated":
            if not self.curve or len(self.curve) < 2:
                raise ConfigurationError("tabulated filter needs at least two curve points")
            wl = np.array([p[0] for p in self.curve])
            if np.any(np.diff(wl) <= 0):
                raise ConfigurationError("tabulated filter wavelengths must be strictly increasing")
        if self.insertion_loss_db < 0 or self.stopband_rejection_db <= 0:
            raise ConfigurationError("insertion loss must be >= 0 and rejection > 0 dB")

    @property
    def bandwidth_nm(self) -> float:
        return ghz_to_nm(self.bandwidth_ghz, self.center_nm)

    @property
    def floor(self) -> float:
        return 10.0 ** (-self.stopband_rejection_db / 10.0)

    def edge_offset_ghz(self) -> float:
        """Frequency offset beyond which the shape sits on the stopband floor."""
        half = self.bandwidth_ghz / 2.0
        if self.shape == "supergaussian" and math.isfinite(self.stopband_rejection_db):
            x = (self.stopband_rejection_db / 10.0 * math.log(10.0) / math.log(2.0)) ** (1.0 / self.order)
            return half * x
        return half

    def with_center(self, center_nm: float) -> "FilterSpec":
        from dataclasses import replace
        return replace(self, center_nm=center_nm)


def filter_transmission(f: FilterSpec, wavelength_nm):
    """Linear power transmission of ``f`` at ``wavelength_nm`` (scalar or array)."""
    wl = np.asarray(wavelength_nm, dtype=float)
    il = 10.0 ** (-f.insertion_loss_db / 10.0)
    if f.shape == "tabulated":
        pts = np.asarray(f.curve, dtype=float)
        t = 10.0 ** (np.interp(wl, pts[:, 0], pts[:, 1]) / 10.0)
        return t if np.ndim(wavelength_nm) else float(t)
    offset_ghz = (C_NM_THZ / wl - C_NM_THZ / f.center_nm) * 1e3
    x = np.abs(offset_ghz) / (f.bandwidth_ghz / 2.0)
    if f.shape == "rectangular":
        shape = np.where(x <= 1.0, 1.0, 0.0)
    else:
        shape = np.exp(-math.log(2.0) * x ** f.order)
    t = il * np.maximum(shape, f.floor)
    return t if np.ndim(wavelength_nm) else float(t)


def integration_window(f: FilterSpec, span: float = 1.5) -> tuple[float, float]:
    """Wavelength interval covering the passband and its roll-off into the floor."""
    if f.shape == "tabulated":
        pts = np.asarray(f.curve, dtype=float)
        return float(pts[0, 0]), float(pts[-1, 0])
    reach = f.edge_offset_ghz() * (span if f.shape == "supergaussian" else 1.0)
    nu0 = C_NM_THZ / f.center_nm
    return C_NM_THZ / (nu0 + reach * 1e-3), C_NM_THZ / (nu0 - reach * 1e-3)


def integrate_inband(
    density: Callable[[np.ndarray], np.ndarray] | float,
    f: FilterSpec,
    window: tuple[float, float] | None = None,
    rtol: float = 1e-6,
) -> float:
    """Integrate a spectral rate density (per nm) through filter ``f``.

    ``density`` is a callable of wavelength in nm, or a constant. Without an
    explicit ``window`` the integral covers the filter passband and roll-off.
    """
    if not callable(density):
        d0 = float(density)
        density = lambda wl, d0=d0: np.full_like(np.asarray(wl, dtype=float), d0)  # noqa: E731
    lo, hi = window if window is not None else integration_window(f)
    check_wavelength(lo)
    check_wavelength(hi)

    # split the domain where the integrand has kinks so each piece is smooth
    nu0 = C_NM_THZ / f.center_nm
    breaks = {lo, hi}
    if f.shape != "tabulated":
        for off in (f.bandwidth_ghz / 2.0, f.edge_offset_ghz()):
            for sign in (-1.0, 1.0):
                breaks.add(C_NM_THZ / (nu0 + sign * off * 1e-3))
        breaks.add(f.center_nm)
    else:
        breaks.update(p[0] for p in f.curve)
    extra = getattr(density, "breakpoints", None)
    if extra is not None:
        breaks.update(extra(lo, hi))
    edges = np.array(sorted(b for b in breaks if lo <= b <= hi))
    edges = edges[np.concatenate([[True], np.diff(edges) > 1e-9 * hi])]
    if edges[-1] < hi:
        edges[-1] = hi

    x, w = np.polynomial.legendre.leggauss(8)

    def composite(panels: int) -> float:
        # ``panels`` equal panels per segment, 8-point Gauss-Legendre on each
        fr = np.linspace(0.0, 1.0, panels + 1)
        starts = edges[:-1, None] + np.diff(edges)[:, None] * fr[None, :]
        left, width = starts[:, :-1].ravel(), np.diff(starts, axis=1).ravel()
        nodes = (left[:, None] + width[:, None] * (x + 1.0) / 2.0).ravel()
        dens = np.asarray(density(nodes), dtype=float) * np.ones_like(nodes)
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise SpectralDomainError("density undefined or negative on the filter support")
        vals = (dens * filter_transmission(f, nodes)).reshape(len(left), len(x))
        return float(np.sum(vals @ w * width / 2.0))

    panels = 4
    prev = composite(panels)
    while True:
        panels *= 2
        cur = composite(panels)
        if abs(cur - prev) <= rtol * abs(cur) or cur == 0.0:
            return max(cur, 0.0)
        if panels >= 1 << 14:
            warnings.warn(f"in-band integral not converged to rtol={rtol}", RuntimeWarning, stacklevel=2)
            return max(cur, 0.0)
        prev = cur


def load_filter_curve(path: str | Path, name: str | None = None, bandwidth_ghz: float | None = None) -> FilterSpec:
    """Read a two-column ``wavelength_nm transmission_dB`` curve into a tabulated filter.

    The center is the wavelength of peak transmission; the 3-dB bandwidth is
    measured from the curve unless given.
    """
    path = Path(path)
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected two columns, got {data.shape[1]}")
    wl, tdb = data[:, 0], data[:, 1]
    if np.any(np.diff(wl) <= 0):
        raise ConfigurationError(f"{path}: wavelengths must be strictly increasing")
    peak = int(np.argmax(tdb))
    if np.any(np.diff(tdb[: peak + 1]) < 0) or np.any(np.diff(tdb[peak:]) > 0):
        raise ConfigurationError(f"{path}: curve must fall monotonically toward each stopband")
    if bandwidth_ghz is None:
        above = wl[tdb >= tdb[peak] - 3.0]
        bandwidth_ghz = (C_NM_THZ / above[0] - C_NM_THZ / above[-1]) * 1e3
        bandwidth_ghz = max(bandwidth_ghz, 1e-3)
    return FilterSpec(
        name=name or path.stem,
        center_nm=float(wl[peak]),
        bandwidth_ghz=float(bandwidth_ghz),
        shape="tabulated",
        insertion_loss_db=float(-tdb[peak]) if tdb[peak] < 0 else 0.0,
        stopband_rejection_db=float(max(tdb[peak] - min(tdb[0], tdb[-1]), 1e-3)),
        curve=tuple((float(a), float(b)) for a, b in data),
    )


# Narrowband receive filters. Insertion losses are overwritten by the
# calibration block when a scenario is loaded.
FILTER_PRESETS: dict[str, dict] = {
    "lan_wdm": dict(bandwidth_ghz=800.0, shape="supergaussian", order=4.0, insertion_loss_db=1.5),
    "dwdm": dict(bandwidth_ghz=100.0, shape="supergaussian", order=4.0, insertion_loss_db=1.0),
    "fbg": dict(bandwidth_ghz=14.6, shape="supergaussian", order=2.0, insertion_loss_db=0.5),
}


def preset_filter(name: str, center_nm: float, **overrides) -> FilterSpec:
    if name not in FILTER_PRESETS:
        raise ConfigurationError(f"unknown filter preset {name!r}; choose from {sorted(FILTER_PRESETS)}")
    params = {**FILTER_PRESETS[name], "stopband_rejection_db": 30.0, **overrides}
    return FilterSpec(name=name, center_nm=center_nm, **params)

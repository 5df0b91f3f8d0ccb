"""Calibration of the unmeasured setup constants against scalar anchors.

Receiver insertion loss and dead time come from two back-to-back (budget, raw
rate) points, per-filter insertion losses from the raw rates of three lit
links, and the gated dark rate from their QBERs by least squares. The Raman
scale is fitted to the registered Raman counts of the fully loaded NG-PON2
link behind the LAN-WDM filter and the window acceptance to that link's QBER.
The stages are coupled through the dead time and through the Raman counts of
the loaded FBG anchor, so the whole set is iterated to a fixed point.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml
from scipy import optimize

from . import dps, odn
from .detector import SpadParams
from .raman import RamanProfile, load_raman_profile
from .spectral import FILTER_PRESETS, FilterSpec, build_channel_plan, preset_filter

CALIBRATION_VERSION = 1
NGPON2_QUANTUM_NM = 1310.55
GPON_QUANTUM_NM = 1550.12


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LitPoint:
    """Measured raw rate and QBER of a lit-PON link, unloaded or fully loaded."""

    standard: str
    filter_name: str
    quantum_nm: float
    raw_rate: float
    qber: float
    loaded: bool = False


@dataclass(frozen=True)
class Anchors:
    back_to_back: tuple[tuple[float, float], ...] = ((12.0, 10.1e3), (20.0, 3.4e3))
    lit: tuple[LitPoint, ...] = (
        LitPoint("NGPON2", "lan_wdm", NGPON2_QUANTUM_NM, 3.25e3, 0.0316),
        LitPoint("GPON", "dwdm", GPON_QUANTUM_NM, 2.12e3, 0.0369),
        LitPoint("NGPON2", "fbg", NGPON2_QUANTUM_NM, 2.5e3, 0.0328, loaded=True),
    )
    raman_counts_lan_wdm: float = 1730.0
    loaded_lan_wdm_qber: float = 0.0755


@dataclass(frozen=True)
class Calibration:
    raman_scale: float
    receiver_insertion_loss_db: float
    dead_time_s: float
    window_accept: float
    dark_rate_cps: float
    filter_insertion_loss_db: dict = field(default_factory=dict)
    ngpon2_power_dbm: float = 3.0
    version: int = CALIBRATION_VERSION

    @property
    def gated_dark_rate(self) -> float:
        return self.dark_rate_cps * self.window_accept

    def spad(self, **overrides) -> SpadParams:
        params = dict(dark_rate=self.dark_rate_cps, dead_time=self.dead_time_s, window_accept=self.window_accept)
        return SpadParams(**{**params, **overrides})

    def link(self, **overrides) -> dps.DpsLinkParams:
        return dps.DpsLinkParams(**{"receiver_insertion_loss_db": self.receiver_insertion_loss_db, **overrides})

    def profile(self, path: str | Path | None = None) -> RamanProfile:
        return load_raman_profile(path, self.raman_scale)

    def filter(self, name: str, center_nm: float, **overrides) -> FilterSpec:
        il = self.filter_insertion_loss_db.get(name, FILTER_PRESETS[name]["insertion_loss_db"])
        return preset_filter(name, center_nm, **{"insertion_loss_db": il, **overrides})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["filter_insertion_loss_db"] = dict(sorted(self.filter_insertion_loss_db.items()))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Calibration":
        data = dict(data)
        version = data.get("version", CALIBRATION_VERSION)
        if version != CALIBRATION_VERSION:
            raise CalibrationError(f"unsupported calibration version {version}")
        data["filter_insertion_loss_db"] = dict(data.get("filter_insertion_loss_db", {}))
        return cls(**data)


def default_calibration_path() -> Path:
    return Path(str(resources.files("ponqkd") / "data" / "calibration.yaml"))


def load_calibration(path: str | Path | None = None) -> Calibration:
    with open(path or default_calibration_path(), encoding="utf-8") as fh:
        return Calibration.from_dict(yaml.safe_load(fh)["calibration"])


def save_calibration(cal: Calibration, path: str | Path) -> None:
    doc = {"calibration": cal.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# Fitted by `python -m ponqkd.calibrate`; regenerate rather than edit.\n")
        yaml.safe_dump(doc, fh, sort_keys=False)


# -- stage fits -------------------------------------------------------------

def _detected_signal(link: dps.DpsLinkParams, budget_db: float, efficiency: float) -> float:
    return dps.signal_photon_rate(link, budget_db) * efficiency


def fit_receiver(points, gated_dark: float, base: dps.DpsLinkParams, efficiency: float = 0.1):
    """Receiver insertion loss (dB) and dead time (s) through two (budget, raw) points.

    With x the unsaturated count rate, 1/raw = 1/x + tau, so the difference of
    the two reciprocals does not involve tau.
    """
    (b1, r1), (b2, r2) = points

    def x(il, budget):
        return _detected_signal(replace(base, receiver_insertion_loss_db=il), budget, efficiency) + gated_dark

    def gap(il):
        return (1 / r1 - 1 / r2) - (1 / x(il, b1) - 1 / x(il, b2))

    try:
        il = optimize.brentq(gap, 0.0, 40.0, xtol=1e-12)
    except ValueError as exc:
        raise CalibrationError("back-to-back points admit no receiver loss in [0, 40] dB") from exc
    tau = 1 / r1 - 1 / x(il, b1)
    if tau < 0:
        raise CalibrationError("back-to-back points imply a negative dead time")
    return il, tau


def unsaturated_rate(raw: float, tau: float) -> float:
    if raw * tau >= 1:
        raise CalibrationError(f"raw rate {raw} exceeds the dead-time limit")
    return raw / (1 - raw * tau)


def fit_filter_loss(point: LitPoint, link: dps.DpsLinkParams, topology: odn.PonTopology, tau: float,
                    gated_noise: float, efficiency: float = 0.1) -> float:
    """Insertion loss of ``point``'s filter that reproduces its raw rate.

    ``gated_noise`` is every non-signal count ahead of saturation: gated dark
    counts plus, on a loaded link, gated Raman counts.
    """
    signal = (unsaturated_rate(point.raw_rate, tau) - gated_noise) / efficiency
    if signal <= 0:
        raise CalibrationError(f"{point.filter_name}: raw rate below the noise-count level")
    ref = dps.signal_photon_rate(link, 0.0)
    budget = 10 * math.log10(ref / signal)
    return budget - float(odn.path_loss(topology, "onu_to_co", point.quantum_nm)) - link.waveband_loss_db


def fit_gated_dark(points, tau: float, error: float, gated_raman=None) -> float:
    """Least-squares gated dark rate from lit-link QBERs.

    Before saturation QBER = e + (n_d + g) (0.5 - e) / x, with x fixed by the
    raw rate and g the gated Raman counts of the point, so the model is
    linear in n_d.
    """
    gated_raman = gated_raman or [0.0] * len(points)
    c = [(0.5 - error) / unsaturated_rate(p.raw_rate, tau) for p in points]
    num = sum(ci * (p.qber - error - ci * g) for ci, p, g in zip(c, points, gated_raman))
    den = sum(ci * ci for ci in c)
    n_d = num / den
    if n_d < 0:
        raise CalibrationError("lit-link QBERs lie below the intrinsic error")
    return n_d


def _lit_plan(point: LitPoint, ngpon2_power_dbm: float):
    plan = build_channel_plan(point.standard, point.quantum_nm, ngpon2_power_dbm=ngpon2_power_dbm)
    return plan if point.loaded else plan.select([])


def fit(anchors: Anchors = Anchors(), topology: odn.PonTopology | None = None,
        base_link: dps.DpsLinkParams = dps.DpsLinkParams(), efficiency: float = 0.1,
        ngpon2_power_dbm: float = 3.0, raman_profile_path: str | Path | None = None,
        tol: float = 1e-10, max_iter: int = 200) -> Calibration:
    """Run every calibration stage to a joint fixed point and return the constants."""
    topology = topology or odn.PonTopology()
    lan_plan = build_channel_plan("NGPON2", NGPON2_QUANTUM_NM, ngpon2_power_dbm=ngpon2_power_dbm)
    unit_profile = load_raman_profile(raman_profile_path, 1.0)
    gated_raman = [0.0] * len(anchors.lit)
    n_d, w = 90.0, 1.0
    for _ in range(max_iter):
        # the receiver fit needs n_d, the n_d fit needs tau: iterate those two first
        for _ in range(max_iter):
            il, tau = fit_receiver(anchors.back_to_back, n_d, base_link, efficiency)
            new = fit_gated_dark(anchors.lit, tau, base_link.error, gated_raman)
            converged = abs(new - n_d) <= tol * new
            n_d = new
            if converged:
                break
        il, tau = fit_receiver(anchors.back_to_back, n_d, base_link, efficiency)
        link = replace(base_link, receiver_insertion_loss_db=il)
        filter_il = {p.filter_name: fit_filter_loss(p, link, topology, tau, n_d + g, efficiency)
                     for p, g in zip(anchors.lit, gated_raman)}
        if any(v < 0 for v in filter_il.values()):
            raise CalibrationError(f"negative filter insertion loss fitted: {filter_il}")

        cal = Calibration(1.0, il, tau, 1.0, n_d, filter_il, ngpon2_power_dbm)
        lan = cal.filter("lan_wdm", NGPON2_QUANTUM_NM)
        unit = dps.raman_rate_at_spad(link, topology, lan_plan, lan, unit_profile) * efficiency
        scale = anchors.raman_counts_lan_wdm / unit
        profile = unit_profile.with_scale(scale)

        def qber_gap(w):
            spad = SpadParams(efficiency=efficiency, dark_rate=n_d / w, dead_time=tau, window_accept=w)
            return dps.evaluate_link(link, topology, lan_plan, lan, spad, profile).qber - anchors.loaded_lan_wdm_qber

        if qber_gap(1.0) < 0 or qber_gap(1e-4) > 0:
            raise CalibrationError("loaded LAN-WDM QBER cannot be matched by any window acceptance")
        w_new = optimize.brentq(qber_gap, 1e-4, 1.0, xtol=1e-14)
        spad = SpadParams(efficiency=efficiency, dark_rate=n_d / w_new, dead_time=tau, window_accept=w_new)
        new_raman = []
        for p in anchors.lit:
            if not p.loaded:
                new_raman.append(0.0)
                continue
            report = dps.evaluate_link(link, topology, _lit_plan(p, ngpon2_power_dbm),
                                       cal.filter(p.filter_name, p.quantum_nm), spad, profile)
            new_raman.append(report.raman_counts * w_new)
        done = abs(w_new - w) <= tol * w_new and all(
            abs(a - b) <= tol * max(a, 1e-300) for a, b in zip(new_raman, gated_raman))
        w, gated_raman = w_new, new_raman
        if done:
            return Calibration(scale, il, tau, w, n_d / w, filter_il, ngpon2_power_dbm)
    raise CalibrationError("calibration did not reach a fixed point")


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Fit the calibration constants and write them as YAML.")
    parser.add_argument("--out", type=Path, default=default_calibration_path())
    args = parser.parse_args(argv)
    cal = fit()
    save_calibration(cal, args.out)
    for key, value in cal.to_dict().items():
        print(f"{key}: {value}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

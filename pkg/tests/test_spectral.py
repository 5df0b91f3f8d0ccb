from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from ponqkd import spectral
from ponqkd.spectral import (
    BANDS,
    C_NM_THZ,
    ConfigurationError,
    FilterSpec,
    SpectralDomainError,
    band_of,
    build_channel_plan,
    filter_transmission,
    integrate_inband,
    preset_filter,
    wavelength_to_frequency,
)


@pytest.mark.parametrize("wl", [1550.12, 1310.0, 1489.0, 1596.0])
def test_frequency_matches_c_over_lambda(wl):
    assert wavelength_to_frequency(wl) == pytest.approx(299792.458 / wl, rel=1e-12)


def test_frequency_values():
    # c / 1550.12 nm is 193.3995 THz; 193.414 THz belongs to 1550.00 nm
    assert wavelength_to_frequency(1550.12) == pytest.approx(193.39952, abs=1e-4)
    assert wavelength_to_frequency(1550.0) == pytest.approx(193.41449, abs=1e-4)
    assert wavelength_to_frequency(1310.0) == pytest.approx(228.849, abs=1e-3)


def test_frequency_round_trip():
    wl = np.linspace(1200.0, 1700.0, 501)
    back = spectral.frequency_to_wavelength(wavelength_to_frequency(wl))
    assert np.max(np.abs(back / wl - 1)) < 1e-9


@pytest.mark.parametrize("wl", [1199.9, 1700.1, float("nan"), -1.0])
def test_out_of_window_wavelength_rejected(wl):
    with pytest.raises(SpectralDomainError):
        wavelength_to_frequency(wl)


def test_bands_partition_the_o_to_l_range():
    bands = sorted(BANDS.values(), key=lambda b: b.low_nm)
    assert bands[0].low_nm == 1260.0 and bands[-1].high_nm == 1625.0
    for a, b in zip(bands, bands[1:]):
        assert a.high_nm == b.low_nm
    for wl in np.arange(1260.0, 1625.01, 0.25):
        assert sum(wl in b for b in bands) + (wl == 1625.0) == 1
        assert band_of(wl) is not None
    assert band_of(1360.0) == "E"
    assert band_of(1625.0) == "L"
    assert band_of(1250.0) is None


def test_gpon_preset():
    plan = build_channel_plan("GPON", 1550.12)
    by_name = {ch.name: ch for ch in plan.channels}
    assert len(plan.channels) == 2
    ds, us = by_name["GPON-DS"], by_name["GPON-US"]
    assert (ds.wavelength_nm, ds.power_dbm, ds.direction) == (1489.0, 2.2, "downstream")
    assert (us.wavelength_nm, us.power_dbm, us.direction, us.mode) == (1310.0, 0.3, "upstream", "tdma")


def test_ngpon2_preset():
    plan = build_channel_plan("NGPON2", 1310.55)
    assert len(plan.channels) == 19
    groups = {g: [ch for ch in plan.channels if ch.group == g] for g in ("DS", "FH", "US")}
    assert [len(groups[g]) for g in ("DS", "FH", "US")] == [4, 11, 4]
    assert all(BANDS["L"].low_nm <= ch.wavelength_nm < 1625 for ch in groups["DS"])
    assert all(1550 <= ch.wavelength_nm <= 1560 for ch in groups["FH"])
    assert all(1532 <= ch.wavelength_nm <= 1535 for ch in groups["US"])
    assert all(ch.mode == "tdma" for ch in groups["US"])
    # 100 GHz grid inside each group
    for chans in groups.values():
        nu = sorted(C_NM_THZ / ch.wavelength_nm for ch in chans)
        assert np.allclose(np.diff(nu), 0.1, atol=2e-4)


def test_power_overrides_and_selection():
    plan = build_channel_plan("NGPON2", 1310.55, {"US": -1.0, "NGPON2-US2": 5.0, "all": 0.0})
    powers = {ch.name: ch.power_dbm for ch in plan.channels}
    assert powers["NGPON2-US1"] == -1.0
    assert powers["NGPON2-US2"] == 5.0
    assert powers["NGPON2-DS1"] == 0.0
    assert len(plan.select(["DS", "FH"]).channels) == 15
    assert plan.select([]).channels == ()
    with pytest.raises(ConfigurationError):
        build_channel_plan("GPON", 1550.12, {"nope": 1.0})


def test_quantum_wavelength_collision():
    with pytest.raises(ConfigurationError):
        build_channel_plan("GPON", 1489.0)
    with pytest.raises(ConfigurationError):
        build_channel_plan("mixed", 1550.12)


def test_channel_invariants():
    with pytest.raises(ConfigurationError):
        spectral.ClassicalChannel(1490.0, 2.0, "downstream", "tdma")
    with pytest.raises(ConfigurationError):
        spectral.ClassicalChannel(1490.0, 15.5, "downstream")


def test_fbg_center_and_stopband():
    f = FilterSpec("fbg", 1310.0, 14.6, shape="rectangular", insertion_loss_db=0.0)
    assert filter_transmission(f, 1310.0) == 1.0
    off = C_NM_THZ / (C_NM_THZ / 1310.0 - 0.050)
    assert filter_transmission(f, off) <= 1e-3


def test_insertion_loss_at_center():
    f = preset_filter("dwdm", 1550.12, insertion_loss_db=1.0)
    assert filter_transmission(f, 1550.12) == pytest.approx(10 ** -0.1)


def test_flat_top_within_3db_at_300ghz():
    f = preset_filter("lan_wdm", 1310.55, insertion_loss_db=0.0)
    nu0 = C_NM_THZ / 1310.55
    for sign in (-1, 1):
        wl = C_NM_THZ / (nu0 + sign * 0.3)
        # oracle: exp(-ln2 * (300/400)^4)
        expected = math.exp(-math.log(2) * 0.75 ** 4)
        assert filter_transmission(f, wl) == pytest.approx(expected, rel=1e-9)
        assert 10 * math.log10(filter_transmission(f, wl)) > -3.0


def test_tabulated_filter_round_trip(tmp_path):
    path = tmp_path / "curve.txt"
    path.write_text("# wl dB\n1309.0 -40\n1310.0 -3.5\n1310.5 -0.5\n1311.0 -3.5\n1312.0 -40\n")
    f = spectral.load_filter_curve(path)
    assert f.center_nm == 1310.5
    assert f.insertion_loss_db == pytest.approx(0.5)
    assert filter_transmission(f, 1310.5) == pytest.approx(10 ** -0.05)
    assert filter_transmission(f, 1310.25) == pytest.approx(10 ** (-2.0 / 10))


def test_tabulated_filter_must_be_monotone(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1309 -40\n1310 -1\n1310.5 -20\n1311 -0.5\n1312 -40\n")
    with pytest.raises(ConfigurationError):
        spectral.load_filter_curve(path)


def test_integral_flat_rectangular():
    f = FilterSpec("box", 1550.0, 100.0, shape="rectangular")
    assert integrate_inband(3.0, f) == pytest.approx(3.0 * f.bandwidth_nm, rel=1e-9)


def test_integral_zero_density():
    assert integrate_inband(0.0, preset_filter("fbg", 1310.55)) == 0.0


def test_integral_fbg_example():
    f = FilterSpec("fbg", 1310.0, 14.6, shape="rectangular")
    # oracle: d0 * lambda^2 * dnu / c
    expected = 100.0 * 1310.0 ** 2 * 14.6e-3 / C_NM_THZ
    assert expected == pytest.approx(8.35, abs=0.01)
    assert integrate_inband(100.0, f) == pytest.approx(expected, rel=1e-3)


def test_integral_of_supergaussian_against_dense_trapezoid():
    f = preset_filter("dwdm", 1550.12, insertion_loss_db=0.7)

    def density(wl):
        return 1.0 + 0.5 * np.sin(wl * 40.0)

    lo, hi = spectral.integration_window(f)
    x = np.linspace(lo, hi, 400001)
    oracle = trapezoid(density(x) * filter_transmission(f, x), x)
    assert integrate_inband(density, f) == pytest.approx(oracle, rel=1e-6)


def test_integral_rejects_negative_density():
    with pytest.raises(SpectralDomainError):
        integrate_inband(lambda wl: -np.ones_like(wl), preset_filter("fbg", 1310.55))


def test_narrower_filter_passes_less():
    counts = [integrate_inband(1.0, preset_filter(n, 1310.55, insertion_loss_db=0.0), window=(1300.0, 1320.0))
              for n in ("fbg", "dwdm", "lan_wdm")]
    assert counts[0] < counts[1] < counts[2]


def test_presets_reject_30db():
    for name in spectral.FILTER_PRESETS:
        f = preset_filter(name, 1310.55)
        assert f.stopband_rejection_db >= 30.0
        assert filter_transmission(f, 1300.0) <= 10 ** (-f.insertion_loss_db / 10) * 10 ** -3 * (1 + 1e-12)

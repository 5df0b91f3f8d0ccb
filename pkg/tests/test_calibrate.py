from __future__ import annotations

import math

import pytest
from scipy import optimize

from ponqkd import calibrate, dps, odn
from ponqkd.detector import SpadParams


@pytest.fixture(scope="module")
def refit():
    return calibrate.fit()


def test_frozen_file_matches_a_fresh_fit(refit, cal):
    assert refit.filter_insertion_loss_db.keys() == cal.filter_insertion_loss_db.keys()
    for key, value in refit.to_dict().items():
        if isinstance(value, dict):
            for name, il in value.items():
                assert cal.filter_insertion_loss_db[name] == pytest.approx(il, rel=1e-8)
        else:
            assert getattr(cal, key) == pytest.approx(value, rel=1e-8), key


def test_two_point_receiver_fit_against_direct_solve(cal):
    """Solve both saturation equations for (IL, tau) jointly and compare."""
    n_d = cal.gated_dark_rate

    def equations(x):
        il, tau = x
        out = []
        for budget, raw in ((12.0, 10.1e3), (20.0, 3.4e3)):
            sig = 1e9 * 0.1 * 10 ** (-(budget + il) / 10) * 0.5 * 0.1 + n_d
            out.append(sig / (1 + sig * tau) / raw - 1)
        return out

    il, tau = optimize.fsolve(equations, [10.0, 5e-5], xtol=1e-13)
    assert cal.receiver_insertion_loss_db == pytest.approx(il, rel=1e-7)
    assert cal.dead_time_s == pytest.approx(tau, rel=1e-6)
    assert cal.receiver_insertion_loss_db == pytest.approx(10.6, abs=0.3)
    assert cal.dead_time_s == pytest.approx(62e-6, rel=0.05)


def test_gated_dark_is_least_squares_minimum():
    points = calibrate.Anchors().lit[:2]
    tau, e = 60e-6, 0.0182
    n_d = calibrate.fit_gated_dark(points, tau, e)

    def sse(n):
        total = 0.0
        for p in points:
            x = p.raw_rate / (1 - p.raw_rate * tau)
            total += (e + n * (0.5 - e) / x - p.qber) ** 2
        return total

    best = optimize.minimize_scalar(sse, bounds=(0, 1000), method="bounded", options={"xatol": 1e-9})
    assert n_d == pytest.approx(best.x, rel=1e-6)


def test_fitted_constants_reproduce_their_anchors(cal, link, spad, topo, profile):
    for budget, raw in calibrate.Anchors().back_to_back:
        assert dps.raw_rate_and_qber(link, budget, 0.0, spad)[0] == pytest.approx(raw, rel=1e-8)
    for point in calibrate.Anchors().lit:
        plan = calibrate._lit_plan(point, cal.ngpon2_power_dbm)
        r = dps.evaluate_link(link, topo, plan, cal.filter(point.filter_name, point.quantum_nm), spad, profile)
        assert r.raw_rate == pytest.approx(point.raw_rate, rel=1e-6)


def test_gated_dark_near_ninety(cal):
    assert cal.gated_dark_rate == pytest.approx(90.0, rel=0.05)
    assert 0 < cal.window_accept <= 1


def test_round_trip_dict_and_file(cal, tmp_path):
    assert calibrate.Calibration.from_dict(cal.to_dict()) == cal
    path = tmp_path / "cal.yaml"
    calibrate.save_calibration(cal, path)
    assert path.read_text().startswith("#")
    assert calibrate.load_calibration(path) == cal


def test_version_mismatch(cal):
    data = cal.to_dict() | {"version": 2}
    with pytest.raises(calibrate.CalibrationError):
        calibrate.Calibration.from_dict(data)


def test_unreachable_back_to_back_points():
    with pytest.raises(calibrate.CalibrationError):
        calibrate.fit_receiver(((12.0, 10.1e3), (20.0, 20e3)), 90.0, dps.DpsLinkParams())


def test_raw_rate_beyond_dead_time_limit():
    with pytest.raises(calibrate.CalibrationError):
        calibrate.unsaturated_rate(2e4, 1e-4)


def test_filter_loss_inverts_the_link_model(cal, link, topo, spad):
    point = calibrate.LitPoint("GPON", "dwdm", 1550.12, 2.12e3, 0.0369)
    il = calibrate.fit_filter_loss(point, link, topo, cal.dead_time_s, cal.gated_dark_rate)
    budget = float(odn.path_loss(topo, "onu_to_co", 1550.12)) + link.waveband_loss_db + il
    raw, _ = dps.raw_rate_and_qber(link, budget, 0.0, spad)
    assert raw == pytest.approx(2.12e3, rel=1e-9)
    assert math.isfinite(il) and il >= 0


def test_calibration_builders(cal):
    assert isinstance(cal.spad(), SpadParams)
    assert cal.spad(efficiency=0.2).efficiency == 0.2
    assert cal.link().receiver_insertion_loss_db == cal.receiver_insertion_loss_db
    assert cal.filter("fbg", 1310.55).insertion_loss_db == cal.filter_insertion_loss_db["fbg"]
    assert cal.profile().scale == cal.raman_scale


def test_module_entry_point(tmp_path, capsys):
    out = tmp_path / "c.yaml"
    assert calibrate.main(["--out", str(out)]) == 0
    assert "raman_scale" in capsys.readouterr().out
    assert calibrate.load_calibration(out).raman_scale > 0

from __future__ import annotations

import textwrap

import pytest

from ponqkd import config
from ponqkd.config import ConfigError, dump_scenario, list_presets, load_scenario, loads_scenario

PRESETS = list_presets()


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def test_all_figure_presets_ship():
    for prefix in ("fig2d", "fig3a", "fig3b", "fig3c", "fig3d", "fig4a", "fig4b"):
        assert any(p.startswith(prefix) for p in PRESETS), prefix


def test_dark_preset():
    cfg = load_scenario("fig3c_dark_ngpon2")
    plan = cfg.build_plan()
    assert plan.quantum_wavelength_nm == 1310.55
    assert plan.channels == ()
    sweep = cfg.section("sweep")
    assert sweep["axis"] == "budget_db"
    assert min(sweep["values"]) == 6 and max(sweep["values"]) == 22


def test_fbg_preset():
    cfg = load_scenario("fig4b_lit_ngpon2_fbg")
    assert len(cfg.build_plan().channels) == 19
    f = cfg.build_filter()
    assert f.name == "fbg" and f.bandwidth_ghz == 14.6 and f.center_nm == 1310.55


@pytest.mark.parametrize("name", PRESETS)
def test_preset_round_trip(name):
    cfg = load_scenario(name)
    again = loads_scenario(dump_scenario(cfg))
    assert again == cfg
    assert again.digest == cfg.digest


def test_negative_mu_names_the_field(tmp_path):
    path = write(tmp_path, "bad.yaml", """\
        include: calibration.yaml
        name: bad
        mode: analytic
        budget_db: 12
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55, groups: []}
        dps: {mu: -0.1}
        """)
    with pytest.raises(ConfigError) as exc:
        load_scenario(path)
    assert any("dps.mu" in e for e in exc.value.errors)


def test_all_violations_reported(tmp_path):
    path = write(tmp_path, "bad.yaml", """\
        include: calibration.yaml
        name: bad
        mode: analytic
        budget_db: -3
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55, groups: []}
        dps: {mu: 2.0, ec_efficiency: 0.5}
        spad: {window_accept: 0}
        colour: red
        """)
    with pytest.raises(ConfigError) as exc:
        load_scenario(path)
    text = "\n".join(exc.value.errors)
    for field in ("budget_db", "dps.mu", "dps.ec_efficiency", "spad.window_accept", "colour"):
        assert field in text, field
    assert len(exc.value.errors) >= 5


def test_unknown_nested_key(tmp_path):
    path = write(tmp_path, "bad.yaml", """\
        include: calibration.yaml
        name: bad
        mode: analytic
        budget_db: 12
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55, groups: [], colour: red}
        """)
    with pytest.raises(ConfigError, match="colour"):
        load_scenario(path)


def test_yaml_error_carries_line(tmp_path):
    path = write(tmp_path, "broken.yaml", "name: x\nmode: analytic\nplan: {standard: GPON\n  quantum: [1\n")
    with pytest.raises(ConfigError) as exc:
        load_scenario(path)
    assert f"{path}:" in exc.value.errors[0]
    assert "YAML parse error" in exc.value.errors[0]
    line = int(exc.value.errors[0].split(f"{path}:")[1].split(":")[0])
    assert 3 <= line <= 5


def test_missing_file():
    with pytest.raises(ConfigError, match="no such scenario"):
        load_scenario("does_not_exist_anywhere")


def test_include_cycle(tmp_path):
    write(tmp_path, "a.yaml", "include: b.yaml\nname: a\n")
    write(tmp_path, "b.yaml", "include: a.yaml\n")
    with pytest.raises(ConfigError, match="cycle"):
        load_scenario(tmp_path / "a.yaml")


def test_include_overrides_are_deep_merged(tmp_path):
    path = write(tmp_path, "s.yaml", """\
        include: fig4b_lit_ngpon2_fbg
        name: s
        calibration: {window_accept: 0.5}
        """)
    cfg = load_scenario(path)
    base = load_scenario("fig4b_lit_ngpon2_fbg")
    assert cfg.calibration.window_accept == 0.5
    assert cfg.calibration.dead_time_s == base.calibration.dead_time_s


def test_environment_directory_is_searched(tmp_path, monkeypatch):
    write(tmp_path, "mine.yaml", """\
        include: calibration.yaml
        name: mine
        mode: analytic
        budget_db: 14
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55, groups: []}
        """)
    monkeypatch.setenv(config.SCENARIO_DIR_ENV, str(tmp_path))
    assert load_scenario("mine").budget_db == 14


def test_link_modes_need_a_plan():
    with pytest.raises(ConfigError, match="plan"):
        loads_scenario("name: x\nmode: analytic\ncalibration: {raman_scale: 1, receiver_insertion_loss_db: 1, "
                       "dead_time_s: 0, window_accept: 1, dark_rate_cps: 0}\n")


def test_lit_link_needs_a_filter():
    base = load_scenario("fig4b_lit_ngpon2_fbg").document
    doc = {k: v for k, v in base.items() if k != "filter"}
    with pytest.raises(ConfigError, match="filter"):
        config.validate_document(doc)


def test_calibration_block_is_versioned():
    doc = load_scenario("fig4b_lit_ngpon2_fbg").document
    doc["calibration"]["version"] = 7
    with pytest.raises(ConfigError, match="calibration.version"):
        config.validate_document(doc)


def test_overrides_revalidate():
    cfg = load_scenario("fig4b_lit_ngpon2_fbg")
    assert cfg.with_overrides(topology={"split_n": 32}).build_topology().split_n == 32
    with pytest.raises(ConfigError):
        cfg.with_overrides(topology={"split_n": 0})


def test_range_errors_surface_at_load(tmp_path):
    path = write(tmp_path, "bad.yaml", """\
        include: calibration.yaml
        name: bad
        mode: analytic
        plan: {standard: GPON, quantum_wavelength_nm: 1489.2}
        filter: {preset: dwdm}
        """)
    with pytest.raises(ConfigError, match="collides"):
        load_scenario(path)


def test_custom_filter_and_topology(tmp_path):
    path = write(tmp_path, "s.yaml", """\
        include: calibration.yaml
        name: s
        mode: analytic
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55}
        filter: {bandwidth_ghz: 50, shape: rectangular, insertion_loss_db: 2}
        topology: {feeder_us_km: 5, drop_km: 1, split_n: 8}
        """)
    cfg = load_scenario(path)
    f = cfg.build_filter()
    assert (f.name, f.bandwidth_ghz, f.shape, f.center_nm) == ("custom", 50, "rectangular", 1310.55)
    t = cfg.build_topology()
    assert (t.reach_km, t.split_n, t.n_onus_active) == (6, 8, 8)


def test_tabulated_filter_file(tmp_path):
    write(tmp_path, "fbg.txt", "1310.3 -40\n1310.5 -3\n1310.55 -0.5\n1310.6 -3\n1310.8 -40\n")
    path = write(tmp_path, "s.yaml", """\
        include: calibration.yaml
        name: s
        mode: analytic
        plan: {standard: NGPON2, quantum_wavelength_nm: 1310.55}
        filter: {preset: fbg, curve_file: fbg.txt}
        """)
    f = load_scenario(path).build_filter()
    assert f.shape == "tabulated" and f.center_nm == 1310.55

"""Command-line runner for scenario files.

    ponqkd validate FILE...
    ponqkd run FILE [--seed N] [--out DIR] [--format csv|summary]
    ponqkd sweep FILE --axis AXIS --values V [V ...]
    ponqkd plan FILE [--take-rates T [T ...]]
    ponqkd list

FILE is a path or the name of a preset; ``$PONQKD_SCENARIO_DIR`` is searched
before the packaged presets.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, dps, planner
from .config import SWEEP_AXES, ConfigError, ScenarioConfig, list_presets, load_scenario
from .montecarlo import monte_carlo_run

LINK_COLUMNS = (
    ("budget_dB", lambda r: r.budget_db),
    ("raw_rate_bit_per_s", lambda r: r.raw_rate),
    ("qber", lambda r: r.qber),
    ("raman_counts_per_s", lambda r: r.raman_counts),
    ("signal_registered_per_s", lambda r: r.signal_counts),
    ("noise_registered_per_s", lambda r: r.noise_counts),
    ("secure_fraction_bit_per_bit", lambda r: r.secure_fraction),
    ("secure_rate_bit_per_s", lambda r: r.secure_rate),
    ("secure_bits_per_pulse", lambda r: r.secure_bits_per_pulse),
)
MC_COLUMNS = ("mc_raw_rate_bit_per_s", "mc_raw_low_bit_per_s", "mc_raw_high_bit_per_s",
              "mc_qber", "mc_qber_low", "mc_qber_high", "mc_pulses")
AXIS_COLUMNS = {"budget_db": "budget_setting_dB", "fiber_length": "reach_km", "split_n": "split_n",
                "take_rate": "take_rate"}
SPECTRUM_HEADER = ("wavelength_nm",) + tuple(f"{c}_counts_per_s_per_nm" for c in planner.COMPONENTS)


class RunError(RuntimeError):
    pass


def fmt(x) -> str:
    """Locale-free number formatting that is stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x != x:
        return "nan"
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


@dataclass
class RunArtifact:
    name: str
    mode: str
    header: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    extra: dict[str, tuple[tuple[str, ...], list[tuple]]] = field(default_factory=dict)

    def csv_text(self, header=None, rows=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header or self.header)
        for row in rows if rows is not None else self.rows:
            writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
        return buf.getvalue()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.csv_text().encode()).hexdigest()

    def summary(self) -> str:
        lines = [f"scenario: {self.name}", f"mode: {self.mode}"]
        lines += [f"{k}: {v}" for k, v in self.provenance.items()]
        lines.append(f"artifact_sha256: {self.digest}")
        for row in self.rows:
            lines.append("  " + ", ".join(f"{h}={v if isinstance(v, str) else fmt(v)}"
                                          for h, v in zip(self.header, row)))
        return "\n".join(lines) + "\n"


class _Sink:
    """Writes CSV rows to ``out`` as they are produced so partial sweeps survive an abort."""

    def __init__(self, path: Path | None, header: Sequence[str]):
        self.fh = None
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(path, "w", newline="", encoding="utf-8")
            self.writer = csv.writer(self.fh, lineterminator="\n")
            self.writer.writerow(header)

    def write(self, row):
        if self.fh:
            self.writer.writerow([v if isinstance(v, str) else fmt(v) for v in row])
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


# -- evaluation ---------------------------------------------------------------

def _noise_rate(cfg: ScenarioConfig) -> float:
    plan, filt = cfg.build_plan(), cfg.build_filter()
    if not plan.channels:
        return 0.0
    if filt is None:
        raise RunError("a loaded plan needs a receive filter")
    return dps.raman_rate_at_spad(cfg.build_link(), cfg.build_topology(), plan, filt, cfg.build_profile())


def evaluate(cfg: ScenarioConfig) -> dps.LinkReport:
    """Analytic report for one scenario: back-to-back if it sets ``budget_db``, lit link otherwise."""
    link, spad = cfg.build_link(), cfg.build_spad()
    if cfg.budget_db is not None:
        return dps.evaluate_back_to_back(link, cfg.budget_db, spad, _noise_rate(cfg))
    filt = cfg.build_filter()
    if filt is None:
        raise RunError("lit-link scenarios need a filter section")
    return dps.evaluate_link(link, cfg.build_topology(), cfg.build_plan(), filt, spad, cfg.build_profile())


def _link_row(report: dps.LinkReport) -> tuple:
    return tuple(get(report) for _, get in LINK_COLUMNS)


def _with_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "budget_db":
        if cfg.budget_db is None:
            raise RunError("budget sweeps need a back-to-back scenario (set budget_db)")
        return cfg.with_overrides(budget_db=float(value))
    if axis == "fiber_length":
        if value < 0:
            raise RunError("fiber length must be >= 0")
        t = cfg.build_topology().with_reach(float(value))
        return cfg.with_overrides(topology={"feeder_us_km": t.feeder_us.length_km,
                                            "feeder_ds_km": t.feeder_ds.length_km,
                                            "drop_km": t.drop.length_km})
    if axis == "split_n":
        if value != int(value) or value < 1:
            raise RunError(f"split_n must be a positive integer, got {value}")
        topo = cfg.section("topology")
        active = min(topo.get("n_onus_active", int(value)), int(value))
        return cfg.with_overrides(topology={"split_n": int(value), "n_onus_active": active})
    raise RunError(f"axis {axis!r} is not a link sweep axis")


def run_analytic(cfg: ScenarioConfig) -> RunArtifact:
    header = tuple(h for h, _ in LINK_COLUMNS)
    art = RunArtifact(cfg.name, "analytic", header)
    art.rows.append(_link_row(evaluate(cfg)))
    return art


def run_monte_carlo(cfg: ScenarioConfig, seed: int) -> RunArtifact:
    link, spad = cfg.build_link(), cfg.build_spad()
    report = evaluate(cfg)
    mc = cfg.section("monte_carlo")
    n = int(mc.get("n_pulses", 10_000_000))
    kwargs = {"block_pulses": mc["block_pulses"]} if "block_pulses" in mc else {}
    noise = _noise_rate(cfg)
    est = monte_carlo_run(link, report.budget_db, noise, spad, n, seed, **kwargs)
    header = tuple(h for h, _ in LINK_COLUMNS) + MC_COLUMNS
    row = _link_row(report) + (est.raw_rate, *est.raw_interval, est.qber, *est.qber_interval, est.n_pulses)
    return RunArtifact(cfg.name, "monte_carlo", header, [row])


def run_sweep(cfg: ScenarioConfig, axis: str, values: Sequence[float], out_csv: Path | None = None) -> RunArtifact:
    if len(values) == 0:
        raise RunError("sweep needs at least one value")
    if axis not in SWEEP_AXES:
        raise RunError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    if axis == "take_rate":
        return run_plan(cfg, values, out_csv)
    header = (AXIS_COLUMNS[axis],) + tuple(h for h, _ in LINK_COLUMNS)
    art = RunArtifact(cfg.name, "sweep", header)
    sink = _Sink(out_csv, header)
    try:
        # rows are emitted in ascending axis order
        for v in sorted(values):
            row = (v,) + _link_row(evaluate(_with_axis(cfg, axis, v)))
            art.rows.append(row)
            sink.write(row)
    finally:
        sink.close()
    return art


def run_plan(cfg: ScenarioConfig, take_rates: Sequence[float] | None = None,
             out_csv: Path | None = None) -> RunArtifact:
    rates = list(take_rates if take_rates is not None else cfg.section("planner").get("take_rates", [0.0]))
    if not rates:
        raise RunError("plan needs at least one take rate")
    mixed = cfg.build_mixed_tree()
    results = planner.take_rate_sweep(mixed, rates)
    art = RunArtifact(cfg.name, "plan", planner.PLAN_CSV_HEADER)
    for r in results:
        art.rows.append((r.take_rate, r.lambda_opt, r.band or "", r.noise_at_opt))
    if cfg.section("planner").get("emit_spectrum"):
        grid = planner.scan_grid(mixed.grid_step_nm)
        spectra = planner.source_spectra(mixed, grid)
        rows = [(wl,) + tuple(spectra[c][i] for c in planner.COMPONENTS) for i, wl in enumerate(grid)]
        art.extra["spectrum"] = (SPECTRUM_HEADER, rows)
    if out_csv is not None:
        sink = _Sink(out_csv, art.header)
        for row in art.rows:
            sink.write(row)
        sink.close()
    return art


def run(cfg: ScenarioConfig, seed: int | None = None, out_dir: Path | None = None) -> RunArtifact:
    """Dispatch on the scenario's run mode and write ``<name>.csv`` plus extras under ``out_dir``."""
    seed = cfg.seed if seed is None else seed
    out_csv = out_dir / f"{cfg.name}.csv" if out_dir else None
    if cfg.mode == "analytic":
        art = run_analytic(cfg)
    elif cfg.mode == "monte_carlo":
        art = run_monte_carlo(cfg, seed)
    elif cfg.mode == "sweep":
        sw = cfg.section("sweep")
        art = run_sweep(cfg, sw["axis"], sw["values"], out_csv)
    elif cfg.mode == "plan":
        art = run_plan(cfg, out_csv=out_csv)
    else:
        raise RunError(f"unknown mode {cfg.mode!r}")
    art.provenance = {"config_sha256": cfg.digest, "seed": seed, "version": __version__}
    if out_dir is not None:
        write_artifact(art, out_dir)
    return art


def write_artifact(art: RunArtifact, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{art.name}.csv").write_text(art.csv_text(), encoding="utf-8")
    for key, (header, rows) in art.extra.items():
        (out_dir / f"{art.name}.{key}.csv").write_text(art.csv_text(header, rows), encoding="utf-8")
    (out_dir / f"{art.name}.summary.txt").write_text(art.summary(), encoding="utf-8")


# -- argument handling -------------------------------------------------------

def parse_values(tokens: Sequence[str]) -> list[float]:
    """Numbers, or ``start:stop:step`` ranges with an inclusive stop."""
    values: list[float] = []
    for tok in tokens:
        if ":" in tok:
            parts = tok.split(":")
            if len(parts) != 3:
                raise argparse.ArgumentTypeError(f"range {tok!r} must be start:stop:step")
            start, stop, step = (float(p) for p in parts)
            if step <= 0 or stop < start:
                raise argparse.ArgumentTypeError(f"range {tok!r} needs step > 0 and stop >= start")
            n = int(np.floor((stop - start) / step + 1e-9))
            values += [round(start + i * step, 12) for i in range(n + 1)]
        else:
            try:
                values.append(float(tok))
            except ValueError:
                raise argparse.ArgumentTypeError(f"not a number: {tok!r}") from None
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ponqkd", description="DPS-QKD performance in lit GPON / NG-PON2 networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check scenario files and report every problem")
    p.add_argument("files", nargs="+")

    def common(p):
        p.add_argument("file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", type=Path, default=None, help="directory for CSV and summary files")
        p.add_argument("--format", choices=("csv", "summary"), default="summary", help="what to print")

    common(sub.add_parser("run", help="run a scenario in its configured mode"))
    p = sub.add_parser("sweep", help="sweep one axis of a scenario")
    common(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, nargs="+", help="numbers or start:stop:step")
    p = sub.add_parser("plan", help="optimal quantum wavelength versus take rate")
    common(p)
    p.add_argument("--take-rates", nargs="+", default=None, help="numbers or start:stop:step")
    sub.add_parser("list", help="list packaged presets")
    return parser


def main(argv: Sequence[str] | None = None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "list":
            for name in list_presets():
                print(name, file=stdout)
            return 0
        if args.command == "validate":
            failed = False
            for f in args.files:
                try:
                    cfg = load_scenario(f)
                    print(f"OK {cfg.source} ({cfg.mode})", file=stdout)
                except ConfigError as exc:
                    failed = True
                    for err in exc.errors:
                        print(f"ERROR {err}", file=sys.stderr)
            return 2 if failed else 0

        cfg = load_scenario(args.file)
        seed = cfg.seed if args.seed is None else args.seed
        if args.command == "run":
            art = run(cfg, seed, args.out)
        else:
            out_csv = args.out / f"{cfg.name}.csv" if args.out else None
            if args.command == "sweep":
                art = run_sweep(cfg, args.axis, parse_values(args.values), out_csv)
            else:
                rates = parse_values(args.take_rates) if args.take_rates else None
                art = run_plan(cfg, rates, out_csv)
            art.provenance = {"config_sha256": cfg.digest, "seed": seed, "version": __version__}
            if args.out:
                write_artifact(art, args.out)
        stdout.write(art.csv_text() if args.format == "csv" else art.summary())
        return 0
    except ConfigError as exc:
        for err in exc.errors:
            print(f"ERROR {err}", file=sys.stderr)
        return 2
    except (RunError, ValueError, ArithmeticError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())

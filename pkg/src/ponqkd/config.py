"""Scenario files: YAML documents with includes, validated against a JSON schema.

A scenario names a run mode and the pieces of the link. Any section may be
omitted; the model defaults and the shared calibration block fill the gaps.
The calibration block normally arrives through ``include: calibration.yaml``.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from . import dps, odn, planner
from .calibrate import Calibration, CalibrationError
from .detector import SpadParams
from .raman import FiberSpan, RamanProfile, load_raman_profile
from .spectral import FILTER_PRESETS, ChannelPlan, FilterSpec, build_channel_plan, load_filter_curve

SCENARIO_DIR_ENV = "PONQKD_SCENARIO_DIR"
MODES = ("analytic", "monte_carlo", "sweep", "plan")
SWEEP_AXES = ("budget_db", "fiber_length", "split_n", "take_rate")


class ConfigError(ValueError):
    """Unreadable or invalid scenario; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("\n".join(self.errors))


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_wl = {"type": "number", "minimum": 1200, "maximum": 1700}
_frac = {"type": "number", "exclusiveMinimum": 0, "maximum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj({
    "include": {"oneOf": [{"type": "string"}, {"type": "array", "items": {"type": "string"}}]},
    "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
    "description": {"type": "string"},
    "mode": {"enum": list(MODES)},
    "seed": {"type": "integer", "minimum": 0},
    "budget_db": {"oneOf": [{"type": "null"}, _nonneg]},
    "calibration": _obj({
        "version": {"const": 1},
        "raman_scale": _pos,
        "receiver_insertion_loss_db": _nonneg,
        "dead_time_s": _nonneg,
        "window_accept": _frac,
        "dark_rate_cps": _nonneg,
        "filter_insertion_loss_db": {"type": "object", "additionalProperties": _nonneg,
                                     "propertyNames": {"enum": sorted(FILTER_PRESETS)}},
        "ngpon2_power_dbm": {"type": "number", "maximum": 15},
    }, required=("raman_scale", "receiver_insertion_loss_db", "dead_time_s", "window_accept", "dark_rate_cps")),
    "plan": _obj({
        "standard": {"enum": ["GPON", "NGPON2"]},
        "quantum_wavelength_nm": _wl,
        "groups": {"type": "array", "items": {"enum": ["DS", "US", "FH"]}, "uniqueItems": True},
        "power_overrides": {"type": "object", "additionalProperties": {"type": "number", "maximum": 15}},
        "ngpon2_power_dbm": {"type": "number", "maximum": 15},
    }, required=("standard", "quantum_wavelength_nm")),
    "filter": _obj({
        "preset": {"enum": sorted(FILTER_PRESETS)},
        "center_nm": _wl,
        "bandwidth_ghz": _pos,
        "shape": {"enum": ["rectangular", "supergaussian"]},
        "order": _pos,
        "insertion_loss_db": _nonneg,
        "stopband_rejection_db": {"type": "number", "minimum": 0},
        "curve_file": {"type": "string"},
    }),
    "topology": _obj({
        "feeder_ds_km": _nonneg,
        "feeder_us_km": _nonneg,
        "drop_km": _nonneg,
        "split_m": {"type": "integer", "minimum": 1},
        "split_n": {"type": "integer", "minimum": 1},
        "n_onus_active": {"type": "integer", "minimum": 1},
        "splitter_excess_db": _nonneg,
        "directivity_db": _nonneg,
        "temperature_k": _pos,
        "connector_loss_db": _nonneg,
    }),
    "spad": _obj({
        "efficiency": _frac,
        "dark_rate_cps": _nonneg,
        "dead_time_s": _nonneg,
        "window_accept": _frac,
        "afterpulse_frac": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    }),
    "dps": _obj({
        "symbol_rate": _pos,
        "mu": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "intrinsic_error": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        "receiver_insertion_loss_db": _nonneg,
        "port_fraction": _frac,
        "ec_efficiency": {"type": "number", "minimum": 1},
        "waveband_loss_db": _nonneg,
        "transmitter": {"enum": list(dps.TRANSMITTERS)},
        "dml_penalty": _nonneg,
    }),
    "raman": _obj({"scale": _pos, "profile_file": {"type": "string"}}),
    "monte_carlo": _obj({"n_pulses": {"type": "integer", "minimum": 1},
                         "block_pulses": {"type": "integer", "minimum": 1}}),
    "sweep": _obj({
        "axis": {"enum": list(SWEEP_AXES)},
        "values": {"type": "array", "items": _num, "minItems": 1},
    }, required=("axis", "values")),
    "planner": _obj({
        "take_rates": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
        "candidate_bands": {"type": "array", "items": {"enum": ["O", "E", "S", "C", "L"]},
                            "minItems": 1, "uniqueItems": True},
        "guard_nm": _nonneg,
        "grid_step_nm": _pos,
        "emit_spectrum": {"type": "boolean"},
    }),
}, required=("name", "mode", "calibration"))


def packaged_dir(name: str) -> Path:
    return Path(str(resources.files("ponqkd") / name))


def search_path(base: Path | None = None) -> list[Path]:
    dirs = [base] if base else []
    if os.environ.get(SCENARIO_DIR_ENV):
        dirs.append(Path(os.environ[SCENARIO_DIR_ENV]))
    dirs += [packaged_dir("scenarios"), packaged_dir("data")]
    return dirs


def resolve_scenario(ref: str | Path, base: Path | None = None) -> Path:
    """Find a scenario by path, or by name in the scenario search path."""
    p = Path(ref)
    if p.is_file():
        return p
    for d in search_path(base):
        for cand in (d / p, d / f"{p}.yaml"):
            if cand.is_file():
                return cand
    raise ConfigError(f"{ref}: no such scenario file (searched {', '.join(str(d) for d in search_path(base))})")


def _parse_yaml(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: YAML parse error: {problem}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _expand(path: Path, seen: tuple[Path, ...] = ()) -> dict:
    path = path.resolve()
    if path in seen:
        raise ConfigError(f"include cycle: {' -> '.join(str(p) for p in seen + (path,))}")
    doc = _parse_yaml(path)
    includes = doc.pop("include", [])
    includes = [includes] if isinstance(includes, str) else includes
    if not isinstance(includes, list) or not all(isinstance(i, str) for i in includes):
        raise ConfigError(f"{path}: include must be a file name or a list of file names")
    merged: dict = {}
    for inc in includes:
        merged = _merge(merged, _expand(resolve_scenario(inc, path.parent), seen + (path,)))
    return _merge(merged, doc)


def validate_document(doc: dict, source: str = "<scenario>") -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    messages = []
    for err in errors:
        field = ".".join(str(p) for p in err.absolute_path) or "<root>"
        messages.append(f"{source}: {field}: {err.message}")
    mode = doc.get("mode")
    if mode in ("analytic", "monte_carlo", "sweep") and "plan" not in doc:
        messages.append(f"{source}: plan: required for link modes")
    if mode == "sweep" and "sweep" not in doc:
        messages.append(f"{source}: sweep: required when mode is 'sweep'")
    if mode == "sweep" and doc.get("sweep", {}).get("axis") == "budget_db" and doc.get("budget_db") is None:
        messages.append(f"{source}: budget_db: a budget sweep needs a back-to-back scenario (set budget_db)")
    if mode in ("analytic", "monte_carlo", "sweep") and doc.get("plan", {}).get("groups") != [] \
            and "filter" not in doc and doc.get("budget_db") is None:
        messages.append(f"{source}: filter: required for a lit link")
    if messages:
        raise ConfigError(messages)


@dataclass(frozen=True)
class ScenarioConfig:
    """A validated scenario with includes resolved; ``document`` is the merged YAML tree."""

    document: dict
    source: str = "<scenario>"

    def __eq__(self, other):
        return isinstance(other, ScenarioConfig) and self.document == other.document

    def __hash__(self):
        return hash(self.digest)

    # -- plain accessors ---------------------------------------------------
    @property
    def name(self) -> str:
        return self.document["name"]

    @property
    def mode(self) -> str:
        return self.document["mode"]

    @property
    def seed(self) -> int:
        return int(self.document.get("seed", 0))

    @property
    def budget_db(self) -> float | None:
        return self.document.get("budget_db")

    def section(self, key: str) -> dict:
        return dict(self.document.get(key) or {})

    @property
    def digest(self) -> str:
        canonical = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def with_overrides(self, **sections) -> "ScenarioConfig":
        doc = _merge(self.document, sections)
        validate_document(doc, self.source)
        return ScenarioConfig(doc, self.source)

    # -- model objects -----------------------------------------------------
    @property
    def calibration(self) -> Calibration:
        try:
            return Calibration.from_dict(self.document["calibration"])
        except (CalibrationError, TypeError) as exc:
            raise ConfigError(f"{self.source}: calibration: {exc}") from exc

    def _path(self, ref: str) -> Path:
        p = Path(ref)
        if not p.is_absolute() and self.source != "<scenario>":
            p = Path(self.source).parent / p
        return p

    def build_topology(self) -> odn.PonTopology:
        t = self.section("topology")
        span = dict(temperature_k=t.get("temperature_k", 293.0), connector_loss_db=t.get("connector_loss_db", 0.0))
        split_n = t.get("split_n", 16)
        return odn.PonTopology(
            feeder_ds=FiberSpan(t.get("feeder_ds_km", 15.2), **span),
            feeder_us=FiberSpan(t.get("feeder_us_km", 13.2), **span),
            drop=FiberSpan(t.get("drop_km", 0.256), **span),
            split_m=t.get("split_m", 2),
            split_n=split_n,
            n_onus_active=t.get("n_onus_active", split_n),
            splitter_excess_db=t.get("splitter_excess_db", 0.0),
            directivity_db=t.get("directivity_db", 55.0),
        )

    def build_plan(self) -> ChannelPlan:
        p = self.section("plan")
        if not p:
            raise ConfigError(f"{self.source}: plan: this scenario has no channel plan")
        qnm, standard = p["quantum_wavelength_nm"], p["standard"]
        power = p.get("ngpon2_power_dbm", self.calibration.ngpon2_power_dbm)
        plan = build_channel_plan(standard, qnm, p.get("power_overrides"), ngpon2_power_dbm=power)
        return plan.select(p["groups"]) if "groups" in p else plan

    def build_filter(self) -> FilterSpec | None:
        f = self.section("filter")
        if not f:
            return None
        center = f.pop("center_nm", None) or self.build_plan().quantum_wavelength_nm
        if "curve_file" in f:
            return load_filter_curve(self._path(f["curve_file"]), name=f.get("preset"))
        name = f.pop("preset", None)
        if name is None:
            return FilterSpec(name="custom", center_nm=center, **f)
        return self.calibration.filter(name, center, **f)

    def build_spad(self) -> SpadParams:
        cal = self.calibration
        s = self.section("spad")
        return SpadParams(
            efficiency=s.get("efficiency", 0.1),
            dark_rate=s.get("dark_rate_cps", cal.dark_rate_cps),
            dead_time=s.get("dead_time_s", cal.dead_time_s),
            window_accept=s.get("window_accept", cal.window_accept),
            afterpulse_frac=s.get("afterpulse_frac", 0.0),
        )

    def build_link(self) -> dps.DpsLinkParams:
        d = self.section("dps")
        d.setdefault("receiver_insertion_loss_db", self.calibration.receiver_insertion_loss_db)
        return dps.DpsLinkParams(**d)

    def build_profile(self) -> RamanProfile:
        r = self.section("raman")
        path = self._path(r["profile_file"]) if "profile_file" in r else None
        return load_raman_profile(path, r.get("scale", self.calibration.raman_scale))

    def build_mixed_tree(self, take_rate: float = 0.0) -> planner.MixedTreeConfig:
        p = self.section("planner")
        kwargs = {k: p[k] for k in ("guard_nm", "grid_step_nm") if k in p}
        if "candidate_bands" in p:
            kwargs["candidate_bands"] = tuple(p["candidate_bands"])
        factor = planner.detection_factor(self.build_spad())
        power = self.section("plan").get("ngpon2_power_dbm", self.calibration.ngpon2_power_dbm)
        return planner.default_mixed_config(self.build_profile(), take_rate, factor, self.build_topology(),
                                            ngpon2_power_dbm=power, **kwargs)

    def build_all(self) -> None:
        """Construct every model object once so range errors surface at validation time."""
        try:
            self.build_topology()
            if "plan" in self.document:
                self.build_plan()
                self.build_filter()
            self.build_spad()
            self.build_link()
            self.build_profile()
        except ConfigError:
            raise
        except (ValueError, OSError) as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc


def load_scenario(ref: str | Path) -> ScenarioConfig:
    """Read, expand includes, validate and return a scenario; raises ConfigError listing every problem."""
    path = resolve_scenario(ref)
    doc = _expand(path)
    validate_document(doc, str(path))
    cfg = ScenarioConfig(doc, str(path))
    cfg.build_all()
    return cfg


def dump_scenario(cfg: ScenarioConfig) -> str:
    """YAML text of the fully expanded scenario; loading it gives an equal config."""
    return yaml.safe_dump(cfg.document, sort_keys=False)


def loads_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        doc = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: YAML parse error: {exc}") from exc
    if "include" in doc:
        raise ConfigError(f"{source}: include is only resolved for files on disk")
    validate_document(doc, source)
    cfg = ScenarioConfig(doc, source)
    cfg.build_all()
    return cfg


def list_presets() -> list[str]:
    return sorted(p.stem for p in packaged_dir("scenarios").glob("*.yaml"))

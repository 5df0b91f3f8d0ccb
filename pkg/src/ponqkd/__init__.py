"""Physical-layer simulator for DPS-QKD channels in lit GPON / NG-PON2 networks."""
from __future__ import annotations

__version__ = "0.1.0"

from .calibrate import Calibration, load_calibration  # noqa: E402
from .config import ScenarioConfig, load_scenario  # noqa: E402
from .dps import DpsLinkParams, LinkReport, evaluate_back_to_back, evaluate_link, secure_key_fraction  # noqa: E402
from .montecarlo import monte_carlo_run  # noqa: E402
from .planner import optimal_lambda  # noqa: E402

__all__ = [
    "Calibration",
    "DpsLinkParams",
    "LinkReport",
    "ScenarioConfig",
    "__version__",
    "evaluate_back_to_back",
    "evaluate_link",
    "load_calibration",
    "load_scenario",
    "monte_carlo_run",
    "optimal_lambda",
    "secure_key_fraction",
]

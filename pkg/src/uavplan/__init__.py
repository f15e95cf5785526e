"""uavplan: offline convex planning and online corridor-guided Q-learning
for multi-UAV data collection from solar-powered ground nodes."""

from .scenario import (ChannelParams, Plan, Scenario, Violation,
                       load_scenario, validate_plan)
from .energy import (BatteryLedger, HarvestProfile, check_energy_feasible,
                     evolve_battery, load_irradiance_csv, synth_profile)
from .channel import (ChannelRealization, FadingDraws, average_gain,
                      distance, los_probability, path_loss_db,
                      sample_realization)
from .rate import RateReport, evaluate_plan, sinr, slot_rate

__all__ = [
    "ChannelParams", "Plan", "Scenario", "Violation", "load_scenario",
    "validate_plan", "BatteryLedger", "HarvestProfile",
    "check_energy_feasible", "evolve_battery", "load_irradiance_csv",
    "synth_profile", "ChannelRealization", "FadingDraws", "average_gain",
    "distance", "los_probability", "path_loss_db", "sample_realization",
    "RateReport", "evaluate_plan", "sinr", "slot_rate",
]

__version__ = "0.1.0"

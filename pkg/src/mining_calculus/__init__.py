"""Cost-optimal, robust proof-of-work parameters for governed blockchains."""
from .numerics import FAST, PrecisionTier, exact
from .optimizer import ScenarioConstants, enumerate_optimal, base_scenario
from .powmodel import MiningDesign

__all__ = ["FAST", "PrecisionTier", "exact", "ScenarioConstants", "enumerate_optimal",
           "base_scenario", "MiningDesign"]
__version__ = "0.1.0"

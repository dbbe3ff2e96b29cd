"""Multi-lane merging of connected automated vehicles.

A coordinator keeps dual FIFO queue tables with merge-point metadata;
each vehicle resolves its spacing constraints by table lookup, plans a
closed-form energy/time-optimal trajectory, and tracks it with a per-step
quadratic program built from barrier and tracking constraints.
"""

from .qpsolve import BACKEND as qp_backend
from .scenario import ScenarioParams, SimConfig, load_config

__version__ = "0.1.0"
__all__ = ["ScenarioParams", "SimConfig", "load_config", "qp_backend"]

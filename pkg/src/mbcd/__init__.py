"""Model-based RL with online context detection.

Dynamics ensembles per context, MCUSUM change-point detection over their
likelihoods, and Dyna-style soft actor-critic policies, plus an experiment
harness for non-stationary desk-scale environments.
"""

from .agent import AgentConfig, MBCDAgent
from .changepoint import NEW, CusumBank, DetectorConfig
from .dynamics import ContextModel
from .envs import ContextSchedule, MazeSpec, ScheduledEnv
from .gaussian import DiagonalGaussian

__all__ = [
    "AgentConfig", "MBCDAgent", "NEW", "CusumBank", "DetectorConfig", "ContextModel",
    "ContextSchedule", "MazeSpec", "ScheduledEnv", "DiagonalGaussian",
]
__version__ = "0.1.0"

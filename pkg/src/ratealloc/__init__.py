"""Queue-driven distributed rate allocation over general rate regions."""

from .errors import (
    CapacityError,
    ConfigError,
    ContractError,
    ConvergenceError,
    DisconnectedGridError,
    SimulationError,
    SupportError,
)
from .markov import AllocationChain, stationary, uniformize
from .optimizer import ProgramSpec, solve_vstar
from .region import (
    DistanceThresholdRegion,
    GaussianMacRegion,
    PolytopeRegion,
    RateLevelGrid,
    VectorSetRegion,
    discretize,
)
from .sim import ArrivalProcess, ControllerConfig, SimScenario, run
from .whitespace import WhitespaceNetwork, whitespace_chain

__version__ = "0.1.0"

"""Exception types raised across the package."""


class ContractError(ValueError):
    """A caller violated an operation's preconditions (bad shape, bad id, ...)."""


class CapacityError(RuntimeError):
    """An enumeration or exact-analysis path exceeded its configured size gate."""


class DisconnectedGridError(ValueError):
    """The feasible vector set is not connected under single-coordinate moves."""


class SupportError(ValueError):
    """KL divergence requested where support(mu) is not inside support(pi)."""


class ConvergenceError(RuntimeError):
    """The v* ascent did not converge; carries the last iterate."""

    def __init__(self, message, v_last=None, grad_norm=None, iterations=None):
        super().__init__(message)
        self.v_last = v_last
        self.grad_norm = grad_norm
        self.iterations = iterations


class SimulationError(RuntimeError):
    """Runtime failure inside the simulator (NaN state, bad horizon, ...)."""


class ConfigError(ValueError):
    """Scenario configuration failed to parse or validate.

    ``line`` is the 1-based line in the source document when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        prefix = ""
        if path:
            prefix += f"{path}: "
        if line is not None:
            prefix = f"line {line}: " + prefix
        super().__init__(prefix + message)
        self.bare_message = message

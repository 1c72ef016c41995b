"""Exception hierarchy; exit_code values match the CLI contract."""


class SimulatorError(Exception):
    exit_code = 1


class ConfigError(SimulatorError):
    """Invalid configuration value, network syntax or shape mismatch."""

    exit_code = 2


class CapacityError(SimulatorError):
    """Unit geometry cannot admit a layer (tiling is unsupported)."""

    exit_code = 3


class DataFormatError(SimulatorError):
    """Malformed parameter file or dataset file."""

    exit_code = 4


class StreamOrderError(SimulatorError):
    """Partial-sum stream violated the time-step-major protocol."""

    exit_code = 2

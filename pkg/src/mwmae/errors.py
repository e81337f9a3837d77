"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(ValueError):
    """An argument violates a documented precondition."""


class WindowSizeError(ValueError):
    """A window size does not evenly divide the token count."""


class AudioFormatError(ValueError):
    """An audio file does not match the required encoding."""


class DegenerateInputError(ValueError):
    """Input is rank-deficient beyond what the algorithm can handle."""


class TrainingDivergedError(RuntimeError):
    """Loss or gradients became non-finite during optimization."""

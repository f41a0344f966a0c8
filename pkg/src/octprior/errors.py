"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A caller violated a documented precondition."""


class DegenerateVectorError(ValueError):
    """A vector with zero norm was passed where a direction is required."""


class DegenerateLabelsError(ValueError):
    """A ranking metric needs both classes (or at least one positive)."""


class TemplateError(ValueError):
    """A prompt template is missing a required placeholder."""


class CapacityError(ValueError):
    """The requested number of distinct objects exceeds what the space holds."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, step, message=None):
        self.epoch = epoch
        self.step = step
        super().__init__(
            message or f"training diverged (non-finite loss) at epoch {epoch}, step {step}"
        )


class ConfigError(ValueError):
    """A run configuration document is malformed."""

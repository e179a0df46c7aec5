class UnisortError(Exception):
    """Base class for every error raised by the library."""


class InvalidInputError(UnisortError, ValueError):
    """Exception raised when an input vector or matrix violates its invariants."""
    def __init__(self, what: str, reason: str):
        self.what = what
        self.reason = reason
        super().__init__(f"Invalid {what}: {reason}.")


class InvalidTemperatureError(InvalidInputError):
    """Exception raised for a temperature that is not strictly positive and finite."""
    def __init__(self, tau):
        self.tau = tau
        super().__init__("temperature", f"tau must be a finite value > 0, got {tau}")


class InvalidArgumentError(UnisortError, ValueError):
    """Exception raised when an argument is out of its allowed range."""
    def __init__(self, argument: str, value, expected: str):
        self.argument = argument
        self.value = value
        self.expected = expected
        super().__init__(f"Invalid value {value!r} for '{argument}': expected {expected}.")


class ShapeMismatchError(InvalidArgumentError):
    """Exception raised by a tape operation on incompatible shapes."""
    def __init__(self, op: str, shapes: tuple):
        self.op = op
        self.shapes = shapes
        UnisortError.__init__(self, f"Shape mismatch in '{op}': {' vs '.join(str(s) for s in shapes)}.")


class TapeMismatchError(InvalidArgumentError):
    """Exception raised when values recorded on different tapes are combined."""
    def __init__(self, op: str):
        self.op = op
        UnisortError.__init__(self, f"Operands of '{op}' live on different tapes.")


class DomainError(UnisortError, ValueError):
    """Exception raised when an operation is evaluated outside its domain."""
    def __init__(self, op: str, reason: str):
        self.op = op
        self.reason = reason
        super().__init__(f"Domain error in '{op}': {reason}.")


class AmbiguousRankError(UnisortError):
    """Exception raised when the k-th largest element is not unique."""
    def __init__(self, k: int, candidates: list[int]):
        self.k = k
        self.candidates = candidates
        super().__init__(
            f"Rank {k} is attained by several indices {candidates}; use project_hard for tie-robust selection."
        )


class CapacityError(UnisortError):
    """Exception raised when an exhaustive computation would be too large."""
    def __init__(self, what: str, n: int, limit: int):
        self.what = what
        self.n = n
        self.limit = limit
        super().__init__(f"{what} supports n <= {limit}, got n = {n}.")


class DatasetGenerationError(UnisortError):
    """Exception raised when a synthetic dataset cannot satisfy its invariants."""
    def __init__(self, reason: str, retries: int):
        self.reason = reason
        self.retries = retries
        super().__init__(f"Dataset generation failed after {retries} retries: {reason}.")


class TrainingDivergedError(UnisortError, RuntimeError):
    """Exception raised when a training loss becomes NaN or infinite."""
    def __init__(self, task: str, epoch: int, step: int, loss: float):
        self.task = task
        self.epoch = epoch
        self.step = step
        self.loss = loss
        super().__init__(
            f"Training of '{task}' diverged at epoch {epoch}, step {step}: loss = {loss}. "
            f"Try a smaller learning rate or a larger temperature."
        )


class ConfigFileError(UnisortError):
    """Exception raised for an unreadable or malformed key=value config file."""
    def __init__(self, path: str, reason: str, line_number: int | None = None):
        self.path = path
        self.reason = reason
        self.line_number = line_number
        where = f"{path}:{line_number}" if line_number is not None else path
        super().__init__(f"Config file {where}: {reason}.")

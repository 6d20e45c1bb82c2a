class SmpError(Exception):
    """Base class for all smpconv failures."""


class ContractError(SmpError, ValueError):
    """An operation was called with arguments violating its preconditions."""


class DomainError(ContractError):
    """A scalar argument lies outside the domain of a function (e.g. radius <= 0)."""


class NonFiniteGradientError(SmpError, FloatingPointError):
    def __init__(self, key: str, count: int):
        self.key = key
        self.count = count
        super().__init__(f"Gradient for '{key}' has {count} non-finite entries; refusing to update")


class DivergenceError(SmpError, RuntimeError):
    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"Training diverged at step {step}: loss={loss}")


class ArtifactError(SmpError, OSError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class CheckpointError(SmpError, ValueError):
    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"Invalid checkpoint {self.path}: {reason}")


class ConfigError(SmpError, ValueError):
    """Run configuration could not be parsed or validated."""


class ReferenceMismatchError(SmpError, RuntimeError):
    def __init__(self, path, mismatches: list[str]):
        self.path = str(path)
        self.mismatches = mismatches
        super().__init__(f"{self.path}: results differ from the pinned reference ({'; '.join(mismatches)})")

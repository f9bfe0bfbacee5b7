"""Exception hierarchy shared by the package."""


class DelayFlockError(Exception):
    """Base class for all package errors."""


class ConfigError(DelayFlockError):
    """A scenario is internally inconsistent."""


class SchemaError(ConfigError):
    """A configuration document violates the schema.

    ``path`` is the dotted location of the offending field.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class HypothesisError(ConfigError):
    """A hypothesis of the convergence theorems does not hold."""

    def __init__(self, hypothesis, detail=""):
        self.hypothesis = hypothesis
        msg = f"hypothesis violated: {hypothesis}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InvalidMatrix(ConfigError):
    pass


class DepthUndefined(DelayFlockError):
    """The digraph is not strongly connected, so its depth is not finite."""


class HorizonExceeded(DelayFlockError):
    pass


class PeViolation(DelayFlockError):
    """Persistence of excitation fails for at least one active pair.

    ``violations`` lists ``(pair, window_start, margin)`` triples; the
    attributes ``pair``, ``window_start`` and ``margin`` describe the worst one.
    """

    def __init__(self, violations):
        self.violations = sorted(violations, key=lambda v: v[2])
        self.pair, self.window_start, self.margin = self.violations[0]
        pairs = ", ".join(f"{p}" for p, _, _ in self.violations)
        super().__init__(
            f"persistence of excitation fails for pairs {pairs}; worst margin "
            f"{self.margin:.6g} on window starting at t={self.window_start:.6g}"
        )


class NonPositiveFloor(DelayFlockError):
    pass


class DegenerateContraction(DelayFlockError):
    """A contraction factor lies outside (0, 1)."""


class OutOfRange(DelayFlockError):
    pass


class NonPositiveValue(DelayFlockError):
    pass


class FormatError(DelayFlockError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")

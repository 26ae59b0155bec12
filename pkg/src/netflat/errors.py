"""Exception hierarchy. Each family maps to a CLI exit code."""


class NetflatError(Exception):
    exit_code = 1
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ValidationError(NetflatError, ValueError):
    exit_code = 2
    kind = "validation"


class InvalidVertexError(ValidationError, KeyError):
    kind = "invalid-vertex"

    def __str__(self):
        return Exception.__str__(self)


class GraphMismatchError(ValidationError):
    kind = "graph-mismatch"


class SolverError(NetflatError, RuntimeError):
    exit_code = 3
    kind = "solver"

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history

    def to_dict(self):
        d = super().to_dict()
        if self.history is not None:
            d["history"] = [float(x) for x in self.history]
        return d


class NumericError(SolverError):
    kind = "numeric"


class BoxExitError(SolverError):
    kind = "box-exit"


class InconclusiveError(SolverError):
    """A quantity could not be certified (distance, volume, tail sum)."""

    kind = "inconclusive"

    def __init__(self, message, lower_bound=None):
        super().__init__(message)
        self.lower_bound = lower_bound

    def to_dict(self):
        d = super().to_dict()
        if self.lower_bound is not None:
            d["lower_bound"] = float(self.lower_bound)
        return d


class UnboundedOperatorError(SolverError):
    kind = "unbounded-operator"


class ResourceError(NetflatError, MemoryError):
    exit_code = 4
    kind = "resource"

"""Exception types raised across the package.

Every error carries a stable ``exit_code`` so the command-line front end can
map failures to distinct process statuses.
"""


class NetKFError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DimensionMismatch(NetKFError, ValueError):
    exit_code = 5


class NonSPD(NetKFError, ValueError):
    """A matrix that must be symmetric positive definite is not."""

    exit_code = 5

    def __init__(self, name, min_eig=None, detail=""):
        self.name = name
        self.min_eig = min_eig
        msg = f"{name} is not symmetric positive definite"
        if min_eig is not None:
            msg += f" (min eigenvalue {min_eig:.6g})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class OrderViolation(NetKFError, ValueError):
    exit_code = 5


class SingularInnovation(NetKFError, ArithmeticError):
    exit_code = 6


class SingularCovariance(NetKFError, ArithmeticError):
    exit_code = 6


class NoConvergence(NetKFError, ArithmeticError):
    exit_code = 6

    def __init__(self, msg, last_increment=None):
        self.last_increment = last_increment
        super().__init__(msg)


class MissingBroadcast(NetKFError, LookupError):
    exit_code = 6

    def __init__(self, node, missing):
        self.node = node
        self.missing = sorted(missing)
        super().__init__(f"node {node} is missing broadcasts from {self.missing}")


class StaleBroadcast(NetKFError, ValueError):
    exit_code = 6


class InconsistentStep(NetKFError, ValueError):
    exit_code = 6


class StepError(NetKFError):
    """Wraps a failure inside a multi-step run with the failing step (and node)."""

    def __init__(self, step, cause, node=None):
        self.step = step
        self.node = node
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        where = f"step {step}" if node is None else f"step {step}, node {node}"
        super().__init__(f"{where}: {cause}")


class ParseError(NetKFError, ValueError):
    exit_code = 3

    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line else message)


class ValidationError(NetKFError, ValueError):
    exit_code = 4

    def __init__(self, entity, rule, line=None):
        self.entity = entity
        self.rule = rule
        self.line = line
        where = f" (line {line})" if line else ""
        super().__init__(f"{entity}{where}: {rule}")


class PropertyViolation(NetKFError, AssertionError):
    exit_code = 7

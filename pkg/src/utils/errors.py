"""
Exceptions raised across the toolkit. Everything derives from MfouError so the
CLI can map failures to exit codes in one place.

"""

from typing import Optional


class MfouError(Exception):
    """Base class for all toolkit errors"""


class DomainError(MfouError, ValueError):
    """A parameter lies outside the model's domain (e.g. H = 1/2)"""


class DimensionError(MfouError, ValueError):
    pass


class ContractViolation(MfouError, ValueError):
    pass


class IterationLimitError(MfouError, RuntimeError):
    pass


class NumericalBlowUpError(MfouError, FloatingPointError):
    def __init__(self, msg: str, node: Optional[int] = None):
        if node is not None:
            msg = f"{msg} (first bad node: {node})"
        super().__init__(msg)
        self.node = node


class CholeskyError(MfouError, RuntimeError):
    pass


class SolverError(MfouError, RuntimeError):
    def __init__(self, msg: str, condition: Optional[float] = None):
        if condition is not None:
            msg = f"{msg} (condition estimate: {condition:.3e})"
        super().__init__(msg)
        self.condition = condition


class InvalidKernelError(MfouError, RuntimeError):
    pass


class DegeneratePathError(MfouError, ArithmeticError):
    pass


class SolvabilityError(MfouError, RuntimeError):
    """Riccati solution does not exist on the whole horizon"""

    def __init__(self, msg: str, node: Optional[int] = None):
        if node is not None:
            msg = f"{msg} (first bad node: {node})"
        super().__init__(msg)
        self.node = node


class StudyInvalidError(MfouError, RuntimeError):
    pass

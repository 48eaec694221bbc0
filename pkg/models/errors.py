"""Exception hierarchy shared by every gcsync module.

Each error carries the RunReport status it maps to, so the controller can turn
any failure into a report and an exit code without knowing where it came from.
"""


class GcsyncError(Exception):
    """Base class for all expected gcsync failures"""

    status = 'invalid_config'

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self):
        return self.message or self.__class__.__name__


# numkit

class NumericalError(GcsyncError):
    status = 'invalid_config'


class NonFiniteEntries(NumericalError):
    pass


class NotSymmetric(NumericalError):
    pass


class Singular(NumericalError):
    pass


class Overflow(NumericalError):
    status = 'diverged'


# topology

class TopologyError(GcsyncError):
    status = 'invalid_config'


class InvalidEdge(TopologyError):
    pass


class InvalidTopology(TopologyError):
    pass


class NotAdmissible(TopologyError):
    pass


class WrongKind(TopologyError):
    pass


# lmi

class LmiError(GcsyncError):
    status = 'invalid_config'


class ShapeMismatch(LmiError):
    pass


class MissingVariable(LmiError):
    pass


class IllPosed(LmiError):
    pass


class ConstructionError(LmiError):
    pass


class NoFeasibleStart(LmiError):
    status = 'infeasible'


class Step1Infeasible(LmiError):
    status = 'infeasible'

    def __init__(self, message: str = "", result=None, **details):
        super().__init__(message, **details)
        self.result = result


# synthesis

class SynthesisError(GcsyncError):
    status = 'infeasible'


class AgreementInitialStates(SynthesisError):
    status = 'invalid_config'


class BadSpectrum(SynthesisError):
    status = 'invalid_config'


class BudgetTooSmall(SynthesisError):
    status = 'budget_too_small'


class Infeasible(SynthesisError):
    status = 'infeasible'

    def __init__(self, message: str = "", certificate=None, **details):
        super().__init__(message, **details)
        self.certificate = certificate


class NotConverged(SynthesisError):
    status = 'infeasible'


# sim

class NumericalBlowup(GcsyncError):
    status = 'diverged'


class Diverged(GcsyncError):
    status = 'diverged'


# cli

class InvalidConfig(GcsyncError):
    status = 'invalid_config'

"""Exception hierarchy shared by all conflab modules."""


class ConflabError(Exception):
    """Base class for every error raised by conflab."""


class PoleSingularity(ConflabError, ValueError):
    pass


class InconsistentAtlas(ConflabError):
    """Chart values disagree on an overlap beyond tolerance."""

    def __init__(self, message, disagreement=None, tolerance=None):
        super().__init__(message)
        self.disagreement = disagreement
        self.tolerance = tolerance


class ResolutionTooCoarse(ConflabError):
    def __init__(self, message, max_usable=None):
        super().__init__(message)
        self.max_usable = max_usable


class NonPositiveScale(ConflabError, ValueError):
    pass


class SolverDivergence(ConflabError):
    pass


class DegenerateSource(ConflabError, ValueError):
    pass


class InvalidExponent(ConflabError, ValueError):
    pass


class HypothesisViolated(ConflabError):
    def __init__(self, message, member=None, hypothesis=None, value=None):
        super().__init__(message)
        self.member = member
        self.hypothesis = hypothesis
        self.value = value


class EmptyFamily(ConflabError, ValueError):
    pass


class MassDeficient(ConflabError):
    def __init__(self, message, area=None):
        super().__init__(message)
        self.area = area


class NoConvergence(ConflabError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result

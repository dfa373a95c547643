"""Exception hierarchy shared by every module."""


class H4Error(Exception):
    """Base class; `stage` names the pipeline stage that raised, when known."""

    stage = None

    def __init__(self, message="", **details):
        super().__init__(message)
        if "stage" in details:
            self.stage = details.pop("stage")
        self.details = details


class ParseError(H4Error):
    pass


class OutOfRange(H4Error):
    pass


class DegenerateEdge(H4Error):
    pass


class TooFewVertices(H4Error):
    pass


class TooShort(H4Error):
    pass


class TooLarge(H4Error):
    pass


class ThresholdUnreachable(H4Error):
    pass


class HypothesisViolated(H4Error):
    pass


class BudgetExhausted(H4Error):
    pass


class DensityTooLow(H4Error):
    pass


class ConstructionFailed(H4Error):
    pass


class TooManyMediums(H4Error):
    pass


class BudgetExceeded(H4Error):
    pass


class ReclassificationFailed(H4Error):
    pass


class SearchExhausted(H4Error):
    pass


class MatchingFailed(H4Error):
    pass


class EnvelopeViolated(H4Error):
    pass


class ThresholdNotMet(H4Error):
    pass


class CaseExhausted(H4Error):
    pass


class NotIntegral(H4Error):
    pass

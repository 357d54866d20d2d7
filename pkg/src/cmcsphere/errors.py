"""Exception hierarchy shared by the numerical modules."""


class CMCError(Exception):
    """Base class for all errors raised by this package."""


class IntegrationError(CMCError):
    pass


class DomainBreach(IntegrationError):
    """Trajectory left the open set f2 > 0, f1^2 + f2^2 < 1."""


class StepSizeUnderflow(IntegrationError):
    """Adaptive step fell below the hard floor."""


class NonAdmissible(CMCError):
    """A shooting evaluation could not be carried to its terminal time."""


class NoConvergence(CMCError):
    pass


class SingularJacobian(CMCError):
    pass


class NoBracket(CMCError):
    pass


class RankDrop(CMCError):
    """grad F1 x grad Theta vanished, the tangent of the solution curve is undefined."""


class NotSpanned(CMCError):
    pass


class StallError(CMCError):
    """Continuation step size underflowed; ``partial`` holds the curve traced so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial

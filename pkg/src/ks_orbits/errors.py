"""Exception hierarchy shared by all modules."""


class KSOrbitsError(Exception):
    """Base class for every error raised by this package."""


class NotUnit(KSOrbitsError, ValueError):
    pass


class OutsideDomain(KSOrbitsError, ValueError):
    """A state left the ball where the perturbation is defined."""


class AtCollision(KSOrbitsError, ValueError):
    """A physical quantity was requested at (or too near) u = 0."""


class PoleTooClose(KSOrbitsError, ValueError):
    pass


class SingularityNotIntegrable(KSOrbitsError, ValueError):
    pass


class PoleSelectionFailed(KSOrbitsError, RuntimeError):
    pass


class StepSizeUnderflow(KSOrbitsError, RuntimeError):
    pass


class DomainExit(KSOrbitsError, RuntimeError):
    """Propagation stopped because the right-hand side raised OutsideDomain."""

    def __init__(self, message, s=None):
        super().__init__(message)
        self.s = s


class BadFit(KSOrbitsError, RuntimeError):
    pass


class NonDiscreteZeroSet(KSOrbitsError, ValueError):
    pass


class NoConvergence(KSOrbitsError, RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SeedOutsideDomain(KSOrbitsError, ValueError):
    pass


class TargetNotReached(KSOrbitsError, RuntimeError):
    def __init__(self, message, records=None):
        super().__init__(message)
        self.records = records or []


class DeltaBoundViolated(KSOrbitsError, ValueError):
    pass


class AtPrimaryCollision(KSOrbitsError, ValueError):
    pass

"""Exception types raised across the package."""


class CrispError(Exception):
    pass


class NonFiniteEvaluation(CrispError):
    """An evaluator produced NaN or inf.

    ``label`` names the offending row (or ``"objective"``) and ``iteration``
    is filled in by the outer solver when the failure happens mid-solve.
    """

    def __init__(self, label, iteration=None):
        self.label = label
        self.iteration = iteration
        where = "" if iteration is None else f" at iteration {iteration}"
        super().__init__(f"non-finite value in {label}{where}")


class DuplicateConstraint(CrispError):
    pass


class SpecError(CrispError):
    pass


class ProblemTooLarge(CrispError):
    pass


class QpFailure(CrispError):
    pass


class NotConvexError(CrispError):
    pass

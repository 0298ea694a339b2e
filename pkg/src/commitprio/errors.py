"""Exception hierarchy.

Everything raised on bad input derives from :class:`InputError` so the CLI can
map it to exit code 1; anything else escaping is treated as an internal error.
"""


class CommitPrioError(Exception):
    pass


class InputError(CommitPrioError):
    pass


class MalformedDiff(InputError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateExecution(InputError):
    pass


class UnknownVerdict(InputError):
    pass


class MissingOrderIndex(InputError):
    pass


class EmptySuiteSet(InputError):
    pass


class UnimputableField(InputError):
    pass


class DegenerateLabels(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class NoPositives(InputError):
    pass


class NoFailures(InputError):
    pass


class AllZeroDifferences(InputError):
    pass


class TooFewProjects(InputError):
    pass


class DegenerateResample(CommitPrioError):
    pass


class NonFiniteLoss(CommitPrioError):
    pass


class TooFewMinority(UserWarning):
    """Minority class too small for k-neighbour interpolation; duplicates used instead."""

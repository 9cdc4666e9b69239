"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`HybridjError`, which is a
``ValueError`` so callers that only care about "bad input" can catch that.
"""


class HybridjError(ValueError):
    """Base class for validation errors."""


class MissingColumn(HybridjError):
    def __init__(self, column, path=None):
        self.column = column
        self.path = path
        where = f" in {path}" if path else ""
        super().__init__(f"missing column {column!r}{where}")


class BadValue(HybridjError):
    def __init__(self, row, column, value, reason=""):
        self.row = row
        self.column = column
        self.value = value
        msg = f"bad value {value!r} at row {row}, column {column!r}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class DanglingForeignKey(HybridjError):
    def __init__(self, defendant_id, row=None):
        self.defendant_id = defendant_id
        self.row = row
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"unknown defendant_id {defendant_id}{where}")


class DuplicateKey(HybridjError):
    def __init__(self, key, row=None):
        self.key = key
        self.row = row
        where = f" at row {row}" if row is not None else ""
        super().__init__(f"duplicate key {key!r}{where}")


class InvalidConfig(HybridjError):
    pass


class InvalidParams(HybridjError):
    pass


class EmptyGroup(HybridjError):
    pass


class MixedConditions(HybridjError):
    pass


class LengthMismatch(HybridjError):
    def __init__(self, *lengths):
        self.lengths = lengths
        super().__init__(f"length mismatch: {', '.join(map(str, lengths))}")


class EmptyInput(HybridjError):
    pass


class NonNumeric(HybridjError):
    pass


class SchemaMismatch(HybridjError):
    pass


class MissingScore(HybridjError):
    def __init__(self, defendant_id, scorer=None):
        self.defendant_id = defendant_id
        self.scorer = scorer
        who = f" for {scorer}" if scorer else ""
        if defendant_id is None:
            super().__init__(f"no scores{who}")
        else:
            super().__init__(f"no score{who} for defendant {defendant_id}")


class NoDisagreementRows(HybridjError):
    pass


class TooFewRows(HybridjError):
    pass


class EmptyCase(HybridjError):
    def __init__(self, case_id):
        self.case_id = case_id
        super().__init__(f"case {case_id} has no rows")

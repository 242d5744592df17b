"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, data errors
(parse/domain) exit 3, anything else exits 4.
"""


class DomainError(ValueError):
    """A value violates an operation's precondition or a type invariant."""


class ParseError(ValueError):
    """Malformed wire-format input (trace CSV, manifest JSON, ...)."""


class UsageError(Exception):
    """The caller misused an API (e.g. stepping a finished session)."""


class BudgetError(UsageError):
    """A solver refused an instance larger than its configured budget."""

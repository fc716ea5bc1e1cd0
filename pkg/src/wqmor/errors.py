"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical failures exit 3, infeasible optimization problems exit 4.
"""


class WqmorError(Exception):
    """Base class for all package errors."""


class NetworkSyntaxError(WqmorError):
    """Network file is not valid JSON; carries the parser position."""

    def __init__(self, msg, lineno=None, colno=None):
        super().__init__(msg)
        self.lineno = lineno
        self.colno = colno


class NetworkError(WqmorError):
    """Network or scenario violates a semantic invariant (names the entity)."""


class RunFileError(WqmorError):
    """Run file missing required sections or malformed."""


class CourantError(WqmorError):
    """A pipe violates the advection stability condition for a period."""


class BudgetError(WqmorError):
    """Requested computation exceeds the configured memory/size budget."""


class NumericalError(WqmorError):
    """An iteration failed to converge or a numerical postcondition failed."""


class RankError(WqmorError):
    """Snapshot spectrum has too few significant values for the request."""


class StabilizationError(WqmorError):
    """The stabilization SDP is infeasible or its post-check failed."""


class QpError(WqmorError):
    """The MPC quadratic program could not be solved."""

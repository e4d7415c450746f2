"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and belongs to one of
three families, which the command line maps to exit statuses:

* :class:`InvalidInput` - the request itself is malformed (exit 1).
* :class:`BudgetExceeded` - the computation is well posed but does not fit the
  configured stage / interval / enumeration budget (exit 2).
* :class:`InternalInvariant` - something that must never happen did (exit 3).
"""

from __future__ import annotations


class LabError(Exception):
    code = "error"


class InvalidInput(LabError):
    code = "invalid_input"


class BudgetExceeded(LabError):
    code = "budget_exceeded"


class InternalInvariant(LabError):
    code = "internal_invariant"


class InvalidSpec(InvalidInput):
    code = "invalid_spec"


class StageMismatch(InvalidInput):
    code = "stage_mismatch"


class StageUnavailable(InvalidInput):
    code = "stage_unavailable"


class InvalidDescriptor(InvalidInput):
    code = "invalid_descriptor"


class NotSidon(InvalidInput):
    code = "not_sidon"


class RegionTooSmall(InvalidInput):
    code = "region_too_small"


class PieceCollision(InvalidInput):
    code = "piece_collision"


class InfeasibleWindow(InvalidInput):
    code = "infeasible_window"


class NotExact(BudgetExceeded):
    """Exactness was requested but no built stage certifies it."""

    code = "not_exact"


class TooLarge(BudgetExceeded):
    code = "too_large"


class CombinatorialBudget(BudgetExceeded):
    code = "combinatorial_budget"


class Unresolvable(BudgetExceeded):
    code = "unresolvable"


class OrbitExit(BudgetExceeded):
    code = "orbit_exit"

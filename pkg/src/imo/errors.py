"""Domain exceptions shared across modules.

Every error that can cross the wire carries a ``wire_code`` naming one of
the six envelope codes the gateway is allowed to emit.
"""

from __future__ import annotations


class DomainError(Exception):
    """Base class for all expected failures."""

    wire_code = "INTERNAL"


# -- registry ---------------------------------------------------------------

class NotFound(DomainError):
    wire_code = "NOT_FOUND"


class InvalidName(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, name):
        super().__init__(f"invalid model name: {name!r}")
        self.name = name


class InvalidCapability(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, tag, score=None):
        msg = f"capability {tag!r} outside [0,1]"
        if score is not None:
            msg += f": {score}"
        super().__init__(msg)
        self.tag = tag


class StorageFull(DomainError):
    wire_code = "TOO_LARGE"


class IntegrityError(DomainError):
    """Stored bytes no longer match their digest; never silent."""

    wire_code = "INTERNAL"


class RollbackToSelf(DomainError):
    wire_code = "CONFLICT"


# -- output cache -----------------------------------------------------------

class MissingField(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, field):
        super().__init__(f"missing field: {field}")
        self.field = field


class OutputTooLarge(DomainError):
    wire_code = "TOO_LARGE"


# -- workflow ---------------------------------------------------------------

class ParseError(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, reason, line=None):
        self.line = line
        self.reason = reason
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"parse error{where}: {reason}")


class UnknownField(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, field):
        super().__init__(f"unknown field: {field}")
        self.field = field


class InvalidGraph(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid graph: " + "; ".join(str(v) for v in self.violations))


# -- pathfinder -------------------------------------------------------------

class UnrecognizedIntent(DomainError):
    wire_code = "INVALID_FORMAT"


class UnknownModel(DomainError):
    wire_code = "NOT_FOUND"


class TooLarge(DomainError):
    wire_code = "TOO_LARGE"


class EmptyPool(DomainError):
    wire_code = "INVALID_FORMAT"


class NoFeasiblePlan(DomainError):
    wire_code = "INVALID_FORMAT"


class InfeasiblePlan(DomainError):
    wire_code = "CONFLICT"


class ImportanceOutOfRange(DomainError):
    wire_code = "INVALID_FORMAT"

    def __init__(self, value):
        super().__init__(f"importance must be in 1..10, got {value}")
        self.value = value


class MismatchedReport(DomainError):
    wire_code = "CONFLICT"


# -- runtime ----------------------------------------------------------------

class TooFewModels(DomainError):
    wire_code = "INVALID_FORMAT"


class UnknownSubtask(DomainError):
    wire_code = "NOT_FOUND"


# -- compute sim ------------------------------------------------------------

class UnfinishedSimulation(DomainError):
    """max_ticks elapsed with pending jobs; the partial report is attached."""

    wire_code = "CONFLICT"

    def __init__(self, job_ids, report):
        super().__init__(f"unfinished jobs: {', '.join(job_ids)}")
        self.job_ids = list(job_ids)
        self.report = report


class LedgerUnavailable(DomainError):
    wire_code = "INTERNAL"


# -- ledger -----------------------------------------------------------------

class ValidationError(DomainError):
    wire_code = "INVALID_FORMAT"


class NoAgreement(DomainError):
    wire_code = "NOT_FOUND"

    def __init__(self, model):
        super().__init__(f"no effective agreement for model {model!r}")
        self.model = model


class NegativeAmount(DomainError):
    wire_code = "INVALID_FORMAT"


class DuplicateEvent(DomainError):
    wire_code = "CONFLICT"


class UnknownAccount(DomainError):
    wire_code = "NOT_FOUND"

    def __init__(self, account):
        super().__init__(f"unknown account: {account}")
        self.account = account


# -- gateway ----------------------------------------------------------------

class ConfigError(DomainError):
    wire_code = "INVALID_FORMAT"


class GatewayError(DomainError):
    """Client-side mirror of a wire error envelope."""

    def __init__(self, code, message, detail=None, status=None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.detail = detail
        self.status = status

"""Exception types shared across the package."""


class QPQError(Exception):
    """Base class for all errors raised by this package."""

    kind = "error"

    def to_dict(self):
        return {"type": self.kind, "message": str(self)}


class LayoutError(QPQError, ValueError):
    """Register labels or dimensions are inconsistent."""

    kind = "layout"


class DatabaseError(QPQError, ValueError):
    """A database failed validation."""

    kind = "database"

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record

    def to_dict(self):
        d = super().to_dict()
        d["record"] = self.record
        return d


class PlanError(QPQError, ValueError):
    """A query plan violates its invariants."""

    kind = "plan"


class ProtocolViolation(QPQError):
    """A party broke message ordering or returned malformed registers."""

    kind = "protocol"


class CapExceededError(QPQError, ValueError):
    """An exact analysis would exceed the documented dimension caps."""

    kind = "cap_exceeded"

    def __init__(self, message, limit, value, cap):
        super().__init__(message)
        self.limit = limit
        self.value = value
        self.cap = cap

    def to_dict(self):
        d = super().to_dict()
        d.update(limit=self.limit, value=self.value, cap=self.cap)
        return d

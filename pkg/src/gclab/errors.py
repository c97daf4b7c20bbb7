"""Exception types shared across the heap, engines, and CLI."""


class GcLabError(Exception):
    """Base class for all errors raised by this package."""


class CapacityError(GcLabError):
    """A generation ran out of space for an allocation or a promotion."""


class InvalidRefError(GcLabError):
    """An object reference or slot index does not resolve."""


class EngineConfigError(GcLabError):
    """An engine configuration is malformed or unsupported for the operation."""


class WorkloadError(GcLabError):
    """A workload configuration is malformed."""


class HeapCorruptionError(GcLabError):
    """Internal consistency was violated (e.g. a forwarding entry is missing).

    This is fatal by design: it indicates a collector bug, not a user error.
    """

"""Exception types shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies.
"""

from __future__ import annotations


class PauliPatchError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(PauliPatchError, ValueError):
    """Operands act on different qubit counts or out-of-range indices."""


class ValidationError(PauliPatchError, ValueError):
    """A document or configuration failed structural validation.

    ``path`` addresses the offending location, e.g. ``gates[3].qubits[1]``.
    """

    def __init__(self, message: str, path: str = "") -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ConfigError(PauliPatchError, ValueError):
    """Mutually inconsistent options (e.g. a coefficient floor in symbolic mode)."""


class PolicyOverflowError(PauliPatchError, RuntimeError):
    """The propagation frontier exceeded the policy's path cap."""

    def __init__(self, message: str, stats=None) -> None:
        self.stats = stats
        super().__init__(message)


class OracleCapError(PauliPatchError, ValueError):
    """A dense-statevector operation was requested beyond its qubit cap."""


class HypothesisViolationError(PauliPatchError, ValueError):
    """A bound calculator was invoked outside its stated regime."""

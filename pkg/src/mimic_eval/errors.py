"""Exception hierarchy shared by all modules.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`GatewayError` (defined in :mod:`mimic_eval.gateway`) to exit status 2.
"""

from __future__ import annotations


class MimicEvalError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(MimicEvalError):
    """Input data, configuration or persisted artifacts failed a check."""

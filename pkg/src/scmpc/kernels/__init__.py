"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is fixed at import time. Set ``SCMPC_NUMBA=0`` (or ``off``,
``false``, ``no``) to force the numpy implementations, e.g. for debugging
under the interpreter. If numba cannot be imported the numpy backend is
used regardless.
"""

import logging
import os

from . import _numpy
from ._source import QP_INFEASIBLE, QP_MAX_ITER, QP_OPTIMAL

log = logging.getLogger(__name__)

_FLAG = os.environ.get("SCMPC_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in {"0", "off", "false", "no"}

_jit = None
if _WANT_NUMBA:
    try:
        from . import _numba as _jit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        log.warning("numba unavailable, falling back to numpy kernels")

BACKEND = "numba" if _jit is not None else "numpy"
_impl = _jit if _jit is not None else _numpy

log_binomial_tail = _impl.log_binomial_tail
bound_integral = _impl.bound_integral
condense_batch = _impl.condense_batch
dual_active_set = _impl.dual_active_set


def backends():
    """Map of backend name to module, for tests and benchmarks."""
    out = {"numpy": _numpy}
    if _jit is not None:
        out["numba"] = _jit
    return out


__all__ = [
    "BACKEND",
    "QP_INFEASIBLE",
    "QP_MAX_ITER",
    "QP_OPTIMAL",
    "backends",
    "bound_integral",
    "condense_batch",
    "dual_active_set",
    "log_binomial_tail",
]

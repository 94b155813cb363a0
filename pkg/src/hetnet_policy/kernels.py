"""Backend selection for the hot loops.

The compiled extension is preferred.  Set ``HETNET_POLICY_BACKEND=python`` to
force the numpy/pure-Python fallback (also used automatically when the
extension has not been built).
"""
from __future__ import annotations

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

_requested = os.environ.get("HETNET_POLICY_BACKEND", "auto").strip().lower()
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(f"HETNET_POLICY_BACKEND must be auto, compiled or python, not {_requested!r}")

_compiled = None
if _requested != "python":
    try:
        from . import _kernels as _compiled
    except ImportError as exc:  # pragma: no cover - depends on the build
        if _requested == "compiled":
            raise
        log.debug("compiled kernels unavailable (%s); using the Python fallback", exc)

_impl = _compiled if _compiled is not None else _fallback
BACKEND = "compiled" if _compiled is not None else "python"

relative_via = _impl.relative_via
bellman_sweep = _impl.bellman_sweep
simulate_chunk = _impl.simulate_chunk


def backends() -> dict:
    """All importable backends by name, for benchmarks and parity tests."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out

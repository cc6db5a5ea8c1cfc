"""Kernel backend selection.

The compiled Cython backend is used when available; the pure-NumPy fallback
otherwise.  CONVEXMC_BACKEND=python or =cython forces a choice (forcing
cython raises if the extension is missing).  Both backends implement the
same counter-based RNG, so integer-derived uniforms agree bit for bit;
transcendental paths (normals, section volumes) may differ in the last ulp,
which is why reproducibility is promised per backend, not across backends.
"""

from __future__ import annotations

import os

from . import pykernels

_FUNCTIONS = (
    "stream_keys",
    "uniform_block",
    "normal_block",
    "normals_consumed",
    "orthonormalize_batch",
    "gram_volume_batch",
    "quadric_section_batch",
    "interval_section_batch",
    "polygon_section_batch",
)

_requested = os.environ.get("CONVEXMC_BACKEND", "").strip().lower()

if _requested in ("", "cython"):
    try:
        from . import cykernels as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise ImportError(
                "CONVEXMC_BACKEND=cython but the compiled extension is not available"
            )
        _impl = pykernels
        BACKEND = "python"
elif _requested == "python":
    _impl = pykernels
    BACKEND = "python"
else:
    raise ValueError(f"unknown CONVEXMC_BACKEND {_requested!r}")

GOLDEN = pykernels.GOLDEN


def active_backend() -> str:
    return BACKEND


for _name in _FUNCTIONS:
    globals()[_name] = getattr(_impl, _name)

__all__ = list(_FUNCTIONS) + ["BACKEND", "active_backend", "GOLDEN", "pykernels"]

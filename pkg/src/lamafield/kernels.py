"""Backend selection for the per-node E-step kernels.

The compiled Cython extension is preferred when it imported cleanly;
the pure-numpy twin is the fallback.  Set LAMAFIELD_PURE_PYTHON=1 to
force the fallback (used by the equivalence tests and the benchmark).
"""

import os

from . import _estep_py

__all__ = ["conditional_moments", "noise_load_logpdf_vec", "BACKEND", "available_backends"]

_FORCE_PY = os.environ.get("LAMAFIELD_PURE_PYTHON", "") not in ("", "0")

try:
    from . import _estep_cy  # type: ignore[attr-defined]
except ImportError:
    _estep_cy = None

if _estep_cy is not None and not _FORCE_PY:
    BACKEND = "cython"
    conditional_moments = _estep_cy.conditional_moments
    noise_load_logpdf_vec = _estep_cy.noise_load_logpdf_vec
else:
    BACKEND = "python"
    conditional_moments = _estep_py.conditional_moments
    noise_load_logpdf_vec = _estep_py.noise_load_logpdf_vec


def available_backends():
    out = {"python": _estep_py}
    if _estep_cy is not None:
        out["cython"] = _estep_cy
    return out

"""Backend selection: compiled kernels when available, numpy otherwise.

Set ``RESIKIT_BACKEND`` to ``compiled`` or ``python`` to force a choice
(``compiled`` raises if the extension is missing); the default ``auto``
prefers the compiled module.
"""
import os

from . import _kernels_py

_choice = os.environ.get("RESIKIT_BACKEND", "auto").lower()

if _choice not in ("auto", "compiled", "python"):
    raise ImportError(f"RESIKIT_BACKEND must be auto|compiled|python, got {_choice!r}")

if _choice == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as _compiled

        kernels = _compiled
    except ImportError:
        if _choice == "compiled":
            raise ImportError(
                "RESIKIT_BACKEND=compiled but resikit._kernels is not built; "
                "reinstall with Cython available or use RESIKIT_BACKEND=python"
            )
        kernels = _kernels_py

BACKEND = "compiled" if kernels is not _kernels_py else "python"

linear_solve = kernels.linear_solve
logistic_solve = kernels.logistic_solve
weighted_gram = kernels.weighted_gram
cubic_moment = kernels.cubic_moment

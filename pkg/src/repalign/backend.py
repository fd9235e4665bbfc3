"""Numba/numpy backend selection for the hot kernels.

The environment variable ``REPALIGN_NUMBA`` controls which implementation
of the kernels in :mod:`repalign._kernels` is used:

* unset (default) — use numba if it imports, otherwise fall back to numpy;
* ``REPALIGN_NUMBA=1`` — require numba, raise if it is unavailable;
* ``REPALIGN_NUMBA=0`` — force the pure-numpy fallback.

The choice is made once at first use. Integer random streams are
bit-identical across backends; float results can differ in the last ulp
(scalar libm vs numpy's vectorized transcendentals), so artifacts are
byte-reproducible per backend, not across backends.
"""

from __future__ import annotations

import os

_state: dict[str, bool | None] = {"numba": None}


def _resolve() -> bool:
    flag = os.environ.get("REPALIGN_NUMBA", "").strip()
    if flag == "0":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        if flag == "1":
            raise ImportError(
                "REPALIGN_NUMBA=1 but numba is not importable"
            ) from None
        return False
    return True


def numba_enabled() -> bool:
    """True if the numba kernel path is active for this process."""
    if _state["numba"] is None:
        _state["numba"] = _resolve()
    return bool(_state["numba"])


def backend_name() -> str:
    return "numba" if numba_enabled() else "numpy"

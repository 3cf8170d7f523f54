"""Runtime limits."""

import os

from .errors import CapExceededError

DEFAULT_DENSE_CAP = 2000


def dense_cap():
    """Largest order admitted for dense O(k^3) kernels.

    Overridable through the KRYMAT_DENSE_CAP environment variable.
    """
    raw = os.environ.get("KRYMAT_DENSE_CAP")
    if raw is None:
        return DEFAULT_DENSE_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValueError(f"KRYMAT_DENSE_CAP must be an integer, got {raw!r}") from exc
    if cap < 1:
        raise ValueError("KRYMAT_DENSE_CAP must be positive")
    return cap


def check_dense_cap(k, what="dense kernel"):
    cap = dense_cap()
    if k > cap:
        raise CapExceededError(f"{what} of order {k} exceeds the dense cap {cap}")

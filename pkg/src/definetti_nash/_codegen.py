"""Compile generated scalar source into numba functions (cached by source)."""
from __future__ import annotations

import threading

import numba as nb
import numpy as np

_JIT = dict(nogil=True, error_model="numpy", cache=False)
_cache: dict = {}
_lock = threading.Lock()


@nb.njit(**_JIT)
def _hermite_scalar(tx, tG, tg, u):
    h = tx[1] - tx[0]
    k = int((u - tx[0]) / h)
    if k < 0:
        k = 0
    if k > tx.shape[0] - 2:
        k = tx.shape[0] - 2
    s = (u - tx[k]) / h
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * tG[k] + h10 * h * tg[k] + h01 * tG[k + 1] + h11 * h * tg[k + 1]


def _decorate(src):
    """Put a jit decorator on every top-level ``def``."""
    out = []
    for line in src.splitlines():
        if line.startswith("def "):
            out.append("@_nb.njit(**_JIT)")
        out.append(line)
    return "\n".join(out) + "\n"


def compile_functions(src: str, namespace: dict, names):
    """Exec ``src`` with jit-decorated defs; return the requested functions.

    Identical ``src`` (and namespace keys) reuse the compiled objects, so the
    same kernel is never compiled twice in one process.
    """
    key = (src, tuple((k, np.asarray(v).tobytes()) for k, v in sorted(namespace.items())))
    with _lock:
        hit = _cache.get(key)
        if hit is None:
            env = {"_nb": nb, "_JIT": _JIT, "np": np, "math": np,
                   "_hermite_scalar": _hermite_scalar}
            env.update(namespace)
            exec(compile(_decorate(src), "<generated>", "exec"), env)
            hit = env
            _cache[key] = hit
    return tuple(hit[n] for n in names)

"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension ``_ckernels`` is used when it was built; otherwise
the pure numpy versions in ``_numpy_kernels`` are selected at import time.
``use_backend`` switches explicitly, which the tests and the benchmark use
to compare the two.
"""

from __future__ import annotations

from . import _numpy_kernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"numpy": _numpy_kernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels

BACKEND = "compiled" if _ckernels is not None else "numpy"
_active = _BACKENDS[BACKEND]


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"numpy"``; returns the previous backend name."""
    global BACKEND, _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} is not available (have {available_backends()})")
    previous = BACKEND
    BACKEND, _active = name, _BACKENDS[name]
    return previous


def objective_and_gradient(t, x, qflat, counts, total, lam):
    return _active.objective_and_gradient(t, x, qflat, counts, float(total), float(lam))


def sweep_rows(superop, unitary, kets, threads: int = 1):
    return _active.sweep_rows(superop, unitary, kets, threads)

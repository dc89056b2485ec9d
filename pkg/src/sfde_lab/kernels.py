"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``SFDE_LAB_PURE=1`` to force the
numpy fallback (the choice is made once, at import).
"""

import os

from . import _pykernels

if os.environ.get("SFDE_LAB_PURE") == "1":
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND

KIND_LINEAR = _pykernels.KIND_LINEAR
KIND_YOSIDA = _pykernels.KIND_YOSIDA
KIND_DELTA = _pykernels.KIND_DELTA

thomas_solve = _impl.thomas_solve
resolvent = _impl.resolvent
resolvent_power = _impl.resolvent_power
phi_reg = _impl.phi_reg
psi_reg = _impl.psi_reg
implicit_solve = _impl.implicit_solve


def available_backends():
    """Names of the backends importable in this build."""
    names = ["python"]
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return names
    return ["cython"] + names


def get_backend(name):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown backend {name!r}")

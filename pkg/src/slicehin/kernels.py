"""Backend selection for the hot loops.

The compiled extension is used when it imports cleanly; set
``SLICEHIN_PURE_PYTHON=1`` to force the pure-Python fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("SLICEHIN_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python') or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def uniform_walks(indptr, indices, starts, walk_length, uniforms):
    return _impl.uniform_walks(indptr, indices, starts, walk_length, uniforms)


def sgns_block(w_in, w_out, centers, contexts, negatives, lr):
    return _impl.sgns_block(w_in, w_out, centers, contexts, negatives, lr)

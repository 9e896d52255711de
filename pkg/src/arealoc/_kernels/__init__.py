"""Backend selection for the ray-casting kernels.

The compiled Cython extension is preferred; the numpy implementation is the
fallback with identical semantics.  AREALOC_KERNELS=cython|numpy|auto
overrides the choice (auto is the default).
"""

import os

BACKEND = "numpy"


def _load():
    global BACKEND
    choice = os.environ.get("AREALOC_KERNELS", "auto").lower()
    if choice not in ("auto", "cython", "numpy"):
        raise ValueError(f"AREALOC_KERNELS must be auto, cython or numpy, got {choice!r}")
    if choice in ("auto", "cython"):
        try:
            from . import _ray_cy as impl
            BACKEND = "cython"
            return impl
        except ImportError:
            if choice == "cython":
                raise ImportError(
                    "AREALOC_KERNELS=cython but the compiled kernel is not built; "
                    "reinstall with Cython available"
                )
    from . import ray_numpy as impl
    BACKEND = "numpy"
    return impl


_impl = _load()
cast_rays = _impl.cast_rays
score_grid = _impl.score_grid

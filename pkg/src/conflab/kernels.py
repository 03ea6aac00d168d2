"""Backend selection for the hot loops.

The compiled extension ``conflab._kernels`` is used when it imports; otherwise
the numpy versions in ``conflab._pure`` are used.  Setting the environment
variable ``CONFLAB_PURE_PYTHON=1`` forces the numpy path.
"""

import os

from . import _pure

BACKEND = "python"
_compiled = None

if os.environ.get("CONFLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _pure


def _contig(a, dtype):
    import numpy as np
    return np.ascontiguousarray(a, dtype=dtype)


def geodesic_distances(p1, p2, x1, x2, impl=None):
    impl = impl or _impl
    return impl.geodesic_distances(_contig(p1, complex), _contig(p2, complex),
                                   complex(x1), complex(x2))


def ball_mass(p1, p2, w, delta, x1, x2, r, impl=None):
    impl = impl or _impl
    return float(impl.ball_mass(_contig(p1, complex), _contig(p2, complex),
                                _contig(w, float), _contig(delta, float),
                                complex(x1), complex(x2), float(r)))


def rho_bisect(p1, p2, w, delta, x1, x2, target, tol, impl=None):
    impl = impl or _impl
    return float(impl.rho_bisect(_contig(p1, complex), _contig(p2, complex),
                                 _contig(w, float), _contig(delta, float),
                                 complex(x1), complex(x2), float(target), float(tol)))


def log_potential(sx, sy, sw, tx, ty, self_value, coincide2, impl=None):
    impl = impl or _impl
    return impl.log_potential(_contig(sx, float), _contig(sy, float), _contig(sw, float),
                              _contig(tx, float), _contig(ty, float),
                              float(self_value), float(coincide2))


def implementations():
    """Available backends as a name -> module mapping (for benchmarks and tests)."""
    out = {"python": _pure}
    if _compiled is not None:
        out["compiled"] = _compiled
    return out

"""Kernel backend selection.

Three configurations of the hot numeric kernels exist:

* ``hybrid`` (default when the extension is importable) -- BLAS-backed NumPy
  for the matrix products, the compiled Cython module for the elementwise and
  row-wise kernels. Benchmarks show BLAS dominating the small-matrix products
  while the compiled loops win 2-4x on activations, row softmax/logsumexp,
  and the Adam update.
* ``cython`` -- every kernel from the compiled module.
* ``numpy``  -- the pure NumPy fallback, used automatically when the
  extension failed to build.

Set ``ALPHAMIX_KERNELS`` to ``hybrid``, ``cython`` or ``numpy`` to force one;
forcing a configuration that needs the unavailable compiled module raises, so
benchmarks never silently compare a backend with itself.

Any single configuration is deterministic: repeated calls on identical inputs
return bit-identical results. Configurations may differ from each other in
the last bits (different summation orders), which is why cross-backend tests
compare with tolerances while rerun tests compare exactly.
"""

import os

from alphamix._kernels import numpy_backend

try:
    from alphamix._kernels import _cykernels
except ImportError:
    _cykernels = None

_MATRIX = ("matmul", "linear", "linear_grads")
_POINTWISE = ("leaky_relu", "leaky_relu_grad", "sigmoid", "sigmoid_grad",
              "softmax_rows", "logsumexp_rows", "adam_update")

_requested = os.environ.get("ALPHAMIX_KERNELS", "").strip().lower()
if _requested not in ("", "hybrid", "cython", "numpy"):
    raise ImportError(
        f"ALPHAMIX_KERNELS={_requested!r} is not a backend; "
        "use 'hybrid', 'cython' or 'numpy'")
if _requested in ("hybrid", "cython") and _cykernels is None:
    raise ImportError(
        f"ALPHAMIX_KERNELS={_requested} needs the compiled extension; "
        "build it with: python setup.py build_ext --inplace")

if _requested == "":
    _requested = "numpy" if _cykernels is None else "hybrid"

BACKEND = _requested
_matrix_impl = numpy_backend if BACKEND in ("hybrid", "numpy") else _cykernels
_point_impl = numpy_backend if BACKEND == "numpy" else _cykernels

for _name in _MATRIX:
    globals()[_name] = getattr(_matrix_impl, _name)
for _name in _POINTWISE:
    globals()[_name] = getattr(_point_impl, _name)

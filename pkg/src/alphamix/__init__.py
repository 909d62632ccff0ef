"""Routed mixture-of-experts pipeline for quantitative stock investment.

Subpackages/modules:

* ``autodiff``, ``layers``, ``optim``  -- float64 tensor substrate with
  reverse-mode gradients, dense layers, Adam
* ``marketdata``, ``dataset``          -- bars, CSV/synthetic markets,
  features, labels, windows, splits
* ``moe``                              -- stage-1 experts and the loss stack
* ``router``                           -- stage-2 gating and routed inference
* ``backtest``                         -- daily top-k strategy and risk metrics
* ``checkpoint``, ``config``           -- persistence and run configuration
* ``experiments``, ``cli``             -- orchestration and the command line

The hot kernels run on a compiled extension when available; see
``alphamix._kernels`` for backend selection.
"""

__version__ = "0.1.0"

from alphamix._kernels import BACKEND as KERNEL_BACKEND  # noqa: F401

"""Dynamical entropy and purification rates of continuously monitored quantum systems.

Three independent routes to the same quantities:

* :mod:`qdynent.monitor` enumerates every outcome string of a small system,
* :mod:`qdynent.gaussian` conditions a free-boson bath exactly,
* :mod:`qdynent.spectral` evaluates the asymptotic rate integrals and the
  Planckian bound constants.
"""

from importlib.metadata import PackageNotFoundError, version

from .ledger import EntropyLedger
from .operators import (
    DensityMatrix,
    HermitianOperator,
    OperatorError,
    kron,
    matrix_function,
    trace_product,
    von_neumann_entropy,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "EntropyLedger", "HermitianOperator", "DensityMatrix", "OperatorError", "kron",
    "matrix_function", "trace_product", "von_neumann_entropy", "__version__",
]

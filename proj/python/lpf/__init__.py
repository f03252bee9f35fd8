"""Latent posterior factors: multi-evidence probabilistic aggregation.

Thin python surface over the C++ core: probability primitives, the
synthetic evidence world, Monte Carlo factorization with a quadrature
oracle, SPN / learned / uniform aggregation, the trainer, calibration
metrics, and the bound-verification harness.
"""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401

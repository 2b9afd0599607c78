"""Warm-starting online bandit oracles from logged data.

Subpackages follow the pipeline: ``core`` (types and contracts), ``oracles``
(online learners), ``forest`` (multi-action regression forest), ``evaluators``
(offline outcome synthesizers), ``framework`` (virtual-play interleaving),
``environments`` (synthetic and replay data), ``experiments`` (metrics,
regret-bound calculators, orchestration, CLI).
"""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]

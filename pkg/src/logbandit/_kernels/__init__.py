"""Kernel backend selection.

Imports the compiled Cython kernels when available, otherwise the pure-Python
twins. Both consume randomness from the shared numpy bit generator in the
same order, so the choice never changes results, only speed. Set
``LOGBANDIT_PURE=1`` to force the pure backend (used by the benchmark and the
backend-equivalence tests).
"""

import os

if os.environ.get("LOGBANDIT_PURE"):
    from . import _pure as _backend
else:
    try:
        from . import _core as _backend
    except ImportError:
        from . import _pure as _backend

BACKEND = _backend.BACKEND
build_tree = _backend.build_tree
tree_apply = _backend.tree_apply
walk_leaf = _backend.walk_leaf
forest_accumulate = _backend.forest_accumulate
example1_ucb_em_episodes = _backend.example1_ucb_em_episodes

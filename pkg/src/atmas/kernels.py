"""Kernel backend selection.

The compiled extension is used when importable; set ``ATMAS_PURE_PYTHON=1``
to force the pure-Python kernels.
"""

import logging
import os

from atmas import _pykernels

logger = logging.getLogger(__name__)

_impl = _pykernels
BACKEND = "python"
if not os.environ.get("ATMAS_PURE_PYTHON"):
    try:
        from atmas import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        logger.info("compiled kernels unavailable; using pure-Python fallback")

build_tree = _impl.build_tree
tree_votes = _impl.tree_votes
forest_votes = _impl.forest_votes
waypoint_walk = _impl.waypoint_walk

__all__ = ["BACKEND", "build_tree", "tree_votes", "forest_votes", "waypoint_walk"]

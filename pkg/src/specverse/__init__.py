"""specverse: multiverse analysis engine.

Enumerates defensible decision combinations, executes one analysis per
combination with timeout/failure/convergence handling, and summarizes
robustness via classification metrics and specification curves.
"""

from .version import ENGINE_VERSION, PROTOCOL_VERSION

__version__ = ENGINE_VERSION

__all__ = ["ENGINE_VERSION", "PROTOCOL_VERSION", "__version__"]

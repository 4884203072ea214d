"""Duality-based traffic engineering toolkit.

Library + CLI for minimum max-link-utilization routing over precomputed
path sets: topology/traffic synthesis, an exact LP oracle with dual
extraction, and a learned, topology-agnostic dual-update operator trained
end-to-end through a small autodiff kernel.
"""

__version__ = "0.1.0"

CHECKPOINT_VERSION = 1

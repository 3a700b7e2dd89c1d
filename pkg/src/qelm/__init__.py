"""Quantum extreme learning machines: architectures, targets and resource bounds."""

__version__ = "0.1.0"

# Expose modules for direct import
from qelm import (
    architectures as architectures,
    bounds as bounds,
    dynamics as dynamics,
    learn as learn,
    qcore as qcore,
    targets as targets,
)

"""Desk-scale simulation and verification lab for M/M/n+M (Erlang-A) queues.

The package couples an exact event-driven simulator of the Erlang-A queue
with closed-form fluid limits, Euler-Maruyama samplers of the limit
diffusions, exact birth-death steady-state analytics, and numerical
two-parameter path operators (composition, inverse, regulator maps).
A harness module runs scaling experiments across server counts and checks
the empirical processes against the limit references.
"""

from erlanga.paths import Grid2, LinearPath, PathBundle, StepPath
from erlanga.simulate import ModelParams, SimConfig, sample_virtual_wait, simulate

__version__ = "0.1.0"

__all__ = [
    "Grid2",
    "LinearPath",
    "ModelParams",
    "PathBundle",
    "SimConfig",
    "StepPath",
    "sample_virtual_wait",
    "simulate",
    "__version__",
]

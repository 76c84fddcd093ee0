"""Activated random walk on finite boxes of Z^d: site-wise stacks, stabilization, chance counting."""
from arwlab.engine import (
    TRUE_STAB, Configuration, CouplingViolation, EngineError, Strong, Weak,
    coupled_true_vs_strong, five_step_experiment, stabilize, strong_stabilize_iterative, topple,
)
from arwlab.lattice import Box, make_box
from arwlab.stacks import Params, StackSource

__version__ = "0.1.0"

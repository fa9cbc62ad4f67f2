"""Phases of matrices and MIMO systems, and phase-based synchronization
analysis and design for heterogeneous multi-agent networks."""

from .errors import *  # noqa: F401,F403
from .ltisys import PersistentModes, StateSpace, TransferMatrix
from .netgraph import WeightedDigraph
from .phasecore import Kind, PhaseProfile, classify, essential_phase, phases

__version__ = "0.1.0"

"""Numerical laboratory for Strichartz estimates of orthonormal systems in Schatten classes."""
from .errors import *  # noqa: F401,F403
from .spectral import SpatialGrid, TimeWindow, WaveFunction, free_propagate, forward_fourier
from .oracle import CoherentEnsembleParams, CoherentStateParams
from .schatten import DenseOperator, schatten_norm, singular_values
from .strichartz import LowRankState, MixedNormSpec

__version__ = "0.1.0"

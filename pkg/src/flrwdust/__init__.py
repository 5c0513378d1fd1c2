"""Pressureless relativistic dust on expanding (FLRW) backgrounds by characteristics."""

from .blowup import (BlowupReport, epsilon_threshold, find_blowup_time, leading_coefficient_sign,
                     lifespan_bound, scalar_blowup_time_1d, theorem2_blowup_certificate)
from .characteristics import CharacteristicFlow, JacobianEval
from .density import DensityEval, density_along_char, density_gradient
from .errors import *  # noqa: F401,F403
from .initial_data import InitialData
from .oracle import GridState, Oracle
from .scale import Regime, ScaleFactor
from .spherical import SphericalFlow

__version__ = "0.1.0"

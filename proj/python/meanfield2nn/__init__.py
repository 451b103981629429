"""Mean-field dynamics and statics of two-layer networks."""

from ._core import *  # noqa: F401,F403
from ._core import __version__, Activation, ConfigError, DivergenceError  # noqa: F401

"""Alias of :mod:`waveguide.cylinder`, the axisymmetric reference solver."""

from .cylinder import *  # noqa: F401,F403
from .cylinder import __all__  # noqa: F401

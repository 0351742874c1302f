"""Python bindings for the oss simulation core."""

from ._oss import *  # noqa: F401,F403
from ._oss import __version__  # noqa: F401

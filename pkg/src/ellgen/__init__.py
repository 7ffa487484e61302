"""Elliptic genera of pairs, global orbifolds and symmetric products, with toroidal checks."""

from __future__ import annotations

from . import genus, geom, modelfile, series, suite, symprod, theta, toroidal
from .genus import *  # noqa: F401,F403
from .geom import *  # noqa: F401,F403
from .modelfile import *  # noqa: F401,F403
from .series import *  # noqa: F401,F403
from .suite import *  # noqa: F401,F403
from .symprod import *  # noqa: F401,F403
from .theta import *  # noqa: F401,F403
from .toroidal import *  # noqa: F401,F403

__version__ = "0.1.0"

__all__ = [
    *series.__all__,
    *theta.__all__,
    *geom.__all__,
    *genus.__all__,
    *symprod.__all__,
    *toroidal.__all__,
    *modelfile.__all__,
    *suite.__all__,
]

"""Instance retrieval toolkit: R-MAC, PCA-whitening, AQE/DBA/diffusion and evaluation."""

from ._instret import *  # noqa: F401,F403
from ._instret import IoError, StageError, PIPELINES  # noqa: F401

__version__ = "0.1.0"

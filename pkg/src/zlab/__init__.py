"""Numerical laboratory for Zygmund-type smoothness spaces on Lipschitz
domains and the action of restricted Calderon-Zygmund operators on them."""
from importlib.metadata import PackageNotFoundError, version

from ._accel import backend_name
from .errors import ZlabError

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover - running from a source tree
    __version__ = "0.0.0"

__all__ = ["ZlabError", "backend_name", "__version__"]

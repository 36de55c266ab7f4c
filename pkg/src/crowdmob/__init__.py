"""Crowd mobility analytics from Wi-Fi probe requests and choke-point cameras."""

from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

"""Multidimensional constellation shaping under fiber nonlinearity."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.0.0"

"""Hyperedge-filling self-supervised learning on hypergraphs."""
from hypeboy.kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]

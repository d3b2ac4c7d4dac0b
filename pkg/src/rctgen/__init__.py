"""Random constructive-tree point clouds and MMD-guided dataset distillation."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]

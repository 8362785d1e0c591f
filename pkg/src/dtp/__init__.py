"""Decoupling-then-perceive low-light super-resolution on a small numpy autodiff engine."""

__version__ = "0.1.0"

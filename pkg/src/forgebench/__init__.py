"""Config-driven generator of synthesizable ML hardware kernels."""

__version__ = "0.1.0"

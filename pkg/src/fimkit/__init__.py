"""Fisher information metrics learned from point clouds through data diffusion."""

__version__ = "0.1.0"

"""GENERIC structure and simulation of Eulerian thermo-visco-elastoplasticity with diffusion."""

__version__ = "0.1.0"

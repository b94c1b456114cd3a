"""Simulation and mean-square theory for affine combinations of diffusion
LMS strategies running over a network of agents."""

__version__ = "0.1.0"

"""Wasserstein-2 barycenters of sampleable measures via a generative
fixed-point iteration, with closed-form Gaussian references and a
constructive benchmark built from congruent convex potentials."""

__version__ = "0.1.0"

"""Excited solitons of the cubic NLS with a potential in 3D (radial).

Soliton branches, the linearized pencil and its unstable pair, modulation
coordinates near the excited orbit, a radial time stepper with trajectory
classification, and the bisection for the center-stable manifold.
"""

__version__ = "0.1.0"

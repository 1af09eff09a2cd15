"""Simplicial mixed finite elements for linearized Cosserat elasticity.

Provides H(div)-conforming stress/couple-stress spaces (Raviart-Thomas and
Brezzi-Douglas-Marini families), strongly and weakly coupled mixed
discretizations, direct and preconditioned iterative solvers, error/rate
analysis, and a configuration-driven experiment CLI (``cosserat-mfe``).
"""

__version__ = "0.1.0"

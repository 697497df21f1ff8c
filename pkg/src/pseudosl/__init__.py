"""Numerical pipeline for the spectrum and pseudospectrum of a drifting
singular diffusion operator on [-1, 1] with periodic boundary conditions.

The operator is u -> (f u' + u)' with an odd diffusion coefficient f vanishing
linearly at the interior point x = 0.  The package builds its regular solution
through a normal-form transformation, locates the (purely imaginary) point
spectrum, constructs quasimode witnesses certifying resolvent growth deep in
the numerical range, and probes compactness of the inverse through singular
value decay.
"""

__version__ = "0.1.0"

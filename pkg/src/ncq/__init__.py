"""Finite-dimensional checks of q-Gaussian central limits, quasi-free CAR
moments and Khintchine-type norm equivalences.

Everything is realized with dense complex matrices; see the submodules:

``linalg``       Kronecker products, singular values, matrix functions.
``partitions``   (pair) partitions, crossings and partition weights.
``quasifree``    Jordan-Wigner CAR matrices, quasi-free densities, Wick sums.
``climit``       Speicher's random-sign model and its moments.
``solver``       ADMM for sums of nuclear norms under a linear split.
``khintchine``   both sides of the Khintchine equivalences, copies model.
``opspaces``     OH norm, R+C quotient norms, R_p weights.
``cli``          the ``ncq`` batch driver.
"""

__version__ = "0.1.0"


class NcqError(Exception):
    """Base class for errors raised by this package."""


class CapExceededError(NcqError, ValueError):
    """A dimension or size cap was exceeded."""


class NumericalError(NcqError, ArithmeticError):
    """A numerical kernel failed (non-convergence, overflow)."""


class PreconditionError(NcqError, ValueError):
    """Input violates a documented precondition."""

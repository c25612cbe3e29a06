"""phiorder: phi-order growth calculus for meromorphic functions and q-difference equations."""

from mpmath import mp

from .numeric import DEFAULT_PREC

mp.prec = DEFAULT_PREC

__version__ = "0.1.0"

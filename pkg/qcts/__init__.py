"""
Trapping-set enumeration and error-floor estimation for quasi-cyclic LDPC codes.
"""
__version__ = "1.0.0"

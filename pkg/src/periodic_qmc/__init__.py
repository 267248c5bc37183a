"""Lattice cubature for elliptic PDEs with periodic random coefficients.

Submodules: :mod:`special_fn`, :mod:`spod_weights`, :mod:`cbc`,
:mod:`lattice`, :mod:`random_field`, :mod:`fem`, :mod:`experiments` and
the command line front end :mod:`cli`.
"""

__version__ = "0.1.0"

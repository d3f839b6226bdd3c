"""Toolkit for natural overdetermined elliptic problems in the plane.

Canonical solution families, natural Neumann data, candidate audits,
shape-tensor line fields with half-integer indices, and a Newton
finite-difference Dirichlet solver for manufacturing grid inputs.
"""
__version__ = "0.1.0"

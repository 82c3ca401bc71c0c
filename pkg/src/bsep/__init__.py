"""Structure-preserving eigensolvers for Bethe-Salpeter eigenvalue problems."""
__version__ = "0.1.0"

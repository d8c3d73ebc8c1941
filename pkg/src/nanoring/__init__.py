"""Collective spontaneous emission of atomic nanorings around an optical nanofiber.

Units throughout: fiber radius a = 1, c = 1 (so k0 = omega), decay rates in
units of the free-space rate gamma0.
"""
__version__ = "0.1.0"

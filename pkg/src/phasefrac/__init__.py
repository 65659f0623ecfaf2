"""Finite-element solver for variational phase-field fracture.

Implements the AT1, AT2 and phase-field cohesive-zone (PF-CZM) models with
isotropic, volumetric-deviatoric, spectral and cohesive stress-based energy
splits, assembled either from the damage weak form directly or through an
equivalent nonlinear source-term route.
"""

__version__ = "0.1.0"

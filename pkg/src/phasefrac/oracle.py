"""Closed-form one-dimensional and homogeneous solutions.

These are the independent references the test suite and the verify
subcommand measure the finite-element path against. They describe the
ideal continuum: the residual stiffness kappa is deliberately omitted, so
comparisons against the solver absorb an O(kappa) discrepancy.

The fully developed crack profiles solve the one-dimensional damage
equation w'(phi) = 2 ell^2 phi'' with phi(0) = 1. The homogeneous
responses solve the same balance with the gradient dropped, which turns
the PDE into pointwise algebra in the driving history H = E eps^2 / 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import constitutive as cn


class OracleError(ValueError):
    """Inputs outside an oracle's domain of validity."""


@dataclass(frozen=True)
class Profile1D:
    """Sampled crack profile: phi over signed distance from the crack."""

    x: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        if self.x.shape != self.phi.shape:
            raise OracleError("x and phi must have matching shapes")


def _check_ell(ell: float) -> float:
    ell = float(ell)
    if ell <= 0.0:
        raise OracleError("length scale must be positive")
    return ell


def at2_profile(x, ell: float) -> np.ndarray:
    """Optimal AT2 profile phi = exp(-|x|/ell); supported on the whole line."""
    ell = _check_ell(ell)
    return np.exp(-np.abs(np.asarray(x, dtype=float)) / ell)


def at1_profile(x, ell: float) -> np.ndarray:
    """Optimal AT1 profile (1 - |x|/(2 ell))^2 with compact support |x| <= 2 ell."""
    ell = _check_ell(ell)
    x = np.asarray(x, dtype=float)
    ramp = np.maximum(1.0 - np.abs(x) / (2.0 * ell), 0.0)
    return ramp * ramp


def profile(model: str, x, ell: float) -> Profile1D:
    model = model.strip().lower()
    x = np.asarray(x, dtype=float)
    if model == cn.AT2:
        return Profile1D(x, at2_profile(x, ell))
    if model == cn.AT1:
        return Profile1D(x, at1_profile(x, ell))
    raise OracleError(f"no closed-form profile for model '{model}'")


def profile_second_derivative(model: str, x, ell: float) -> np.ndarray:
    """Hand-differentiated phi'' of the optimal profiles.

    Written out independently of the profile formulas so that the ODE
    residual check catches a transcription slip in either one. The kink at
    x = 0 is treated as the limit from either branch (the formulas agree
    there); for AT1 the region outside the support carries phi'' = 0.
    """
    ell = _check_ell(ell)
    x = np.asarray(x, dtype=float)
    if model == cn.AT2:
        return np.exp(-np.abs(x) / ell) / ell**2
    if model == cn.AT1:
        inside = np.abs(x) < 2.0 * ell
        return np.where(inside, 1.0 / (2.0 * ell**2), 0.0)
    raise OracleError(f"no closed-form profile for model '{model}'")


def ode_residual(model: str, x, ell: float) -> np.ndarray:
    """Pointwise residual w'(phi) - 2 ell^2 phi'' of the profile equation.

    Outside the AT1 support the profile is held at zero by the
    irreversibility constraint rather than the ODE, so the residual is
    reported as zero there.
    """
    model = model.strip().lower()
    x = np.asarray(x, dtype=float)
    phi = profile(model, x, ell).phi
    _, w1, _, _ = cn.crack_geometry(model, phi)
    resid = w1 - 2.0 * ell**2 * profile_second_derivative(model, x, ell)
    if model == cn.AT1:
        resid = np.where(np.abs(x) < 2.0 * ell, resid, 0.0)
    return resid


def profile_energy(model: str, ell: float, gc: float) -> float:
    """Regularized surface energy of the optimal profile, by adaptive
    quadrature; equals gc per unit crack area in the ideal continuum."""
    model = model.strip().lower()
    ell = _check_ell(ell)
    if model not in (cn.AT1, cn.AT2):
        raise OracleError(f"no closed-form profile for model '{model}'")
    _, _, _, cw = cn.crack_geometry(model, 0.0)

    def density(x):
        phi = profile(model, np.array([x]), ell).phi[0]
        w, _, _, _ = cn.crack_geometry(model, phi)
        if model == cn.AT2:
            dphi = -np.exp(-x / ell) / ell
        else:
            dphi = -(1.0 - x / (2.0 * ell)) / ell if x < 2.0 * ell else 0.0
        return w / ell + ell * dphi * dphi

    upper = np.inf if model == cn.AT2 else 2.0 * ell
    half, _ = quad(density, 0.0, upper)
    return gc / (4.0 * cw) * 2.0 * half


def at2_critical_strain(mat: cn.Material) -> float:
    return float(np.sqrt(mat.Gc / (3.0 * mat.ell * mat.E)))


def at2_critical_stress(mat: cn.Material) -> float:
    return float(9.0 / 16.0 * np.sqrt(mat.E * mat.Gc / (3.0 * mat.ell)))


def at1_threshold_strain(mat: cn.Material) -> float:
    return float(np.sqrt(3.0 * mat.Gc / (8.0 * mat.ell * mat.E)))


def at1_critical_stress(mat: cn.Material) -> float:
    return float(np.sqrt(3.0 * mat.Gc * mat.E / (8.0 * mat.ell)))


def homogeneous_response(model: str, mat: cn.Material, eps):
    """Uniaxial stress curve of the gradient-free damage balance.

    Returns (sigma, sigma_c). The loading must be monotone non-decreasing
    so the history equals the current energy. sigma_c is evaluated through
    the same curve formulas at the analytic critical strain, which lets a
    test confirm the closed-form strength algebra independently.
    """
    model = model.strip().lower()
    eps = np.asarray(eps, dtype=float)
    if eps.size and np.any(np.diff(eps) < 0.0):
        raise OracleError("strain sequence must be monotone non-decreasing")

    if model == cn.AT2:
        def curve(e):
            big_h = 0.5 * mat.E * e**2
            phi = 2.0 * big_h / (mat.Gc / mat.ell + 2.0 * big_h)
            return (1.0 - phi) ** 2 * mat.E * e

        return curve(eps), float(curve(at2_critical_strain(mat)))

    if model == cn.AT1:
        eps_e = at1_threshold_strain(mat)

        def curve(e):
            e = np.asarray(e, dtype=float)
            soft = 9.0 * mat.Gc**2 / (64.0 * mat.ell**2 * mat.E * np.maximum(e, eps_e) ** 3)
            return np.where(e <= eps_e, mat.E * e, soft)

        return curve(eps), float(curve(eps_e))

    raise OracleError(f"no homogeneous oracle for model '{model}'")

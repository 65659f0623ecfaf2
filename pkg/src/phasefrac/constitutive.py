"""Material-point laws for phase-field fracture.

Covers isotropic elasticity, the degradation and geometric crack functions of
the AT1, AT2 and PF-CZM models, the four strain-energy splits (isotropic,
volumetric-deviatoric, spectral, principal-stress based), the damage driving
force with its model-dependent floor, and the history field.

Conventions
-----------
Units are mm, N, MPa throughout.  2D strains are Voigt vectors
(eps_xx, eps_yy, gamma_xy) with engineering shear; 3D Voigt order is
(xx, yy, zz, yz, xz, xy).  The residual stiffness kappa is *not* folded into
the degradation function; assembly applies it as [g(phi) + kappa].

All split evaluations operate on the full 3D strain reconstructed from the
2D state: plane strain sets eps_zz = 0, plane stress closes the thickness
direction with the elastic relation eps_zz = -nu/(1-nu)(eps_xx + eps_yy).
That closure gives sigma_zz = 0 exactly whenever the full isotropic stress is
degraded (the hybrid formulation, hence every benchmark here); for
anisotropically split materials in plane stress it is an elastic
approximation of the thickness condensation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import PLANE_STRAIN, PLANE_STRESS

AT1 = "at1"
AT2 = "at2"
PFCZM_LINEAR = "pfczm-linear"
PFCZM_EXPONENTIAL = "pfczm-exponential"
MODELS = (AT1, AT2, PFCZM_LINEAR, PFCZM_EXPONENTIAL)

ISOTROPIC = "isotropic"
VOLDEV = "voldev"
SPECTRAL = "spectral"
PFCZM_STRESS = "pfczm-stress"
SPLITS = (ISOTROPIC, VOLDEV, SPECTRAL, PFCZM_STRESS)

HYBRID = "hybrid"
ANISOTROPIC = "anisotropic"
FORMULATIONS = (HYBRID, ANISOTROPIC)

# Pairs of principal strains closer than this (relative to the largest
# eigenvalue magnitude) are treated as coalescent; the split tangent then
# falls back to the full elastic tensor (see split_pieces).
EIG_COALESCENCE_RTOL = 1e-10


class ConstitutiveError(ValueError):
    """Invalid material parameters or model combination."""


@dataclass(frozen=True)
class Material:
    """Isotropic elastic constants plus fracture parameters.

    E in MPa, Gc in N/mm, ft in MPa (required only by the PF-CZM models),
    ell in mm, kappa dimensionless.
    """

    E: float
    nu: float
    Gc: float
    ell: float
    ft: float = 0.0
    kappa: float = 1e-7

    def __post_init__(self):
        if self.E <= 0:
            raise ConstitutiveError(f"E must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise ConstitutiveError(f"nu must lie in (-1, 0.5), got {self.nu}")
        if self.Gc <= 0:
            raise ConstitutiveError(f"Gc must be positive, got {self.Gc}")
        if self.ell <= 0:
            raise ConstitutiveError(f"ell must be positive, got {self.ell}")
        if not 0.0 < self.kappa < 1.0:
            raise ConstitutiveError(f"kappa must lie in (0, 1), got {self.kappa}")

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def bulk(self) -> float:
        return self.E / (3.0 * (1.0 - 2.0 * self.nu))


@dataclass(frozen=True)
class ModelChoice:
    """Fracture model, energy split and formulation, validated as a set.

    The principal-stress split only makes sense with the PF-CZM driving
    force, and the PF-CZM models always degrade the full stress (hybrid).
    The isotropic split has a vanishing inactive part, so its hybrid and
    anisotropic formulations coincide; both spellings are accepted.
    """

    model: str
    split: str = ISOTROPIC
    formulation: str = HYBRID

    def __post_init__(self):
        object.__setattr__(self, "model", self.model.strip().lower())
        object.__setattr__(self, "split", self.split.strip().lower())
        object.__setattr__(self, "formulation", self.formulation.strip().lower())
        if self.model not in MODELS:
            raise ConstitutiveError(
                f"unknown model {self.model!r}; expected one of {MODELS}"
            )
        if self.split not in SPLITS:
            raise ConstitutiveError(
                f"unknown split {self.split!r}; expected one of {SPLITS}"
            )
        if self.formulation not in FORMULATIONS:
            raise ConstitutiveError(
                f"unknown formulation {self.formulation!r}; expected one of {FORMULATIONS}"
            )
        if self.split == PFCZM_STRESS and not self.is_pfczm:
            raise ConstitutiveError(
                "the pfczm-stress split requires a PF-CZM model"
            )
        if self.is_pfczm and self.formulation != HYBRID:
            raise ConstitutiveError(
                "PF-CZM models are only available with the hybrid formulation"
            )
        if self.split == PFCZM_STRESS and self.formulation != HYBRID:
            raise ConstitutiveError(
                "the pfczm-stress split is only available with the hybrid formulation"
            )

    @property
    def is_pfczm(self) -> bool:
        return self.model in (PFCZM_LINEAR, PFCZM_EXPONENTIAL)

    @property
    def family(self) -> str:
        """Geometric-function family: "at1", "at2" or "pfczm"."""
        return "pfczm" if self.is_pfczm else self.model

    def validate_material(self, mat: Material):
        if self.is_pfczm and mat.ft <= 0:
            raise ConstitutiveError("PF-CZM models require ft > 0")


def pfczm_a(E: float, Gc: float, ft: float, ell: float) -> float:
    """Slope parameter of the PF-CZM degradation, a = 4 E Gc / (pi ell ft^2)."""
    if min(E, Gc, ft, ell) <= 0:
        raise ConstitutiveError("pfczm_a requires positive E, Gc, ft, ell")
    return 4.0 * E * Gc / (np.pi * ell * ft**2)


def _pfczm_bd(model: str) -> tuple[float, float]:
    if model == PFCZM_LINEAR:
        return -0.5, 2.0
    return 2.0 ** (5.0 / 3.0) - 3.0, 2.5


def degradation(choice: ModelChoice, phi, mat: Material | None = None):
    """Degradation function g(phi) and its first two derivatives.

    Quadratic (1-phi)^2 for AT1/AT2; the rational cohesive form
    g = (1-phi)^d / [(1-phi)^d + a*phi*(1 + b*phi)] for PF-CZM, whose
    parameters depend on the material.  phi is clamped to [0, 1]; kappa is
    not included (assembly adds it).  Returns scalars for scalar input.
    """
    phi_arr = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    if choice.is_pfczm:
        if mat is None:
            raise ConstitutiveError("PF-CZM degradation needs the material for a")
        choice.validate_material(mat)
        a = pfczm_a(mat.E, mat.Gc, mat.ft, mat.ell)
        b, d = _pfczm_bd(choice.model)
        one = 1.0 - phi_arr
        p = one**d
        dp = -d * one ** (d - 1.0)
        ddp = d * (d - 1.0) * one ** (d - 2.0) if d != 2.0 else np.full_like(phi_arr, 2.0)
        q = p + a * phi_arr * (1.0 + b * phi_arr)
        dq = dp + a * (1.0 + 2.0 * b * phi_arr)
        ddq = ddp + 2.0 * a * b
        g = p / q
        g1 = (dp * q - p * dq) / q**2
        g2 = (ddp * q**2 - p * ddq * q - 2.0 * dq * (dp * q - p * dq)) / q**3
    else:
        one = 1.0 - phi_arr
        g = one**2
        g1 = -2.0 * one
        g2 = np.full_like(phi_arr, 2.0)
    if np.ndim(phi) == 0:
        return float(g), float(g1), float(g2)
    return g, g1, g2


def crack_geometry(family: str, phi):
    """Geometric crack function w(phi), w', w'' and the scaling c_w.

    AT2: w = phi^2, c_w = 1/2.  AT1: w = phi, c_w = 2/3.
    PF-CZM: w = 2 phi - phi^2, c_w = pi/4.  c_w equals the integral of
    sqrt(w) over [0, 1] in each case.
    """
    if family in (PFCZM_LINEAR, PFCZM_EXPONENTIAL):
        family = "pfczm"
    phi_arr = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    if family == AT2:
        w = phi_arr**2
        w1 = 2.0 * phi_arr
        w2 = np.full_like(phi_arr, 2.0)
        cw = 0.5
    elif family == AT1:
        w = phi_arr.copy()
        w1 = np.ones_like(phi_arr)
        w2 = np.zeros_like(phi_arr)
        cw = 2.0 / 3.0
    elif family == "pfczm":
        w = 2.0 * phi_arr - phi_arr**2
        w1 = 2.0 - 2.0 * phi_arr
        w2 = np.full_like(phi_arr, -2.0)
        cw = np.pi / 4.0
    else:
        raise ConstitutiveError(f"unknown model family {family!r}")
    if np.ndim(phi) == 0:
        return float(w), float(w1), float(w2), cw
    return w, w1, w2, cw


def driving_force_floor(choice: ModelChoice, mat: Material) -> float:
    """Minimum value of the fracture driving force H.

    Zero for AT2; 3 Gc / (16 ell) for AT1; 2 Gc / (pi a ell) for PF-CZM,
    which algebraically equals ft^2 / (2 E).  The floor is the H level at
    which the phase-field residual vanishes at phi = 0, so holding H at it
    keeps the pristine state an equilibrium.
    """
    if choice.family == AT2:
        return 0.0
    if choice.family == AT1:
        return 3.0 * mat.Gc / (16.0 * mat.ell)
    choice.validate_material(mat)
    a = pfczm_a(mat.E, mat.Gc, mat.ft, mat.ell)
    return 2.0 * mat.Gc / (np.pi * a * mat.ell)


def update_history(h_prev, psi_plus, h_min):
    """KKT history update H = max(H_prev, psi_plus, H_min), elementwise."""
    return np.maximum(np.maximum(h_prev, psi_plus), h_min)


def elastic_tensor(E: float, nu: float, regime: str):
    """Reduced 2D elastic matrix for the regime, plus (lam, mu, K).

    Plane strain uses the Lame form directly; plane stress the standard
    reduced matrix E/(1-nu^2)[[1, nu, 0], [nu, 1, 0], [0, 0, (1-nu)/2]].
    """
    if not -1.0 < nu < 0.5:
        raise ConstitutiveError(f"nu must lie in (-1, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    bulk = E / (3.0 * (1.0 - 2.0 * nu))
    if regime == PLANE_STRAIN:
        c = np.array(
            [
                [lam + 2.0 * mu, lam, 0.0],
                [lam, lam + 2.0 * mu, 0.0],
                [0.0, 0.0, mu],
            ]
        )
    elif regime == PLANE_STRESS:
        f = E / (1.0 - nu**2)
        c = f * np.array(
            [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]
        )
    else:
        raise ConstitutiveError(f"unknown regime {regime!r}")
    return c, lam, mu, bulk


_VOIGT_IDX = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)]
_ISYM6 = np.diag([1.0, 1.0, 1.0, 0.5, 0.5, 0.5])
_VI = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
_J6 = np.outer(_VI, _VI)


def elastic_tensor_3d(lam: float, mu: float) -> np.ndarray:
    """Full 3D elastic matrix in Voigt order (xx, yy, zz, yz, xz, xy)."""
    return lam * _J6 + 2.0 * mu * _ISYM6


def lift_matrix(regime: str, nu: float) -> np.ndarray:
    """Map L from 2D Voigt strain to 3D Voigt strain, eps3 = L @ eps2.

    Plane strain leaves eps_zz = 0; plane stress sets
    eps_zz = -nu/(1-nu)(eps_xx + eps_yy).  Its transpose reduces stresses
    (work-conjugate projection) and L^T C L reduces tangents.
    """
    lift = np.zeros((6, 3))
    lift[0, 0] = lift[1, 1] = lift[5, 2] = 1.0
    if regime == PLANE_STRESS:
        alpha = nu / (1.0 - nu)
        lift[2, 0] = lift[2, 1] = -alpha
    elif regime != PLANE_STRAIN:
        raise ConstitutiveError(f"unknown regime {regime!r}")
    return lift


def lift_strains(eps2d, regime: str, nu: float) -> np.ndarray:
    """3D strain tensors (n, 3, 3) from 2D Voigt strains (n, 3)."""
    eps2d = np.atleast_2d(np.asarray(eps2d, dtype=float))
    n = eps2d.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 0] = eps2d[:, 0]
    out[:, 1, 1] = eps2d[:, 1]
    out[:, 0, 1] = out[:, 1, 0] = 0.5 * eps2d[:, 2]
    if regime == PLANE_STRESS:
        out[:, 2, 2] = -nu / (1.0 - nu) * (eps2d[:, 0] + eps2d[:, 1])
    elif regime != PLANE_STRAIN:
        raise ConstitutiveError(f"unknown regime {regime!r}")
    return out


def _tensors_to_voigt(tensors: np.ndarray) -> np.ndarray:
    """Symmetric (n, 3, 3) tensors to (n, 6) Voigt component vectors."""
    n = tensors.shape[0]
    out = np.empty((n, 6))
    for k, (i, j) in enumerate(_VOIGT_IDX):
        out[:, k] = tensors[:, i, j]
    return out


@dataclass
class SplitPieces:
    """Active/inactive parts of the undamaged response at a batch of points.

    Energies are densities (MPa); stresses are reduced 2D Voigt vectors and
    tangents reduced 2D Voigt matrices.  psi_plus drives the history field;
    the stress/tangent pieces feed the anisotropic formulation
    sigma = (g + kappa) sigma_plus + sigma_minus.
    """

    psi_plus: np.ndarray
    psi_minus: np.ndarray
    sigma_plus: np.ndarray | None = None
    sigma_minus: np.ndarray | None = None
    c_plus: np.ndarray | None = None
    c_minus: np.ndarray | None = None


def _deviator(eps3: np.ndarray) -> np.ndarray:
    """Deviatoric part with an exactly-zero diagonal for hydrostatic input."""
    dev = eps3.copy()
    a, b, c = eps3[:, 0, 0], eps3[:, 1, 1], eps3[:, 2, 2]
    dev[:, 0, 0] = (2.0 * a - b - c) / 3.0
    dev[:, 1, 1] = (2.0 * b - a - c) / 3.0
    dev[:, 2, 2] = (2.0 * c - a - b) / 3.0
    return dev


def _spectral_cplus_voigt(vals: np.ndarray, vecs: np.ndarray, lam: float, mu: float):
    """Voigt (n, 6, 6) tangent of the tensile spectral stress, plus a mask
    of points where eigenvalues coalesce (handled by the caller's fallback).
    """
    n = vals.shape[0]
    scale = np.abs(vals).max(axis=1)
    tol = EIG_COALESCENCE_RTOL * np.maximum(scale, 1e-300)
    gaps = np.stack(
        [
            np.abs(vals[:, 0] - vals[:, 1]),
            np.abs(vals[:, 0] - vals[:, 2]),
            np.abs(vals[:, 1] - vals[:, 2]),
        ],
        axis=1,
    )
    coalesced = (gaps <= tol[:, None]).any(axis=1) | (scale == 0.0)

    tr = vals.sum(axis=1)
    heav_tr = (tr > 0.0).astype(float)
    heav = (vals > 0.0).astype(float)
    pos = np.maximum(vals, 0.0)

    c_plus = lam * heav_tr[:, None, None] * _J6

    # M^a = n_a (x) n_a projector contributions.
    for a in range(3):
        na = vecs[:, :, a]
        ma = np.einsum("ni,nj->nij", na, na)
        vma = _tensors_to_voigt(ma)
        c_plus += 2.0 * mu * heav[:, a, None, None] * np.einsum("ni,nj->nij", vma, vma)

    # Cross terms over unordered pairs; each ordered pair contributes once,
    # so the unordered coefficient is doubled.
    for a in range(3):
        for b in range(a + 1, 3):
            denom = vals[:, a] - vals[:, b]
            safe = np.where(np.abs(denom) > tol, denom, 1.0)
            d_ab = (pos[:, a] - pos[:, b]) / safe
            gab = 0.5 * (
                np.einsum("ni,nj->nij", vecs[:, :, a], vecs[:, :, b])
                + np.einsum("ni,nj->nij", vecs[:, :, b], vecs[:, :, a])
            )
            vg = _tensors_to_voigt(gab)
            c_plus += (
                2.0 * mu * 2.0 * d_ab[:, None, None] * np.einsum("ni,nj->nij", vg, vg)
            )
    return c_plus, coalesced


def split_energy_3d(split: str, eps3, mat: Material):
    """Active/inactive energy densities on full 3D strain tensors (n, 3, 3).

    This is the pointwise material law; the 2D entry points lift the plane
    state to 3D and call it.  Tensile contributions use max(x, 0) directly,
    so negative-definite strains (spectral) and hydrostatic compressions
    (voldev) yield psi_plus = 0 exactly, not merely to round-off.
    """
    eps3 = np.asarray(eps3, dtype=float)
    if eps3.ndim == 2:
        eps3 = eps3[None]
    lam, mu = mat.lam, mat.mu
    tr = np.trace(eps3, axis1=1, axis2=2)
    if split == ISOTROPIC:
        psi = 0.5 * lam * tr**2 + mu * np.einsum("nij,nij->n", eps3, eps3)
        return psi, np.zeros_like(psi)
    if split == VOLDEV:
        bulk = lam + 2.0 * mu / 3.0
        dev = _deviator(eps3)
        psi_p = 0.5 * bulk * np.maximum(tr, 0.0) ** 2 + mu * np.einsum(
            "nij,nij->n", dev, dev
        )
        psi_m = 0.5 * bulk * np.minimum(tr, 0.0) ** 2
        return psi_p, psi_m
    if split == SPECTRAL:
        vals = np.linalg.eigvalsh(eps3)
        pos = np.maximum(vals, 0.0)
        neg = np.minimum(vals, 0.0)
        psi_p = 0.5 * lam * np.maximum(tr, 0.0) ** 2 + mu * (pos**2).sum(axis=1)
        psi_m = 0.5 * lam * np.minimum(tr, 0.0) ** 2 + mu * (neg**2).sum(axis=1)
        return psi_p, psi_m
    if split == PFCZM_STRESS:
        sig0 = lam * tr[:, None, None] * np.eye(3) + 2.0 * mu * eps3
        svals = np.linalg.eigvalsh(sig0)  # ascending: svals[:, 2] is major
        s1, s2, s3 = svals[:, 2], svals[:, 1], svals[:, 0]
        s1_pos = np.maximum(s1, 0.0)
        s1_neg = np.minimum(s1, 0.0)
        psi_p = s1_pos**2 / (2.0 * mat.E)
        psi_m = (
            s1 * s1_neg
            + s2**2
            + s3**2
            - 2.0 * mat.nu * (s2 * s3 + s1 * s3 + s1 * s2)
        ) / (2.0 * mat.E)
        return psi_p, psi_m
    raise ConstitutiveError(f"unknown split {split!r}; expected one of {SPLITS}")


def split_pieces(
    split: str,
    eps2d,
    mat: Material,
    regime: str,
    need_tangent: bool = True,
) -> SplitPieces:
    """Evaluate one energy split at a batch of 2D strain states.

    Stress and tangent pieces are reduced to 2D via the regime's kinematic
    lift.  The pfczm-stress split has no stress decomposition (it is only
    used to drive H under the hybrid formulation), so only energies are
    returned for it.  Spectral tangents at eigenvalue-coalescent points
    fall back to the undamaged elastic tensor (c_plus = C0, c_minus = 0);
    stresses are exact everywhere.
    """
    eps2d = np.atleast_2d(np.asarray(eps2d, dtype=float))
    n = eps2d.shape[0]
    lam, mu = mat.lam, mat.mu
    eps3 = lift_strains(eps2d, regime, mat.nu)
    lift = lift_matrix(regime, mat.nu)
    c0_6 = elastic_tensor_3d(lam, mu)

    def reduce_c(c6):
        if c6.ndim == 2:
            return lift.T @ c6 @ lift
        return np.einsum("ji,njk,kl->nil", lift, c6, lift)

    def reduce_sig(sig_tensors):
        return _tensors_to_voigt(sig_tensors) @ lift

    psi_plus, psi_minus = split_energy_3d(split, eps3, mat)
    pieces = SplitPieces(psi_plus=psi_plus, psi_minus=psi_minus)
    if not need_tangent or split == PFCZM_STRESS:
        return pieces

    tr = np.trace(eps3, axis1=1, axis2=2)
    eye = np.eye(3)

    if split == ISOTROPIC:
        sig = lam * tr[:, None, None] * eye + 2.0 * mu * eps3
        pieces.sigma_plus = reduce_sig(sig)
        pieces.sigma_minus = np.zeros((n, 3))
        pieces.c_plus = np.broadcast_to(reduce_c(c0_6), (n, 3, 3)).copy()
        pieces.c_minus = np.zeros((n, 3, 3))
    elif split == VOLDEV:
        bulk = lam + 2.0 * mu / 3.0
        dev = _deviator(eps3)
        sig_p = bulk * np.maximum(tr, 0.0)[:, None, None] * eye + 2.0 * mu * dev
        sig_m = bulk * np.minimum(tr, 0.0)[:, None, None] * eye
        pieces.sigma_plus = reduce_sig(sig_p)
        pieces.sigma_minus = reduce_sig(sig_m)
        heav = (tr > 0.0).astype(float)
        kdev6 = _ISYM6 - _J6 / 3.0
        c_p6 = bulk * heav[:, None, None] * _J6 + 2.0 * mu * kdev6
        c_m6 = bulk * (1.0 - heav)[:, None, None] * _J6
        pieces.c_plus = reduce_c(c_p6)
        pieces.c_minus = reduce_c(c_m6)
    else:  # SPECTRAL
        vals, vecs = np.linalg.eigh(eps3)
        pos = np.maximum(vals, 0.0)
        eps_pos = np.einsum("nia,na,nja->nij", vecs, pos, vecs)
        sig_p = lam * np.maximum(tr, 0.0)[:, None, None] * eye + 2.0 * mu * eps_pos
        sig_full = lam * tr[:, None, None] * eye + 2.0 * mu * eps3
        pieces.sigma_plus = reduce_sig(sig_p)
        pieces.sigma_minus = reduce_sig(sig_full - sig_p)
        c_p6, coalesced = _spectral_cplus_voigt(vals, vecs, lam, mu)
        c_p6[coalesced] = c0_6
        c_m6 = c0_6[None, :, :] - c_p6
        pieces.c_plus = reduce_c(c_p6)
        pieces.c_minus = reduce_c(c_m6)
    return pieces


def split_energy(split: str, eps2d, mat: Material, regime: str):
    """Active/inactive energy densities (psi_plus, psi_minus) of a split."""
    pieces = split_pieces(split, eps2d, mat, regime, need_tangent=False)
    if np.asarray(eps2d).ndim == 1:
        return float(pieces.psi_plus[0]), float(pieces.psi_minus[0])
    return pieces.psi_plus, pieces.psi_minus


def split_stress_and_tangent(
    split: str,
    formulation: str,
    eps2d,
    g,
    mat: Material,
    regime: str,
):
    """Degraded stress and consistent tangent at a batch of points.

    Hybrid: sigma = (g + kappa) C0 : eps with the full elastic tensor.
    Anisotropic: sigma = (g + kappa) sigma_plus + sigma_minus and the
    matching tangent.  g is the already-evaluated degradation value.
    """
    eps2d = np.atleast_2d(np.asarray(eps2d, dtype=float))
    gk = np.asarray(g, dtype=float) + mat.kappa
    if gk.ndim == 0:
        gk = np.full(eps2d.shape[0], float(gk))
    if formulation == HYBRID:
        c0, _, _, _ = elastic_tensor(mat.E, mat.nu, regime)
        sigma = gk[:, None] * (eps2d @ c0.T)
        tangent = gk[:, None, None] * c0[None, :, :]
        return sigma, tangent
    if formulation != ANISOTROPIC:
        raise ConstitutiveError(f"unknown formulation {formulation!r}")
    if split == PFCZM_STRESS:
        raise ConstitutiveError(
            "the pfczm-stress split has no anisotropic formulation"
        )
    pieces = split_pieces(split, eps2d, mat, regime, need_tangent=True)
    sigma = gk[:, None] * pieces.sigma_plus + pieces.sigma_minus
    tangent = gk[:, None, None] * pieces.c_plus + pieces.c_minus
    return sigma, tangent

"""Element residuals and tangents, global sparse assembly, Dirichlet handling.

Two independent routes to the phase-field block are provided and cross-checked
in the tests: the canonical weak form

    R_phi_i = int { g'(phi) N_i H + (Gc / (2 c_w ell)) [ (w'/2) N_i
              + ell^2 B_i . grad(phi) ] } dV

with its consistent tangent, and the steady-heat-equation route, where the
block is assembled as conduction (unit conductivity) against a nonlinear
source r(phi, H) and then rescaled by the constant Gc*ell/(2*c_w).  Both are
algebraically the same weak form; the second exists for verification.

Displacement DOFs are interleaved (ux1, uy1, ux2, ...); the phase field has
one DOF per node.  The displacement and phase blocks are assembled with no
coupling blocks, matching the decoupled iteration of the solver.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import constitutive as cn
from .mesh import Mesh, element_kinematics, gauss_rule, shape_eval


class AssemblyError(ValueError):
    """Inconsistent element state or constraint data."""


@dataclass
class ElementState:
    """Everything needed to evaluate one element's residuals and tangents.

    coords are the element node coordinates (m, 2); u_e is the interleaved
    displacement vector (2m,); phi_e the nodal phase values (m,); h_qp the
    history field at the element's quadrature points.
    """

    coords: np.ndarray
    u_e: np.ndarray
    phi_e: np.ndarray
    h_qp: np.ndarray
    material: cn.Material
    choice: cn.ModelChoice
    regime: str


def element_residuals(state: ElementState):
    """Internal-force residuals (R_u^e, R_phi^e) by quadrature."""
    mat, choice = state.material, state.choice
    kind = "q4" if state.coords.shape[0] == 4 else "t3"
    pts, wts = gauss_rule(kind)
    m = state.coords.shape[0]
    r_u = np.zeros(2 * m)
    r_phi = np.zeros(m)
    gc, ell = mat.Gc, mat.ell
    for q, (xi, wt) in enumerate(zip(pts, wts)):
        n, _ = shape_eval(kind, xi)
        b_u, b_phi, detj = element_kinematics(state.coords, xi)
        dv = wt * detj
        eps = b_u @ state.u_e
        phi = float(n @ state.phi_e)
        grad_phi = b_phi @ state.phi_e
        g, g1, _ = cn.degradation(choice, phi, mat)
        w, w1, _, cw = cn.crack_geometry(choice.family, phi)
        sigma, _ = cn.split_stress_and_tangent(
            choice.split, choice.formulation, eps[None], g, mat, state.regime
        )
        r_u += dv * (b_u.T @ sigma[0])
        r_phi += dv * (
            g1 * state.h_qp[q] * n
            + gc / (2.0 * cw * ell) * (0.5 * w1 * n + ell**2 * (b_phi.T @ grad_phi))
        )
    return r_u, r_phi


def element_tangents(state: ElementState):
    """Consistent tangent blocks (K_uu^e, K_phiphi^e) by quadrature."""
    mat, choice = state.material, state.choice
    kind = "q4" if state.coords.shape[0] == 4 else "t3"
    pts, wts = gauss_rule(kind)
    m = state.coords.shape[0]
    k_uu = np.zeros((2 * m, 2 * m))
    k_pp = np.zeros((m, m))
    gc, ell = mat.Gc, mat.ell
    for q, (xi, wt) in enumerate(zip(pts, wts)):
        n, _ = shape_eval(kind, xi)
        b_u, b_phi, detj = element_kinematics(state.coords, xi)
        dv = wt * detj
        eps = b_u @ state.u_e
        phi = float(n @ state.phi_e)
        g, _, g2 = cn.degradation(choice, phi, mat)
        _, _, w2, cw = cn.crack_geometry(choice.family, phi)
        _, c_tan = cn.split_stress_and_tangent(
            choice.split, choice.formulation, eps[None], g, mat, state.regime
        )
        k_uu += dv * (b_u.T @ c_tan[0] @ b_u)
        coeff = g2 * state.h_qp[q] + gc / (4.0 * cw * ell) * w2
        k_pp += dv * (coeff * np.outer(n, n) + gc * ell / (2.0 * cw) * (b_phi.T @ b_phi))
    return k_uu, k_pp


def heat_source(choice: cn.ModelChoice, phi, h, mat: cn.Material):
    """Nonlinear source term of the heat-equation route and its derivative.

    r = -g'(phi) H 2 c_w / (ell Gc) - w'(phi) / (2 ell^2), and the same
    expression with g'', w'' for the derivative.  At phi = 0 with H at the
    model's floor, r vanishes: the floor is defined by that cancellation.
    """
    _, g1, g2 = cn.degradation(choice, phi, mat)
    _, w1, w2, cw = cn.crack_geometry(choice.family, phi)
    gc, ell = mat.Gc, mat.ell
    r = -g1 * h * 2.0 * cw / (ell * gc) - w1 / (2.0 * ell**2)
    dr = -g2 * h * 2.0 * cw / (ell * gc) - w2 / (2.0 * ell**2)
    return r, dr


def analogy_scale(mat: cn.Material, choice: cn.ModelChoice) -> float:
    """Factor mapping the heat-route block to the canonical scaling."""
    _, _, _, cw = cn.crack_geometry(choice.family, 0.0)
    return mat.Gc * mat.ell / (2.0 * cw)


@dataclass
class ElementData:
    """Precomputed quadrature data for vectorized assembly over a mesh.

    Shapes: b_u (nel, nqp, 3, 2m), b_phi (nel, nqp, 2, m), shape functions
    n (nqp, m), weighted Jacobians wdetj (nel, nqp), DOF maps u_dofs
    (nel, 2m) and the element connectivity for the scalar field.
    """

    mesh: Mesh
    n: np.ndarray
    b_u: np.ndarray
    b_phi: np.ndarray
    wdetj: np.ndarray
    u_dofs: np.ndarray
    caches: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, mesh: Mesh) -> "ElementData":
        pts, wts = gauss_rule(mesh.kind)
        coords = mesh.element_coords()  # (nel, m, 2)
        nel, m, _ = coords.shape
        nqp = len(wts)
        shp = np.empty((nqp, m))
        dshp = np.empty((nqp, m, 2))
        for q, xi in enumerate(pts):
            shp[q], dshp[q] = shape_eval(mesh.kind, xi)
        # jac[e, q, i, j] = d x_i / d xi_j
        jac = np.einsum("emi,qmj->eqij", coords, dshp)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        inv = np.empty_like(jac)
        inv[..., 0, 0] = jac[..., 1, 1] / det
        inv[..., 1, 1] = jac[..., 0, 0] / det
        inv[..., 0, 1] = -jac[..., 0, 1] / det
        inv[..., 1, 0] = -jac[..., 1, 0] / det
        dndx = np.einsum("qmi,eqij->eqmj", dshp, inv)
        b_u = np.zeros((nel, nqp, 3, 2 * m))
        b_u[:, :, 0, 0::2] = dndx[..., 0]
        b_u[:, :, 1, 1::2] = dndx[..., 1]
        b_u[:, :, 2, 0::2] = dndx[..., 1]
        b_u[:, :, 2, 1::2] = dndx[..., 0]
        b_phi = dndx.transpose(0, 1, 3, 2).copy()
        wdetj = det * wts[None, :]
        u_dofs = np.empty((nel, 2 * m), dtype=np.int64)
        u_dofs[:, 0::2] = 2 * mesh.elements
        u_dofs[:, 1::2] = 2 * mesh.elements + 1
        return cls(mesh, shp, b_u, b_phi, wdetj, u_dofs)

    @property
    def n_qp(self) -> int:
        return self.wdetj.shape[1]


def quadrature_strains(data: ElementData, u: np.ndarray) -> np.ndarray:
    """Voigt strains at every quadrature point, shape (nel, nqp, 3)."""
    u_elem = u[data.u_dofs]
    return np.einsum("eqij,ej->eqi", data.b_u, u_elem)


def psi_plus_at_qp(
    data: ElementData, u: np.ndarray, mat: cn.Material, choice: cn.ModelChoice
) -> np.ndarray:
    """Active energy density driving the history field, shape (nel, nqp)."""
    eps = quadrature_strains(data, u)
    flat = eps.reshape(-1, 3)
    pp, _ = cn.split_energy(choice.split, flat, mat, data.mesh.regime)
    return pp.reshape(eps.shape[:2])


def fracture_energy(
    data: ElementData, mat: cn.Material, choice: cn.ModelChoice, phi: np.ndarray
) -> float:
    """Regularized surface energy Gc/(4 c_w) int (w/ell + ell |grad phi|^2) dV."""
    phi_elem = phi[data.mesh.elements]
    phi_qp = phi_elem @ data.n.T
    grad_phi = np.einsum("eqam,em->eqa", data.b_phi, phi_elem)
    w, _, _, cw = cn.crack_geometry(choice.family, phi_qp)
    density = w / mat.ell + mat.ell * np.einsum("eqa,eqa->eq", grad_phi, grad_phi)
    return mat.Gc / (4.0 * cw) * float(np.sum(density * data.wdetj))


def elastic_energy(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    u: np.ndarray,
    phi: np.ndarray,
) -> float:
    """Stored strain energy consistent with the stress of the formulation."""
    eps = quadrature_strains(data, u)
    phi_qp = phi[data.mesh.elements] @ data.n.T
    g, _, _ = cn.degradation(choice, phi_qp, mat)
    pp, pm = cn.split_energy(choice.split, eps.reshape(-1, 3), mat, data.mesh.regime)
    pp = pp.reshape(phi_qp.shape)
    pm = pm.reshape(phi_qp.shape)
    if choice.formulation == cn.ANISOTROPIC:
        density = (g + mat.kappa) * pp + pm
    else:
        density = (g + mat.kappa) * (pp + pm)
    return float(np.sum(density * data.wdetj))


@dataclass
class SparseSystem:
    """Assembled decoupled blocks; the coupling blocks do not exist."""

    k_uu: sp.csr_matrix
    k_pp: sp.csr_matrix
    r_u: np.ndarray
    r_phi: np.ndarray


def _scatter(values: np.ndarray, dofs: np.ndarray, ndof: int) -> sp.csr_matrix:
    """Sum (nel, k, k) blocks into a global CSR matrix."""
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    mat = sp.coo_matrix((values.ravel(), (rows, cols)), shape=(ndof, ndof))
    return mat.tocsr()


class _Pattern:
    """Fixed COO-to-CSR reduction for one block sparsity.

    The entry order, merged slots and index arrays depend only on the DOF
    map, so they are computed once; each assembly then reduces its value
    array into the cached structure in a fixed deterministic order.
    """

    def __init__(self, dofs: np.ndarray, ndof: int):
        k = dofs.shape[1]
        rows = np.repeat(dofs, k, axis=1).ravel()
        cols = np.tile(dofs, (1, k)).ravel()
        order = np.lexsort((cols, rows))
        rs, cs = rows[order], cols[order]
        first = np.empty(rs.size, dtype=bool)
        first[0] = True
        first[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        starts = np.flatnonzero(first)
        counts = np.bincount(rs[starts], minlength=ndof)
        self.order = order
        self.starts = starts
        self.indices = cs[starts].astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.shape = (ndof, ndof)

    def csr(self, values: np.ndarray) -> sp.csr_matrix:
        data = np.add.reduceat(values.ravel()[self.order], self.starts)
        out = sp.csr_matrix((data, self.indices, self.indptr), shape=self.shape)
        out.has_sorted_indices = True
        out.has_canonical_format = True
        return out


def _cached_pattern(data: ElementData, key: str, dofs: np.ndarray, ndof: int):
    pattern = data.caches.get(key)
    if pattern is None or pattern.shape[0] != ndof:
        pattern = _Pattern(dofs, ndof)
        data.caches[key] = pattern
    return pattern


def _hybrid_kernel(data: ElementData, mat: cn.Material) -> np.ndarray:
    """Per-qp stiffness kernels B' C0 B w detJ, cached per elastic tensor.

    Valid whenever the stress is (g + kappa) C0 : eps, i.e. the hybrid
    formulation with any split; the displacement block then contracts
    these kernels with the scalar (g + kappa) per quadrature point.
    """
    key = ("ke0", mat.E, mat.nu)
    ke0 = data.caches.get(key)
    if ke0 is None:
        c0, _, _, _ = cn.elastic_tensor(mat.E, mat.nu, data.mesh.regime)
        ke0 = np.einsum(
            "eqai,ab,eqbj,eq->eqij", data.b_u, c0, data.b_u, data.wdetj, optimize=True
        )
        data.caches[key] = ke0
    return ke0


def _phase_kernels(data: ElementData):
    """Constant phase-block pieces: diffusion kernel and shape outer products."""
    got = data.caches.get("phase")
    if got is None:
        kd0 = np.einsum(
            "eqai,eqaj,eq->eij", data.b_phi, data.b_phi, data.wdetj, optimize=True
        )
        nn = data.n[:, :, None] * data.n[:, None, :]
        got = (kd0, nn)
        data.caches["phase"] = got
    return got


def _element_arrays(data, mat, choice, u, phi, h_qp, lo, hi, ke0, kd0, nn):
    """Dense element blocks for elements [lo, hi), vectorized over them."""
    mesh = data.mesh
    nel = hi - lo
    nqp = data.n_qp
    gc, ell = mat.Gc, mat.ell
    wdetj = data.wdetj[lo:hi]
    h = h_qp[lo:hi]

    u_elem = u[data.u_dofs[lo:hi]]
    phi_elem = phi[mesh.elements[lo:hi]]
    phi_qp = phi_elem @ data.n.T  # (nel, nqp)

    g, g1, g2 = cn.degradation(choice, phi_qp, mat)
    _, w1, w2, cw = cn.crack_geometry(choice.family, phi_qp)

    if ke0 is not None:
        # Hybrid stress is (g + kappa) C0 : eps, so both the tangent and
        # the internal force contract the cached kernels with g + kappa.
        k_uu_e = np.einsum("eq,eqij->eij", g + mat.kappa, ke0[lo:hi])
        r_u_e = np.einsum("eij,ej->ei", k_uu_e, u_elem)
    else:
        b_u = data.b_u[lo:hi]
        eps = np.einsum("eqij,ej->eqi", b_u, u_elem)
        flat_eps = eps.reshape(-1, 3)
        sigma, c_tan = cn.split_stress_and_tangent(
            choice.split, choice.formulation, flat_eps, g.ravel(), mat, mesh.regime
        )
        sigma = sigma.reshape(nel, nqp, 3)
        c_tan = c_tan.reshape(nel, nqp, 3, 3)
        r_u_e = np.einsum("eqai,eqa,eq->ei", b_u, sigma, wdetj)
        cb = np.einsum("eqab,eqbj->eqaj", c_tan, b_u)
        k_uu_e = np.einsum("eqai,eqaj,eq->eij", b_u, cb, wdetj)

    source = g1 * h + gc / (2.0 * cw * ell) * 0.5 * w1
    r_phi_e = np.einsum("eq,qi->ei", source * wdetj, data.n)
    r_phi_e += gc * ell / (2.0 * cw) * np.einsum("eim,em->ei", kd0[lo:hi], phi_elem)
    coeff = g2 * h + gc / (4.0 * cw * ell) * w2
    k_pp_e = np.einsum("eq,qij->eij", coeff * wdetj, nn)
    k_pp_e += gc * ell / (2.0 * cw) * kd0[lo:hi]
    return k_uu_e, k_pp_e, r_u_e, r_phi_e


def assemble_global(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    u: np.ndarray,
    phi: np.ndarray,
    h_qp: np.ndarray,
    threads: int = 1,
) -> SparseSystem:
    """Assemble both blocks over the whole mesh, vectorized over elements.

    h_qp has shape (nel, nqp) and must already reflect the solution
    scheme's freshness rule; assembly is policy-free.

    threads > 1 splits the element range into that many contiguous chunks
    evaluated on a thread pool and merged in chunk order, so repeated runs
    with the same thread count agree bit for bit.  The global scatter stays
    serial; speedups are therefore modest and taper beyond a few threads.
    """
    mesh = data.mesh
    nel = mesh.n_elements
    n_u = 2 * mesh.n_nodes
    n_p = mesh.n_nodes
    ke0 = _hybrid_kernel(data, mat) if choice.formulation == cn.HYBRID else None
    kd0, nn = _phase_kernels(data)
    pat_u = _cached_pattern(data, "pattern_u", data.u_dofs, n_u)
    pat_p = _cached_pattern(data, "pattern_p", mesh.elements, n_p)

    if threads <= 1 or nel < 4 * threads:
        parts = [_element_arrays(data, mat, choice, u, phi, h_qp, 0, nel, ke0, kd0, nn)]
    else:
        bounds = np.linspace(0, nel, threads + 1).astype(np.int64)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(
                    _element_arrays,
                    data, mat, choice, u, phi, h_qp, lo, hi, ke0, kd0, nn,
                )
                for lo, hi in zip(bounds[:-1], bounds[1:])
            ]
            parts = [f.result() for f in futures]
    if len(parts) == 1:
        k_uu_e, k_pp_e, r_u_e, r_phi_e = parts[0]
    else:
        k_uu_e, k_pp_e, r_u_e, r_phi_e = (
            np.concatenate([p[i] for p in parts]) for i in range(4)
        )

    r_u = np.bincount(data.u_dofs.ravel(), weights=r_u_e.ravel(), minlength=n_u)
    r_phi = np.bincount(mesh.elements.ravel(), weights=r_phi_e.ravel(), minlength=n_p)
    k_uu = pat_u.csr(k_uu_e)
    k_pp = pat_p.csr(k_pp_e)
    return SparseSystem(k_uu, k_pp, r_u, r_phi)


def assemble_heat_analogy_phase_block(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    phi: np.ndarray,
    h_qp: np.ndarray,
):
    """Phase block via the steady-heat route, in the analogy's own scaling.

    Assembles unit-conductivity diffusion against the source of
    heat_source(); multiply both outputs by analogy_scale() to compare with
    the canonical block of assemble_global().
    """
    mesh = data.mesh
    phi_elem = phi[mesh.elements]
    phi_qp = phi_elem @ data.n.T
    grad_phi = np.einsum("eqam,em->eqa", data.b_phi, phi_elem)
    r, dr = heat_source(choice, phi_qp, h_qp, mat)

    r_e = np.einsum("eqai,eqa,eq->ei", data.b_phi, grad_phi, data.wdetj)
    r_e -= np.einsum("eq,qi->ei", r * data.wdetj, data.n)
    k_e = np.einsum("eqai,eqaj,eq->eij", data.b_phi, data.b_phi, data.wdetj)
    k_e -= np.einsum("eq,qi,qj->eij", dr * data.wdetj, data.n, data.n)

    n_p = mesh.n_nodes
    r_phi = np.zeros(n_p)
    np.add.at(r_phi, mesh.elements, r_e)
    k_pp = _scatter(k_e, mesh.elements, n_p)
    return k_pp, r_phi


def apply_dirichlet(k: sp.csr_matrix, rhs: np.ndarray, dofs, values):
    """Symmetric elimination of Dirichlet constraints.

    Returns (k_mod, rhs_mod) such that solving k_mod x = rhs_mod yields
    x[dofs] = values exactly, with the free equations seeing the folded-in
    prescribed values.  Symmetry is preserved.  Conflicting duplicate
    constraints on one DOF raise.
    """
    n = rhs.shape[0]
    dofs = np.asarray(dofs, dtype=np.int64)
    values = np.asarray(values, dtype=float)
    if dofs.size and (dofs.min() < 0 or dofs.max() >= n):
        raise AssemblyError("constraint DOF index out of range")
    order = np.argsort(dofs, kind="stable")
    ds, vs = dofs[order], values[order]
    dup = ds[1:] == ds[:-1]
    if dup.any():
        if np.any(vs[1:][dup] != vs[:-1][dup]):
            bad = ds[1:][dup & (vs[1:] != vs[:-1])][0]
            raise AssemblyError(f"conflicting duplicate constraints on DOF {bad}")
        keep = np.concatenate([[True], ~dup])
        ds, vs = ds[keep], vs[keep]

    mask = np.zeros(n, dtype=bool)
    mask[ds] = True
    vfull = np.zeros(n)
    vfull[ds] = vs
    rhs_mod = rhs - k @ vfull
    rhs_mod[mask] = vfull[mask]

    free = sp.diags((~mask).astype(float), format="csr")
    pinned = sp.diags(mask.astype(float), format="csr")
    k_mod = (free @ k @ free + pinned).tocsr()
    k_mod.eliminate_zeros()
    return k_mod, rhs_mod

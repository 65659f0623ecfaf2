import numpy as np
import pytest

from phasefrac import assembly as asm
from phasefrac import constitutive as cn
from phasefrac import mesh as pm


@pytest.fixture
def mat():
    return cn.Material(E=100.0, nu=0.0, Gc=0.1, ell=0.1, ft=1.0)


def unit_square_coords():
    return pm.generate_rect(1.0, 1.0, 1, 1).element_coords()[0]


def random_element_state(rng, coords, mat, choice, regime="plane_strain"):
    m = coords.shape[0]
    floor = cn.driving_force_floor(choice, mat)
    return asm.ElementState(
        coords,
        rng.normal(scale=1e-3, size=2 * m),
        rng.uniform(0.05, 0.9, size=m),
        np.maximum(rng.uniform(0.0, 0.05, size=4 if m == 4 else 1), floor),
        mat,
        choice,
        regime,
    )


# ----------------------------------------------------------- element blocks


def test_at2_unloaded_equilibrium(mat):
    coords = unit_square_coords()
    st = asm.ElementState(
        coords, np.zeros(8), np.zeros(4), np.zeros(4), mat,
        cn.ModelChoice("at2"), "plane_strain",
    )
    r_u, r_phi = asm.element_residuals(st)
    assert np.abs(r_u).max() == 0.0
    assert np.abs(r_phi).max() == 0.0


def test_at1_floor_cancellation(mat):
    # at phi = 0 with H held at the AT1 floor, the damage residual vanishes;
    # the floor value is defined by exactly this balance
    choice = cn.ModelChoice("at1")
    h_min = cn.driving_force_floor(choice, mat)
    st = asm.ElementState(
        unit_square_coords(), np.zeros(8), np.zeros(4), np.full(4, h_min),
        mat, choice, "plane_strain",
    )
    _, r_phi = asm.element_residuals(st)
    assert np.abs(r_phi).max() < 1e-14


def test_at2_uniform_phi_residual(mat):
    # uniform phi, no strain, H = 0: only the local w' term remains,
    # giving (Gc/ell) * phi * int N dV = (Gc/ell) * phi / 4 per node
    phi_bar = 0.37
    st = asm.ElementState(
        unit_square_coords(), np.zeros(8), np.full(4, phi_bar), np.zeros(4),
        mat, cn.ModelChoice("at2"), "plane_strain",
    )
    _, r_phi = asm.element_residuals(st)
    expected = mat.Gc / mat.ell * phi_bar / 4.0
    assert np.allclose(r_phi, expected, rtol=1e-13)


def test_undamaged_stiffness_scaling(mat):
    # phi = 0 under the hybrid formulation scales the elastic block
    # by (1 + kappa)
    coords = unit_square_coords()
    choice = cn.ModelChoice("at2")
    st = asm.ElementState(
        coords, np.zeros(8), np.zeros(4), np.zeros(4), mat, choice, "plane_strain"
    )
    k_uu, _ = asm.element_tangents(st)
    c0, _, _, _ = cn.elastic_tensor(mat.E, mat.nu, "plane_strain")
    pts, wts = pm.gauss_rule("q4")
    k_ref = np.zeros((8, 8))
    for xi, wt in zip(pts, wts):
        b_u, _, detj = pm.element_kinematics(coords, xi)
        k_ref += wt * detj * (b_u.T @ c0 @ b_u)
    assert np.allclose(k_uu, (1 + mat.kappa) * k_ref, rtol=1e-13)


def test_at2_phase_mass_coefficient(mat):
    # AT2 at H = 0: the N_i N_j coefficient reduces to Gc/ell and the
    # gradient coefficient to Gc*ell; on the unit square
    # int N1^2 dV = 1/9 and int grad(N1).grad(N1) dV = 2/3
    st = asm.ElementState(
        unit_square_coords(), np.zeros(8), np.zeros(4), np.zeros(4),
        mat, cn.ModelChoice("at2"), "plane_strain",
    )
    _, k_pp = asm.element_tangents(st)
    expected = mat.Gc / mat.ell / 9.0 + mat.Gc * mat.ell * (2.0 / 3.0)
    assert k_pp[0, 0] == pytest.approx(expected, rel=1e-13)


def test_translation_invariance(mat):
    rng = np.random.default_rng(8)
    coords = unit_square_coords() + rng.normal(scale=0.05, size=(4, 2))
    for _ in range(10):
        shift = rng.normal(size=2)
        st = asm.ElementState(
            coords, np.tile(shift, 4), rng.uniform(0, 0.9, 4),
            rng.uniform(0, 0.1, 4), mat, cn.ModelChoice("at2"), "plane_strain",
        )
        r_u, _ = asm.element_residuals(st)
        assert np.abs(r_u).max() < 1e-12 * max(np.abs(shift).max(), 1.0) * mat.E


def test_element_tangents_match_fd(mat):
    # a light version of the full tangent-consistency sweep (the acceptance
    # suite covers all model/split/formulation combinations)
    rng = np.random.default_rng(9)
    coords = unit_square_coords() + rng.normal(scale=0.03, size=(4, 2))
    h = 1e-7
    combos = [
        cn.ModelChoice("at2", split="isotropic", formulation="hybrid"),
        cn.ModelChoice("at2", split="spectral", formulation="anisotropic"),
        cn.ModelChoice("at1", split="voldev", formulation="anisotropic"),
        cn.ModelChoice("pfczm-exponential", split="pfczm-stress", formulation="hybrid"),
    ]
    for choice in combos:
        for _ in range(5):
            st = random_element_state(rng, coords, mat, choice)
            k_uu, k_pp = asm.element_tangents(st)
            fd_u = np.zeros_like(k_uu)
            for j in range(8):
                up, um = st.u_e.copy(), st.u_e.copy()
                up[j] += h
                um[j] -= h
                rp = asm.element_residuals(
                    asm.ElementState(coords, up, st.phi_e, st.h_qp, mat, choice, st.regime)
                )[0]
                rm = asm.element_residuals(
                    asm.ElementState(coords, um, st.phi_e, st.h_qp, mat, choice, st.regime)
                )[0]
                fd_u[:, j] = (rp - rm) / (2 * h)
            assert np.abs(fd_u - k_uu).max() <= 1e-6 * max(np.abs(k_uu).max(), 1.0)
            fd_p = np.zeros_like(k_pp)
            for j in range(4):
                pp, pmi = st.phi_e.copy(), st.phi_e.copy()
                pp[j] += h
                pmi[j] -= h
                rp = asm.element_residuals(
                    asm.ElementState(coords, st.u_e, pp, st.h_qp, mat, choice, st.regime)
                )[1]
                rm = asm.element_residuals(
                    asm.ElementState(coords, st.u_e, pmi, st.h_qp, mat, choice, st.regime)
                )[1]
                fd_p[:, j] = (rp - rm) / (2 * h)
            assert np.abs(fd_p - k_pp).max() <= 1e-6 * max(np.abs(k_pp).max(), 1.0)


# ------------------------------------------------------------- heat source


def test_heat_source_at2_values(mat):
    choice = cn.ModelChoice("at2")
    r, _ = asm.heat_source(choice, 0.0, 0.0, mat)
    assert r == 0.0
    h = 0.05
    r, _ = asm.heat_source(choice, 0.0, h, mat)
    assert r == pytest.approx(2 * h / (mat.ell * mat.Gc), rel=1e-13)


def test_heat_source_at1_floor_cancels(mat):
    choice = cn.ModelChoice("at1")
    h_min = cn.driving_force_floor(choice, mat)
    r, _ = asm.heat_source(choice, 0.0, h_min, mat)
    assert abs(r) < 1e-12


def test_heat_source_derivative_fd(mat):
    rng = np.random.default_rng(10)
    h = 1e-6
    for model in ("at1", "at2", "pfczm-linear"):
        split = "pfczm-stress" if model.startswith("pfczm") else "isotropic"
        choice = cn.ModelChoice(model, split=split)
        for _ in range(50):
            phi = rng.uniform(0.05, 0.95)
            hist = rng.uniform(0.0, 0.2)
            rp, _ = asm.heat_source(choice, phi + h, hist, mat)
            rm, _ = asm.heat_source(choice, phi - h, hist, mat)
            _, dr = asm.heat_source(choice, phi, hist, mat)
            assert (rp - rm) / (2 * h) == pytest.approx(dr, rel=1e-5, abs=1e-8)


# ------------------------------------------------------- global assembly


def test_single_element_global_equals_element_block(mat):
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    data = asm.ElementData.build(mesh)
    rng = np.random.default_rng(11)
    choice = cn.ModelChoice("at2")
    u = rng.normal(scale=1e-3, size=8)
    phi = rng.uniform(0, 0.8, size=4)
    h_qp = rng.uniform(0, 0.1, size=(1, 4))
    sys = asm.assemble_global(data, mat, choice, u, phi, h_qp)
    st = asm.ElementState(
        mesh.element_coords()[0], u[data.u_dofs[0]], phi[mesh.elements[0]],
        h_qp[0], mat, choice, mesh.regime,
    )
    r_u, r_phi = asm.element_residuals(st)
    k_uu, k_pp = asm.element_tangents(st)
    conn = mesh.elements[0]
    assert np.allclose(sys.r_u[data.u_dofs[0]], r_u, rtol=1e-13, atol=1e-16)
    assert np.allclose(sys.r_phi[conn], r_phi, rtol=1e-13, atol=1e-16)
    assert np.allclose(sys.k_uu.toarray()[np.ix_(data.u_dofs[0], data.u_dofs[0])], k_uu, rtol=1e-13)
    assert np.allclose(sys.k_pp.toarray()[np.ix_(conn, conn)], k_pp, rtol=1e-13)


def test_shared_edge_rows_are_sums(mat):
    mesh = pm.generate_rect(2.0, 1.0, 2, 1)
    data = asm.ElementData.build(mesh)
    choice = cn.ModelChoice("at2")
    u = np.zeros(2 * mesh.n_nodes)
    phi = np.zeros(mesh.n_nodes)
    h_qp = np.zeros((2, 4))
    sys = asm.assemble_global(data, mat, choice, u, phi, h_qp)
    k = sys.k_pp.toarray()
    contributions = np.zeros_like(k)
    for e in range(2):
        conn = mesh.elements[e]
        st = asm.ElementState(
            mesh.nodes[conn], np.zeros(8), phi[conn], h_qp[e], mat, choice, mesh.regime
        )
        _, k_pp = asm.element_tangents(st)
        contributions[np.ix_(conn, conn)] += k_pp
    assert np.allclose(k, contributions, rtol=1e-13)
    # shared nodes 1 and 4 belong to both elements
    single = asm.element_tangents(
        asm.ElementState(mesh.nodes[mesh.elements[0]], np.zeros(8),
                         np.zeros(4), np.zeros(4), mat, choice, mesh.regime)
    )[1]
    assert k[1, 1] == pytest.approx(2 * single[1, 1], rel=1e-13)


def test_global_matvec_matches_element_sum(mat):
    rng = np.random.default_rng(12)
    mesh = pm.generate_rect(3.0, 2.0, 3, 2)
    data = asm.ElementData.build(mesh)
    choice = cn.ModelChoice("at1", split="spectral", formulation="anisotropic")
    u = rng.normal(scale=1e-3, size=2 * mesh.n_nodes)
    phi = rng.uniform(0, 0.9, size=mesh.n_nodes)
    floor = cn.driving_force_floor(choice, mat)
    h_qp = np.maximum(rng.uniform(0, 0.1, size=(mesh.n_elements, 4)), floor)
    sys = asm.assemble_global(data, mat, choice, u, phi, h_qp)
    v = rng.normal(size=2 * mesh.n_nodes)
    by_elements = np.zeros_like(v)
    for e in range(mesh.n_elements):
        dofs = data.u_dofs[e]
        st = asm.ElementState(
            mesh.nodes[mesh.elements[e]], u[dofs], phi[mesh.elements[e]],
            h_qp[e], mat, choice, mesh.regime,
        )
        k_uu, _ = asm.element_tangents(st)
        by_elements[dofs] += k_uu @ v[dofs]
    assert np.allclose(sys.k_uu @ v, by_elements, rtol=1e-12, atol=1e-14)


def test_blocks_symmetric(mat):
    rng = np.random.default_rng(13)
    mesh = pm.generate_rect(2.0, 2.0, 4, 4, kind=pm.T3)
    data = asm.ElementData.build(mesh)
    choice = cn.ModelChoice("at2", split="voldev", formulation="anisotropic")
    u = rng.normal(scale=1e-3, size=2 * mesh.n_nodes)
    phi = rng.uniform(0, 0.9, size=mesh.n_nodes)
    h_qp = rng.uniform(0, 0.1, size=(mesh.n_elements, 1))
    sys = asm.assemble_global(data, mat, choice, u, phi, h_qp)
    assert abs(sys.k_uu - sys.k_uu.T).max() < 1e-12 * abs(sys.k_uu).max()
    assert abs(sys.k_pp - sys.k_pp.T).max() < 1e-12 * abs(sys.k_pp).max()


def test_zero_measure_damage_all_models(mat):
    # phi = 0 with H at the floor everywhere: no model generates damage
    mesh = pm.generate_rect(2.0, 1.0, 4, 2)
    data = asm.ElementData.build(mesh)
    for model in ("at1", "at2", "pfczm-linear", "pfczm-exponential"):
        split = "pfczm-stress" if model.startswith("pfczm") else "isotropic"
        choice = cn.ModelChoice(model, split=split)
        floor = cn.driving_force_floor(choice, mat)
        h_qp = np.full((mesh.n_elements, 4), floor)
        sys = asm.assemble_global(
            data, mat, choice, np.zeros(2 * mesh.n_nodes),
            np.zeros(mesh.n_nodes), h_qp,
        )
        assert np.abs(sys.r_phi).max() < 1e-13


# ------------------------------------------------------------ heat analogy


def test_heat_analogy_equals_canonical_block(mat):
    rng = np.random.default_rng(14)
    mesh = pm.generate_rect(3.0, 3.0, 3, 3)
    data = asm.ElementData.build(mesh)
    for model in ("at1", "at2", "pfczm-exponential"):
        split = "pfczm-stress" if model.startswith("pfczm") else "isotropic"
        choice = cn.ModelChoice(model, split=split)
        floor = cn.driving_force_floor(choice, mat)
        scale = asm.analogy_scale(mat, choice)
        for _ in range(10):
            phi = rng.uniform(0, 1, size=mesh.n_nodes)
            h_qp = np.maximum(rng.uniform(0, 0.3, size=(mesh.n_elements, 4)), floor)
            sys = asm.assemble_global(
                data, mat, choice, np.zeros(2 * mesh.n_nodes), phi, h_qp
            )
            k_an, r_an = asm.assemble_heat_analogy_phase_block(
                data, mat, choice, phi, h_qp
            )
            assert np.abs(scale * r_an - sys.r_phi).max() < 1e-12
            assert abs(scale * k_an - sys.k_pp).max() < 1e-12


def test_manufactured_profile_residual_rate(mat):
    # nodally interpolated optimal AT2 profile: interior residual entries
    # vanish at least quadratically under x-refinement
    choice = cn.ModelChoice("at2")
    ell = mat.ell
    length = 10 * ell

    def interior_max(nx):
        mesh = pm.generate_rect(length, ell / 10, nx, 1)
        data = asm.ElementData.build(mesh)
        x = mesh.nodes[:, 0]
        xc = length / 2
        phi = np.exp(-np.abs(x - xc) / ell)
        h_qp = np.zeros((mesh.n_elements, 4))
        sys = asm.assemble_global(
            data, mat, choice, np.zeros(2 * mesh.n_nodes), phi, h_qp
        )
        hx = length / nx
        interior = (np.abs(x - xc) > 1.5 * hx) & (x > 1.5 * hx) & (x < length - 1.5 * hx)
        return np.abs(sys.r_phi[interior]).max()

    r100, r200, r400 = interior_max(100), interior_max(200), interior_max(400)
    assert r200 < r100 / 3.8
    assert r400 < r200 / 3.8


# --------------------------------------------------------------- dirichlet


def elastic_k(mat):
    mesh = pm.generate_rect(1.0, 1.0, 2, 2)
    data = asm.ElementData.build(mesh)
    sys = asm.assemble_global(
        data, mat, cn.ModelChoice("at2"), np.zeros(2 * mesh.n_nodes),
        np.zeros(mesh.n_nodes), np.zeros((mesh.n_elements, 4)),
    )
    return mesh, sys


def test_dirichlet_all_fixed_returns_zero(mat):
    _, sys = elastic_k(mat)
    n = sys.r_u.size
    k_mod, rhs = asm.apply_dirichlet(sys.k_uu, -sys.r_u, np.arange(n), np.zeros(n))
    x = np.linalg.solve(k_mod.toarray(), rhs)
    assert np.abs(x).max() == 0.0


def test_dirichlet_prescribed_exact_and_interior_linear(mat):
    mesh, sys = elastic_k(mat)
    left, right = mesh.node_sets["left"], mesh.node_sets["right"]
    delta = 0.01
    dofs = np.concatenate([2 * left, 2 * left + 1, 2 * right])
    vals = np.concatenate([np.zeros(6), np.full(3, delta)])
    k_mod, rhs = asm.apply_dirichlet(sys.k_uu, -sys.r_u, dofs, vals)
    x = np.linalg.solve(k_mod.toarray(), rhs)
    assert np.abs(x[2 * right] - delta).max() == 0.0
    assert np.abs(x[2 * left]).max() == 0.0
    # mid-column ux is the linear interpolant (nu = 0 uniaxial patch)
    mid = np.flatnonzero(np.isclose(mesh.nodes[:, 0], 0.5))
    assert np.allclose(x[2 * mid], delta / 2, atol=1e-14)


def test_dirichlet_preserves_symmetry(mat):
    mesh, sys = elastic_k(mat)
    dofs = np.array([0, 1, 5])
    vals = np.array([0.0, 0.002, -0.003])
    k_mod, _ = asm.apply_dirichlet(sys.k_uu, -sys.r_u, dofs, vals)
    assert abs(k_mod - k_mod.T).max() < 1e-12 * abs(k_mod).max()


def test_dirichlet_conflicting_duplicates_rejected(mat):
    _, sys = elastic_k(mat)
    with pytest.raises(asm.AssemblyError, match="conflicting"):
        asm.apply_dirichlet(sys.k_uu, -sys.r_u, [3, 3], [0.0, 1.0])
    # agreeing duplicates are fine
    asm.apply_dirichlet(sys.k_uu, -sys.r_u, [3, 3], [0.5, 0.5])


def test_dirichlet_out_of_range_rejected(mat):
    _, sys = elastic_k(mat)
    with pytest.raises(asm.AssemblyError, match="out of range"):
        asm.apply_dirichlet(sys.k_uu, -sys.r_u, [10**6], [0.0])

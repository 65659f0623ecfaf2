import csv
import os

import numpy as np
import pytest

from phasefrac import constitutive as cn
from phasefrac import io as fio
from phasefrac import mesh as pm
from phasefrac import solver as sv

VALID = """\
[material]
E = 100.0
nu = 0.0
Gc = 0.1
ell = 0.1
ft = 1.0

[model]
model = "pfczm-exponential"
split = "pfczm-stress"

[solver]
scheme = "monolithic"
increments = 100

[mesh]
regime = "plane_strain"
width = 10.0
height = 2.0
nx = 50
ny = 10

[[bc]]
node_set = "left"
dof = "ux"
value = 0.0

[[bc]]
node_set = "top"
dof = "uy"
value = -0.5

[output]
reaction_set = "top"
snapshot_stride = 10
"""


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def errors_of(tmp_path, text):
    with pytest.raises(fio.ConfigError) as err:
        fio.parse_config(write(tmp_path, text))
    return err.value.errors


# ----------------------------------------------------------------- config


def test_valid_config_parses(tmp_path):
    cfg = fio.parse_config(write(tmp_path, VALID))
    assert cfg.material.E == 100.0 and cfg.material.ft == 1.0
    assert cfg.choice.model == "pfczm-exponential"
    assert cfg.choice.split == "pfczm-stress"
    assert cfg.choice.formulation == "hybrid"  # default
    assert cfg.solve.scheme == "monolithic" and cfg.solve.n_increments == 100
    assert cfg.solve.tol_u == 1e-6  # default
    assert cfg.mesh_spec.nx == 50 and not cfg.mesh_spec.from_file
    assert len(cfg.bcs) == 2 and cfg.bcs[1].value == -0.5 and cfg.bcs[1].ramp
    assert cfg.output.reaction_set == "top"
    assert cfg.output.snapshot_stride == 10
    assert cfg.output.reaction_dof == "uy"  # default
    mesh = cfg.mesh_spec.build()
    assert mesh.n_elements == 500 and mesh.regime == "plane_strain"


def test_missing_ft_for_pfczm_names_key(tmp_path):
    errs = errors_of(tmp_path, VALID.replace("ft = 1.0\n", ""))
    assert len(errs) == 1 and errs[0].startswith("[material].ft:")


def test_pfczm_anisotropic_rejected(tmp_path):
    errs = errors_of(
        tmp_path, VALID.replace('split = "pfczm-stress"',
                                'split = "isotropic"\nformulation = "anisotropic"')
    )
    assert any(e.startswith("[model]:") for e in errs)


def test_all_errors_reported_at_once(tmp_path):
    text = (
        VALID.replace("E = 100.0", "E = -3.0")
        .replace("increments = 100", "increments = 0")
        .replace('dof = "ux"', 'dof = "rotation"')
        .replace("snapshot_stride = 10", "snapshot_stride = -2\ntypo_key = 1")
    )
    errs = errors_of(tmp_path, text)
    joined = "\n".join(errs)
    assert "[material]:" in joined
    assert "[solver]:" in joined
    assert "[bc][0].dof:" in joined
    assert "[output].snapshot_stride:" in joined
    assert "[output].typo_key: unknown key" in joined
    assert len(errs) == 5


def test_unknown_section_and_keys_with_location(tmp_path):
    errs = errors_of(tmp_path, VALID + "\n[plotting]\ncolor = 'red'\n")
    assert errs == ["[plotting]: unknown section"]
    errs = errors_of(tmp_path, VALID.replace("nu = 0.0", "nu = 0.0\nmu = 4.0"))
    assert errs == ["[material].mu: unknown key"]


def test_type_mismatch_reported(tmp_path):
    errs = errors_of(tmp_path, VALID.replace("increments = 100", 'increments = "many"'))
    assert errs == ["[solver].increments: expected integer, got str"]
    errs = errors_of(tmp_path, VALID.replace("E = 100.0", 'E = "big"'))
    assert "[material].E: expected number, got str" in errs


def test_missing_section_reported(tmp_path):
    errs = errors_of(tmp_path, VALID.replace("[solver]", "[solver_typo]"))
    assert "[solver]: missing section" in errs
    assert "[solver_typo]: unknown section" in errs


def test_invalid_toml_reported(tmp_path):
    errs = errors_of(tmp_path, "[material\nE = ")
    assert len(errs) == 1 and "invalid TOML" in errs[0]


def test_missing_file_reported():
    with pytest.raises(fio.ConfigError, match="cannot read"):
        fio.parse_config("/nonexistent/run.toml")


def test_mesh_path_and_generator_conflict(tmp_path):
    errs = errors_of(
        tmp_path, VALID.replace('regime = "plane_strain"',
                                'regime = "plane_strain"\npath = "grid.msh"')
    )
    assert errs == ["[mesh]: give either path or generator keys, not both"]


def test_relative_mesh_path_resolved_against_config(tmp_path):
    grid = pm.generate_rect(1.0, 1.0, 2, 2)
    sub = tmp_path / "cases"
    sub.mkdir()
    pm.write_gmsh22(grid, sub / "grid.msh")
    text = VALID.replace(
        "width = 10.0\nheight = 2.0\nnx = 50\nny = 10", 'path = "grid.msh"'
    )
    cfg = fio.parse_config(write(sub, text))
    assert os.path.isabs(cfg.mesh_spec.path)
    mesh = cfg.mesh_spec.build()
    assert mesh.n_nodes == 9


def test_generator_bounds_checked(tmp_path):
    errs = errors_of(
        tmp_path,
        VALID.replace("width = 10.0", "width = -1.0").replace("nx = 50", "nx = 0"),
    )
    assert "[mesh].width: must be positive" in errs
    assert "[mesh].nx: must be at least 1" in errs


def test_serialize_parse_idempotent(tmp_path):
    cfg = fio.parse_config(write(tmp_path, VALID))
    canon = fio.serialize_config(cfg)
    cfg2 = fio.parse_config(write(tmp_path, canon, "canon.toml"))
    assert fio.serialize_config(cfg2) == canon
    assert cfg2 == cfg


def test_integers_accepted_for_floats(tmp_path):
    cfg = fio.parse_config(write(tmp_path, VALID.replace("E = 100.0", "E = 100")))
    assert cfg.material.E == 100.0 and isinstance(cfg.material.E, float)


# ---------------------------------------------------------- vtk snapshots


GOLDEN_VTK = """\
# vtk DataFile Version 3.0
phasefrac fields increment 0
ASCII
DATASET UNSTRUCTURED_GRID
POINTS 4 double
0.0 0.0 0.0
1.0 0.0 0.0
0.0 1.0 0.0
1.0 1.0 0.0
CELLS 1 5
4 0 1 3 2
CELL_TYPES 1
9
POINT_DATA 4
VECTORS u double
0.0 0.0 0.0
0.0 0.0 0.0
0.0 0.0 0.0
0.0 0.0 0.0
SCALARS phi double 1
LOOKUP_TABLE default
0.0
0.0
0.0
0.0
CELL_DATA 1
SCALARS H double 1
LOOKUP_TABLE default
0.0
"""


def read_vtk(path):
    """Minimal independent reader for the legacy ASCII layout."""
    lines = [ln for ln in open(path).read().splitlines()]
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    i = 4
    n = int(lines[i].split()[1])
    points = np.array([[float(v) for v in lines[i + 1 + j].split()] for j in range(n)])
    i += 1 + n
    nel, total = (int(v) for v in lines[i].split()[1:])
    cells = [[int(v) for v in lines[i + 1 + j].split()][1:] for j in range(nel)]
    i += 1 + nel
    assert lines[i].split()[0] == "CELL_TYPES"
    types = [int(lines[i + 1 + j]) for j in range(nel)]
    i += 1 + nel
    assert lines[i] == f"POINT_DATA {n}"
    assert lines[i + 1] == "VECTORS u double"
    u = np.array([[float(v) for v in lines[i + 2 + j].split()] for j in range(n)])
    i += 2 + n
    assert lines[i] == "SCALARS phi double 1"
    phi = np.array([float(lines[i + 2 + j]) for j in range(n)])
    i += 2 + n
    assert lines[i] == f"CELL_DATA {nel}"
    assert lines[i + 1] == "SCALARS H double 1"
    h = np.array([float(lines[i + 3 + j]) for j in range(nel)])
    assert total == sum(len(c) + 1 for c in cells)
    return points, cells, types, u, phi, h


def zero_state(mesh, nqp=4):
    return sv.State(
        np.zeros(2 * mesh.n_nodes), np.zeros(mesh.n_nodes),
        np.zeros((mesh.n_elements, nqp)),
    )


def test_vtk_golden_file(tmp_path):
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    path = tmp_path / "snap.vtk"
    fio.write_vtk(mesh, zero_state(mesh), path)
    assert path.read_text() == GOLDEN_VTK


def test_vtk_byte_stable(tmp_path):
    mesh = pm.generate_rect(2.0, 1.0, 3, 2)
    rng = np.random.default_rng(5)
    state = sv.State(
        rng.normal(size=2 * mesh.n_nodes),
        rng.uniform(0, 1, mesh.n_nodes),
        rng.uniform(0, 2, (mesh.n_elements, 4)),
        increment=7,
    )
    a, b = tmp_path / "a.vtk", tmp_path / "b.vtk"
    fio.write_vtk(mesh, state, a)
    fio.write_vtk(mesh, state, b)
    assert a.read_bytes() == b.read_bytes()


def test_vtk_single_damaged_node_reads_back(tmp_path):
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    state = zero_state(mesh)
    state.phi[2] = 1.0
    path = tmp_path / "snap.vtk"
    fio.write_vtk(mesh, state, path)
    _, _, _, _, phi, _ = read_vtk(path)
    assert phi[2] == 1.0 and phi.sum() == 1.0


def test_vtk_round_trip_exact(tmp_path):
    mesh = pm.generate_rect(3.0, 2.0, 4, 3, kind=pm.T3)
    rng = np.random.default_rng(6)
    state = sv.State(
        rng.normal(scale=1e-3, size=2 * mesh.n_nodes),
        rng.uniform(0, 1, mesh.n_nodes),
        rng.uniform(0, 2, (mesh.n_elements, 1)),
        increment=3,
    )
    path = tmp_path / "snap.vtk"
    fio.write_vtk(mesh, state, path)
    points, cells, types, u, phi, h = read_vtk(path)
    assert np.abs(points[:, :2] - mesh.nodes).max() < 1e-12
    assert np.array_equal(np.array(cells), mesh.elements)
    assert set(types) == {5}
    assert np.array_equal(u[:, 0], state.u[0::2])
    assert np.array_equal(u[:, 1], state.u[1::2])
    assert np.array_equal(phi, state.phi)
    assert np.array_equal(h, state.h_qp.mean(axis=1))


def test_vtk_rejects_bad_state(tmp_path):
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    state = zero_state(mesh)
    state.phi[0] = 1.5
    with pytest.raises(fio.OutputError, match="phi"):
        fio.write_vtk(mesh, state, tmp_path / "x.vtk")
    short = sv.State(np.zeros(4), np.zeros(4), np.zeros((1, 4)))
    with pytest.raises(fio.OutputError, match="shapes"):
        fio.write_vtk(mesh, short, tmp_path / "x.vtk")


# ------------------------------------------------------------------- csv


def test_csv_header_and_rows(tmp_path):
    mat = cn.Material(E=100.0, nu=0.0, Gc=0.1, ell=0.1)
    cell = pm.generate_rect(1.0, 1.0, 1, 1)
    choice = cn.ModelChoice("at2")
    cfg = sv.SolveConfig(n_increments=3, tol_u=1e-10, tol_phi=1e-10)
    bcs = [
        sv.BoundaryCondition("left", "ux", 0.0),
        sv.BoundaryCondition("bottom", "uy", 0.0),
        sv.BoundaryCondition("right", "ux", 3e-5),
    ]
    rec = sv.run(cell, mat, choice, cfg, bcs, "right", "ux")
    path = tmp_path / "curve.csv"
    fio.write_force_displacement(rec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "increment,applied_mm,reaction_N,iterations,converged"
    assert len(lines) == 4
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    applied = np.array([float(r["applied_mm"]) for r in rows])
    reactions = np.array([float(r["reaction_N"]) for r in rows])
    assert np.array_equal(applied, rec.applied)  # repr round-trips exactly
    assert np.array_equal(reactions, rec.reactions)
    # elastic run: reaction column is linear in the applied column
    assert np.allclose(reactions / applied, reactions[0] / applied[0], rtol=1e-5)
    assert all(r["converged"] == "true" for r in rows)


def test_csv_failed_increment_flagged(tmp_path):
    rec = sv.RunRecord(
        records=[
            sv.IncrementRecord(1, 0.001, 0.1, 2, 1e-13, 1e-14, True),
            sv.IncrementRecord(2, 0.002, 0.12, 50, 1e-3, 1e-5, False),
        ],
        aborted=True,
    )
    path = tmp_path / "curve.csv"
    fio.write_force_displacement(rec, path)
    lines = path.read_text().splitlines()
    assert lines[-1] == "2,0.002,0.12,50,false"


def test_csv_empty_record_rejected(tmp_path):
    with pytest.raises(fio.OutputError, match="empty"):
        fio.write_force_displacement(sv.RunRecord(), tmp_path / "x.csv")

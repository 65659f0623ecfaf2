"""Run configuration files, VTK field snapshots, CSV force records.

Configuration lives in a TOML document with sections [material], [model],
[solver], [mesh], [[bc]] and [output]. Parsing validates the whole file
and reports every problem at once, each prefixed with its location, so a
user fixes a config in one round. Units are fixed as mm, N and MPa
throughout; files carry no unit fields.

Field output is legacy ASCII VTK (version 3.0, unstructured grid) chosen
for auditability: snapshots are human-diffable and byte-stable for
identical inputs. Force histories go to a small CSV with a pinned header.
Floats are serialized with repr, which is the shortest exact
representation, so re-reading a file recovers bit-identical values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import mesh as pm
from .solver import BoundaryCondition, RunRecord, SolveConfig, SolverError
from .constitutive import ConstitutiveError, Material, ModelChoice

VTK_CELL_TYPE = {pm.Q4: 9, pm.T3: 5}


class ConfigError(ValueError):
    """All validation problems of a configuration file, reported together."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


class OutputError(RuntimeError):
    """Filesystem failure while writing an artifact."""


@dataclass(frozen=True)
class MeshSpec:
    """Mesh source: an external file or an inline rectangle generator."""

    regime: str
    path: str = ""
    width: float = 0.0
    height: float = 0.0
    nx: int = 0
    ny: int = 0
    kind: str = pm.Q4

    @property
    def from_file(self) -> bool:
        return bool(self.path)

    def build(self) -> pm.Mesh:
        if self.from_file:
            return pm.parse_gmsh(self.path, regime=self.regime)
        return pm.generate_rect(
            self.width, self.height, self.nx, self.ny, kind=self.kind,
            regime=self.regime,
        )


@dataclass(frozen=True)
class OutputConfig:
    reaction_set: str
    directory: str = "."
    snapshot_stride: int = 0
    reaction_dof: str = "uy"


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, validated and ready to execute."""

    material: Material
    choice: ModelChoice
    solve: SolveConfig
    mesh_spec: MeshSpec
    bcs: tuple
    output: OutputConfig


_FLOAT = "number"
_INT = "integer"
_STR = "string"
_BOOL = "boolean"


def _typecheck(value, kind):
    if kind == _FLOAT:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == _INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == _STR:
        return isinstance(value, str)
    if kind == _BOOL:
        return isinstance(value, bool)
    raise AssertionError(kind)


class _Section:
    """One table of the document, with location-tagged accessors."""

    def __init__(self, name, table, errors):
        self.name = name
        self.table = dict(table)
        self.errors = errors
        self.seen = set()

    def get(self, key, kind, required=True, default=None):
        if key not in self.table:
            if required:
                self.errors.append(f"{self.name}.{key}: missing required key")
            return default
        self.seen.add(key)
        value = self.table[key]
        if not _typecheck(value, kind):
            self.errors.append(
                f"{self.name}.{key}: expected {kind}, "
                f"got {type(value).__name__}"
            )
            return default
        return float(value) if kind == _FLOAT else value

    def reject_unknown(self):
        for key in self.table:
            if key not in self.seen:
                self.errors.append(f"{self.name}.{key}: unknown key")


def parse_config(path) -> RunConfig:
    """Parse and validate a run configuration, collecting every error.

    A relative mesh path is resolved against the directory of the config
    file itself, so configs can ship next to their meshes.
    """
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"invalid TOML in {path}: {exc}"]) from exc

    errors = []
    known = {"material", "model", "solver", "mesh", "bc", "output"}
    for section in raw:
        if section not in known:
            errors.append(f"[{section}]: unknown section")
    for section in ("material", "model", "solver", "mesh", "output"):
        if section not in raw:
            errors.append(f"[{section}]: missing section")
        elif not isinstance(raw[section], dict):
            errors.append(f"[{section}]: expected a table")
    if errors:
        raise ConfigError(errors)

    sec_mat = _Section("[material]", raw["material"], errors)
    e = sec_mat.get("E", _FLOAT)
    nu = sec_mat.get("nu", _FLOAT)
    gc = sec_mat.get("Gc", _FLOAT)
    ell = sec_mat.get("ell", _FLOAT)
    ft = sec_mat.get("ft", _FLOAT, required=False, default=0.0)
    kappa = sec_mat.get("kappa", _FLOAT, required=False, default=1e-7)
    sec_mat.reject_unknown()

    sec_model = _Section("[model]", raw["model"], errors)
    model = sec_model.get("model", _STR)
    split = sec_model.get("split", _STR, required=False, default="isotropic")
    formulation = sec_model.get(
        "formulation", _STR, required=False, default="hybrid"
    )
    sec_model.reject_unknown()

    sec_solver = _Section("[solver]", raw["solver"], errors)
    scheme = sec_solver.get("scheme", _STR)
    increments = sec_solver.get("increments", _INT)
    tol_u = sec_solver.get("tol_u", _FLOAT, required=False, default=1e-6)
    tol_phi = sec_solver.get("tol_phi", _FLOAT, required=False, default=1e-6)
    max_iterations = sec_solver.get(
        "max_iterations", _INT, required=False, default=200
    )
    allow_long = sec_solver.get(
        "allow_long_iteration", _BOOL, required=False, default=True
    )
    max_halvings = sec_solver.get("max_halvings", _INT, required=False, default=4)
    sec_solver.reject_unknown()

    sec_mesh = _Section("[mesh]", raw["mesh"], errors)
    regime = sec_mesh.get("regime", _STR)
    mesh_path = sec_mesh.get("path", _STR, required=False, default="")
    generator_keys = [k for k in ("width", "height", "nx", "ny") if k in sec_mesh.table]
    mesh_spec = None
    width = height = nx = ny = kind = None
    if mesh_path and generator_keys:
        errors.append("[mesh]: give either path or generator keys, not both")
        sec_mesh.seen.update(("width", "height", "nx", "ny", "kind"))
    elif mesh_path:
        if not os.path.isabs(mesh_path):
            mesh_path = os.path.join(os.path.dirname(os.path.abspath(path)), mesh_path)
    else:
        width = sec_mesh.get("width", _FLOAT)
        height = sec_mesh.get("height", _FLOAT)
        nx = sec_mesh.get("nx", _INT)
        ny = sec_mesh.get("ny", _INT)
        kind = sec_mesh.get("kind", _STR, required=False, default=pm.Q4)
        if kind not in (pm.Q4, pm.T3):
            errors.append(f"[mesh].kind: expected q4 or t3, got '{kind}'")
        for name, dim in (("width", width), ("height", height)):
            if dim is not None and dim <= 0.0:
                errors.append(f"[mesh].{name}: must be positive")
        for name, count in (("nx", nx), ("ny", ny)):
            if count is not None and count < 1:
                errors.append(f"[mesh].{name}: must be at least 1")
    if regime is not None and regime not in (pm.PLANE_STRAIN, pm.PLANE_STRESS):
        errors.append(
            f"[mesh].regime: expected plane_strain or plane_stress, got '{regime}'"
        )
    sec_mesh.reject_unknown()

    bcs = []
    raw_bcs = raw.get("bc", [])
    if not isinstance(raw_bcs, list):
        errors.append("[bc]: expected an array of tables")
        raw_bcs = []
    for i, entry in enumerate(raw_bcs):
        loc = f"[bc][{i}]"
        if not isinstance(entry, dict):
            errors.append(f"{loc}: expected a table")
            continue
        sec_bc = _Section(loc, entry, errors)
        node_set = sec_bc.get("node_set", _STR)
        dof = sec_bc.get("dof", _STR)
        value = sec_bc.get("value", _FLOAT)
        ramp = sec_bc.get("ramp", _BOOL, required=False, default=True)
        sec_bc.reject_unknown()
        if None not in (node_set, dof, value):
            try:
                bcs.append(BoundaryCondition(node_set, dof, value, ramp))
            except SolverError as exc:
                errors.append(f"{loc}.dof: {exc}")

    sec_out = _Section("[output]", raw["output"], errors)
    reaction_set = sec_out.get("reaction_set", _STR)
    directory = sec_out.get("directory", _STR, required=False, default=".")
    stride = sec_out.get("snapshot_stride", _INT, required=False, default=0)
    reaction_dof = sec_out.get("reaction_dof", _STR, required=False, default="uy")
    sec_out.reject_unknown()
    if reaction_dof not in ("ux", "uy"):
        errors.append(
            f"[output].reaction_dof: expected ux or uy, got '{reaction_dof}'"
        )
    if stride is not None and stride < 0:
        errors.append("[output].snapshot_stride: must be non-negative")

    material = choice = solve = None
    if None not in (e, nu, gc, ell, ft, kappa):
        try:
            material = Material(E=e, nu=nu, Gc=gc, ell=ell, ft=ft, kappa=kappa)
        except ConstitutiveError as exc:
            errors.append(f"[material]: {exc}")
    if None not in (model, split, formulation):
        try:
            choice = ModelChoice(model, split=split, formulation=formulation)
        except ConstitutiveError as exc:
            errors.append(f"[model]: {exc}")
    if None not in (scheme, increments, max_iterations, tol_u, tol_phi, max_halvings):
        try:
            solve = SolveConfig(
                scheme=scheme,
                n_increments=increments,
                max_iterations=max_iterations,
                tol_u=tol_u,
                tol_phi=tol_phi,
                allow_long_iteration=allow_long,
                max_halvings=max_halvings,
            )
        except SolverError as exc:
            errors.append(f"[solver]: {exc}")
    if material is not None and choice is not None:
        try:
            choice.validate_material(material)
        except ConstitutiveError as exc:
            errors.append(f"[material].ft: {exc}")
    if mesh_path:
        mesh_spec = MeshSpec(regime=regime or pm.PLANE_STRAIN, path=mesh_path)
    elif None not in (width, height, nx, ny, kind):
        mesh_spec = MeshSpec(
            regime=regime or pm.PLANE_STRAIN,
            width=width, height=height, nx=nx, ny=ny, kind=kind,
        )
    if errors:
        raise ConfigError(errors)
    return RunConfig(
        material=material,
        choice=choice,
        solve=solve,
        mesh_spec=mesh_spec,
        bcs=tuple(bcs),
        output=OutputConfig(
            reaction_set=reaction_set,
            directory=directory,
            snapshot_stride=stride,
            reaction_dof=reaction_dof,
        ),
    )


def _r(value) -> str:
    return repr(float(value))


def serialize_config(cfg: RunConfig) -> str:
    """Canonical TOML for a validated configuration.

    parse -> serialize is idempotent: serializing the parse of this output
    reproduces it byte for byte. All defaults are written out explicitly.
    """
    m, ch, sv, ms, out = cfg.material, cfg.choice, cfg.solve, cfg.mesh_spec, cfg.output
    lines = [
        "[material]",
        f"E = {_r(m.E)}",
        f"nu = {_r(m.nu)}",
        f"Gc = {_r(m.Gc)}",
        f"ell = {_r(m.ell)}",
        f"ft = {_r(m.ft)}",
        f"kappa = {_r(m.kappa)}",
        "",
        "[model]",
        f'model = "{ch.model}"',
        f'split = "{ch.split}"',
        f'formulation = "{ch.formulation}"',
        "",
        "[solver]",
        f'scheme = "{sv.scheme}"',
        f"increments = {sv.n_increments}",
        f"tol_u = {_r(sv.tol_u)}",
        f"tol_phi = {_r(sv.tol_phi)}",
        f"max_iterations = {sv.max_iterations}",
        f"allow_long_iteration = {'true' if sv.allow_long_iteration else 'false'}",
        f"max_halvings = {sv.max_halvings}",
        "",
        "[mesh]",
        f'regime = "{ms.regime}"',
    ]
    if ms.from_file:
        escaped = ms.path.replace("\\", "\\\\").replace('"', '\\"')
        lines.append(f'path = "{escaped}"')
    else:
        lines += [
            f"width = {_r(ms.width)}",
            f"height = {_r(ms.height)}",
            f"nx = {ms.nx}",
            f"ny = {ms.ny}",
            f'kind = "{ms.kind}"',
        ]
    for bc in cfg.bcs:
        lines += [
            "",
            "[[bc]]",
            f'node_set = "{bc.node_set}"',
            f'dof = "{bc.dof}"',
            f"value = {_r(bc.value)}",
            f"ramp = {'true' if bc.ramp else 'false'}",
        ]
    escaped_dir = out.directory.replace("\\", "\\\\").replace('"', '\\"')
    lines += [
        "",
        "[output]",
        f'reaction_set = "{out.reaction_set}"',
        f'directory = "{escaped_dir}"',
        f"snapshot_stride = {out.snapshot_stride}",
        f'reaction_dof = "{out.reaction_dof}"',
        "",
    ]
    return "\n".join(lines)


def write_vtk(mesh: pm.Mesh, state, path, title=None) -> None:
    """Write one field snapshot as legacy ASCII VTK 3.0.

    Point data: the displacement vector "u" (padded to 3D) and the scalar
    "phi". Cell data: the element-averaged history "H". Output bytes are a
    deterministic function of the inputs.
    """
    u = np.asarray(state.u, dtype=float)
    phi = np.asarray(state.phi, dtype=float)
    h_qp = np.asarray(state.h_qp, dtype=float)
    n, nel = mesh.n_nodes, mesh.n_elements
    if u.shape != (2 * n,) or phi.shape != (n,) or h_qp.shape[0] != nel:
        raise OutputError(f"state shapes do not match mesh for {path}")
    if phi.min() < 0.0 or phi.max() > 1.0:
        raise OutputError(f"phi outside [0, 1]; refusing to write {path}")
    if title is None:
        title = f"phasefrac fields increment {state.increment}"

    h_cell = h_qp.mean(axis=1)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{_r(x)} {_r(y)} 0.0")
    m = mesh.elements.shape[1]
    lines.append(f"CELLS {nel} {nel * (m + 1)}")
    for conn in mesh.elements:
        lines.append(f"{m} " + " ".join(str(int(i)) for i in conn))
    lines.append(f"CELL_TYPES {nel}")
    cell_type = str(VTK_CELL_TYPE[mesh.kind])
    lines.extend([cell_type] * nel)
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS u double")
    for i in range(n):
        lines.append(f"{_r(u[2 * i])} {_r(u[2 * i + 1])} 0.0")
    lines.append("SCALARS phi double 1")
    lines.append("LOOKUP_TABLE default")
    for value in phi:
        lines.append(_r(value))
    lines.append(f"CELL_DATA {nel}")
    lines.append("SCALARS H double 1")
    lines.append("LOOKUP_TABLE default")
    for value in h_cell:
        lines.append(_r(value))
    _write_text(path, "\n".join(lines) + "\n")


CSV_HEADER = "increment,applied_mm,reaction_N,iterations,converged"


def write_force_displacement(record: RunRecord, path) -> None:
    """Write the per-increment force history as CSV with a pinned header."""
    if not record.records:
        raise OutputError(f"empty run record; nothing to write to {path}")
    lines = [CSV_HEADER]
    for row in record.records:
        converged = "true" if row.converged else "false"
        lines.append(
            f"{row.increment},{_r(row.applied)},{_r(row.reaction)},"
            f"{row.iterations},{converged}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc

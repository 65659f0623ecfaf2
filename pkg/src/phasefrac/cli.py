"""Command line entry point.

Three subcommands:

* ``phasefrac run CONFIG`` solves the problem described by a TOML config
  and writes a force-displacement CSV plus VTK snapshots.
* ``phasefrac verify`` runs quick solver-versus-closed-form checks and
  prints a table of measured errors.
* ``phasefrac bench NAME`` builds one of the bundled benchmark cases,
  runs it, writes its artifacts and prints its pass/fail report.

Exit codes: 0 on success, 1 on configuration or mesh errors (and on a
failed verify or bench check), 2 when an increment failed to converge
after step halving (partial artifacts are kept). Diagnostics go to
standard error. When --output-dir is not given, the PHASEFRAC_OUTPUT_DIR
environment variable overrides the config's output directory; the flag
wins over both. --threads sets the assembly worker count and defaults to
1, which keeps runs bit-reproducible.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import assembly as am
from . import benchmarks as bm
from . import constitutive as cn
from . import io as fio
from . import mesh as pm
from . import oracle
from . import solver as sv

OUTPUT_DIR_ENV = "PHASEFRAC_OUTPUT_DIR"


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _resolve_output_dir(flag_value, config_value: str = ".") -> str:
    if flag_value:
        return flag_value
    return os.environ.get(OUTPUT_DIR_ENV, config_value)


def write_run_artifacts(mesh, record, directory: str, base: str) -> list:
    """Write the force CSV and one VTK per stored snapshot; return paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    csv_path = os.path.join(directory, f"{base}-force.csv")
    fio.write_force_displacement(record, csv_path)
    paths.append(csv_path)
    for snap in record.snapshots:
        state = sv.State(snap.u, snap.phi, snap.h_qp, snap.increment)
        vtk_path = os.path.join(directory, f"{base}-{snap.increment:04d}.vtk")
        fio.write_vtk(mesh, state, vtk_path)
        paths.append(vtk_path)
    return paths


def cmd_run(args) -> int:
    try:
        cfg = fio.parse_config(args.config)
    except fio.ConfigError as exc:
        for line in exc.errors:
            _err(f"config error: {line}")
        return 1
    try:
        mesh = cfg.mesh_spec.build()
    except (pm.MeshError, OSError) as exc:
        _err(f"mesh error: {exc}")
        return 1

    stride = cfg.output.snapshot_stride
    if args.snapshot_stride is not None:
        stride = args.snapshot_stride
    out_dir = _resolve_output_dir(args.output_dir, cfg.output.directory)
    base = os.path.splitext(os.path.basename(args.config))[0]

    try:
        record = sv.run(
            mesh, cfg.material, cfg.choice, cfg.solve, list(cfg.bcs),
            reaction_set=cfg.output.reaction_set,
            reaction_dof=cfg.output.reaction_dof,
            snapshot_stride=stride,
            threads=args.threads,
        )
    except (sv.SolverError, am.AssemblyError) as exc:
        _err(f"solver error: {exc}")
        return 1
    try:
        paths = write_run_artifacts(mesh, record, out_dir, base)
    except fio.OutputError as exc:
        _err(f"output error: {exc}")
        return 1

    for path in paths:
        print(path)
    if record.aborted:
        failed = record.records[-1]
        _err(
            f"increment {failed.increment} did not converge after step"
            f" halving; partial results kept"
        )
        return 2
    return 0


def _single_element_curve(model: str, n_increments: int, eps_max: float, mat):
    """Monotone tension on one unit element; returns (strains, stresses, phi peak record)."""
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    choice = cn.ModelChoice(model)
    config = sv.SolveConfig(scheme="monolithic", n_increments=n_increments)
    bcs = [
        sv.BoundaryCondition("left", "ux", 0.0),
        sv.BoundaryCondition("bottom", "uy", 0.0),
        sv.BoundaryCondition("right", "ux", eps_max),
    ]
    record = sv.run(mesh, mat, choice, config, bcs, reaction_set="right", reaction_dof="ux")
    return record.applied, record.reactions, record


def _verify_rows(threads: int):
    rows = []

    case = bm.profile_strip(per_ell=10)
    rec = case.run(threads=threads)
    phi = rec.snapshots[-1].phi
    ref = oracle.at2_profile(case.mesh.nodes[:, 0], case.material.ell)
    l2 = float(np.linalg.norm(phi - ref) / np.linalg.norm(ref))
    rows.append(("AT2 1D profile, L2 error at h = ell/10", l2, 1e-2))

    data = am.ElementData.build(case.mesh)
    energy = am.fracture_energy(data, case.material, case.choice, phi)
    target = case.material.Gc * float(case.mesh.nodes[:, 1].max())
    rows.append(
        ("regularized energy vs Gc x thickness", abs(energy - target) / target, 5e-2)
    )

    mat = cn.Material(E=100.0, nu=0.0, Gc=0.1, ell=0.1)
    eps_c = oracle.at2_critical_strain(mat)
    _, sig, _ = _single_element_curve("at2", 400, 2.0 * eps_c, mat)
    peak_err = abs(sig.max() - oracle.at2_critical_stress(mat)) / oracle.at2_critical_stress(mat)
    rows.append(("AT2 homogeneous peak stress", peak_err, 1e-2))

    rows.append(("AT1 threshold strain", _at1_threshold_error(mat), 5e-3))

    diff = _analogy_max_diff()
    rows.append(("heat-analogy block, max abs diff", diff, 1e-12))

    fd = _tangent_fd_max_err()
    rows.append(("element tangents vs finite differences", fd, 1e-6))

    floor_err = _floor_identity_max_err()
    rows.append(("PF-CZM floor identity", floor_err, 1e-12))
    return rows


def _at1_threshold_error(mat) -> float:
    """Relative error of the first-growth strain against the closed form."""
    mesh = pm.generate_rect(1.0, 1.0, 1, 1)
    choice = cn.ModelChoice("at1")
    eps_e = oracle.at1_threshold_strain(mat)
    n = 800
    config = sv.SolveConfig(scheme="monolithic", n_increments=n)
    bcs = [
        sv.BoundaryCondition("left", "ux", 0.0),
        sv.BoundaryCondition("bottom", "uy", 0.0),
        sv.BoundaryCondition("right", "ux", 2.0 * eps_e),
    ]
    record = sv.run(
        mesh, mat, choice, config, bcs, reaction_set="right",
        reaction_dof="ux", snapshot_stride=1,
    )
    for snap in record.snapshots:
        if snap.phi.max() > 1e-8:
            return abs(snap.factor * 2.0 * eps_e - eps_e) / eps_e
    return np.inf


def _analogy_max_diff() -> float:
    """Max absolute difference between the two phase-block routes."""
    mesh = pm.generate_rect(1.0, 1.0, 3, 3)
    data = am.ElementData.build(mesh)
    worst = 0.0
    rng = np.random.default_rng(7)
    for model in cn.MODELS:
        mat = cn.Material(E=100.0, nu=0.2, Gc=0.1, ell=0.1, ft=1.0)
        choice = cn.ModelChoice(model)
        floor = cn.driving_force_floor(choice, mat)
        for _ in range(10):
            phi = rng.uniform(0.0, 0.9, mesh.n_nodes)
            h = floor + rng.uniform(0.0, 1.0, (mesh.n_elements, data.n_qp))
            u = np.zeros(2 * mesh.n_nodes)
            sys_blocks = am.assemble_global(data, mat, choice, u, phi, h)
            k_heat, r_heat = am.assemble_heat_analogy_phase_block(data, mat, choice, phi, h)
            scale = am.analogy_scale(mat, choice)
            worst = max(
                worst,
                float(np.abs(scale * r_heat - sys_blocks.r_phi).max()),
                float(np.abs(scale * k_heat - sys_blocks.k_pp).max()),
            )
    return worst


def _tangent_fd_max_err() -> float:
    """Max relative error of analytic element tangents vs central FD."""
    coords = np.array([[0.0, 0.0], [1.1, 0.0], [1.0, 0.9], [-0.1, 1.0]])
    rng = np.random.default_rng(11)
    worst = 0.0
    combos = [
        ("at2", "isotropic", "hybrid"),
        ("at2", "spectral", "anisotropic"),
        ("at1", "voldev", "anisotropic"),
        ("pfczm-exponential", "pfczm-stress", "hybrid"),
    ]
    mat = cn.Material(E=100.0, nu=0.25, Gc=0.1, ell=0.1, ft=1.0)
    for model, split, formulation in combos:
        choice = cn.ModelChoice(model, split=split, formulation=formulation)
        for _ in range(10):
            state = am.ElementState(
                coords=coords,
                u_e=rng.normal(size=8) * 1e-2,
                phi_e=rng.uniform(0.0, 0.9, 4),
                h_qp=rng.uniform(0.0, 1.0, 4),
                material=mat,
                choice=choice,
                regime=pm.PLANE_STRAIN,
            )
            worst = max(worst, _element_fd_error(state))
    return worst


def _element_fd_error(state) -> float:
    k_uu, k_pp = am.element_tangents(state)
    step = 1e-7
    worst = 0.0
    scale_u = max(np.abs(k_uu).max(), 1.0)
    scale_p = max(np.abs(k_pp).max(), 1.0)
    for j in range(state.u_e.size):
        up = state.u_e.copy()
        up[j] += step
        um = state.u_e.copy()
        um[j] -= step
        rp, _ = am.element_residuals(_with(state, u_e=up))
        rm, _ = am.element_residuals(_with(state, u_e=um))
        col = (rp - rm) / (2.0 * step)
        worst = max(worst, float(np.abs(col - k_uu[:, j]).max() / scale_u))
    for j in range(state.phi_e.size):
        pp = state.phi_e.copy()
        pp[j] += step
        pmn = state.phi_e.copy()
        pmn[j] -= step
        _, rp = am.element_residuals(_with(state, phi_e=pp))
        _, rm = am.element_residuals(_with(state, phi_e=pmn))
        col = (rp - rm) / (2.0 * step)
        worst = max(worst, float(np.abs(col - k_pp[:, j]).max() / scale_p))
    return worst


def _with(state, **kw):
    fields = dict(
        coords=state.coords, u_e=state.u_e, phi_e=state.phi_e, h_qp=state.h_qp,
        material=state.material, choice=state.choice, regime=state.regime,
    )
    fields.update(kw)
    return am.ElementState(**fields)


def _floor_identity_max_err() -> float:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        mat = cn.Material(
            E=float(rng.uniform(1.0, 1e5)),
            nu=float(rng.uniform(0.0, 0.45)),
            Gc=float(rng.uniform(1e-3, 10.0)),
            ell=float(rng.uniform(1e-3, 10.0)),
            ft=float(rng.uniform(0.1, 100.0)),
        )
        for model in (cn.PFCZM_LINEAR, cn.PFCZM_EXPONENTIAL):
            choice = cn.ModelChoice(model)
            floor = cn.driving_force_floor(choice, mat)
            target = mat.ft**2 / (2.0 * mat.E)
            worst = max(worst, abs(floor - target) / target)
    return worst


def cmd_verify(args) -> int:
    rows = _verify_rows(args.threads)
    width = max(len(name) for name, _, _ in rows)
    ok = True
    for name, measured, limit in rows:
        passed = measured < limit
        ok = ok and passed
        verdict = "PASS" if passed else "FAIL"
        print(f"{verdict}  {name:<{width}}  measured {measured:.3e}  limit {limit:.0e}")
    return 0 if ok else 1


def cmd_bench(args) -> int:
    try:
        case = bm.build(args.name)
    except ValueError as exc:
        _err(str(exc))
        return 1
    out_dir = _resolve_output_dir(args.output_dir)
    bm.write_artifacts(case, out_dir)
    record = case.run(threads=args.threads)
    write_run_artifacts(case.mesh, record, out_dir, case.name)
    checks = bm.evaluate(case, record)
    width = max(len(c.name) for c in checks)
    for c in checks:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"{verdict}  {c.name:<{width}}  {c.detail}")
    if record.aborted:
        _err("benchmark aborted before completing its schedule")
        return 2
    return 0 if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasefrac",
        description="Finite-element phase-field fracture solver.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="solve a problem described by a TOML config")
    p_run.add_argument("config", help="path to the config file")
    p_run.add_argument("--output-dir", default=None, help="directory for artifacts")
    p_run.add_argument("--threads", type=int, default=1, help="assembly worker count")
    p_run.add_argument(
        "--snapshot-stride", type=int, default=None,
        help="override the config's snapshot stride",
    )
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run solver-vs-closed-form checks")
    p_verify.add_argument("--threads", type=int, default=1, help="assembly worker count")
    p_verify.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench", help="run a bundled benchmark case")
    p_bench.add_argument("name", help=f"one of: {', '.join(bm.BENCHMARKS)}")
    p_bench.add_argument("--output-dir", default=None, help="directory for artifacts")
    p_bench.add_argument("--threads", type=int, default=1, help="assembly worker count")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

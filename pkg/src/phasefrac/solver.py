"""Load stepping and the two solution schemes.

Both schemes alternate symmetric solves of the displacement and phase
blocks with the coupling blocks dropped, so neither is a full Newton
method. The "monolithic" scheme refreshes the driving history from the
current strains inside every iteration and commits it once the increment
converges; the staggered scheme freezes the history at its value from the
previous increment for the whole iteration and updates it a single time
afterwards. Convergence of an increment is judged per block: the residual
norm over free DOFs must fall below the block tolerance times its
first-iteration reference, with a small absolute floor so that zero-load
increments terminate. A failed increment is retried with a halved step up
to a fixed number of halvings before the run aborts; aborted runs keep
every record produced so far.

The phase iterate is clamped onto [0, 1] after every update. A node held
at a bound whose residual pushes it further outside is resolved by the
clamp, not by the linear solve: it is excluded from the phase residual
norm and held fixed during that iteration's solve, then released the
moment its residual points back inside. Solving through such nodes
instead produces a limit cycle in which they propose the same outward
step every iteration, its projection leaves a constant disturbance in the
neighbouring equations, and the residual stalls at a finite value. When
the final update of an increment had to clamp away more than
OVERSHOOT_WARN, a diagnostic warning reports how far the unclamped field
reached.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import constitutive as cn
from .assembly import (
    ElementData,
    apply_dirichlet,
    assemble_global,
    psi_plus_at_qp,
)
from .mesh import Mesh

MONOLITHIC = "monolithic"
STAGGERED = "staggered"
SCHEMES = (MONOLITHIC, STAGGERED)

DOF_UX = "ux"
DOF_UY = "uy"
DOF_PHI = "phi"
BC_DOFS = (DOF_UX, DOF_UY, DOF_PHI)

# Absolute floor under the relative residual criterion; handles increments
# whose first-iteration residual is already at solver noise.
ABSOLUTE_RESIDUAL_FLOOR = 1e-12

# Pre-clamp overshoot of phi beyond [0, 1] that triggers a diagnostic.
OVERSHOOT_WARN = 1e-3

# Iteration cap substituted when long iteration is disallowed.
SHORT_ITERATION_CAP = 25


class SolverError(RuntimeError):
    """Linear algebra failure or inconsistent solver input."""


@dataclass(frozen=True)
class SolveConfig:
    """Controls for the incremental solution.

    Parameters
    ----------
    scheme : str
        "monolithic" or "staggered".
    n_increments : int
        Number of equal steps the boundary schedule is divided into.
    max_iterations : int
        Iteration cap per increment attempt. The alternating scheme can
        legitimately need many iterations near instabilities, hence the
        generous default.
    tol_u, tol_phi : float
        Relative residual-norm tolerances per block, in (0, 1).
    allow_long_iteration : bool
        When False the cap is tightened to 25 so that a stalling increment
        fails fast and is bisected instead.
    max_halvings : int
        Step halvings attempted on a failed increment before aborting.
    """

    scheme: str = MONOLITHIC
    n_increments: int = 1
    max_iterations: int = 200
    tol_u: float = 1e-6
    tol_phi: float = 1e-6
    allow_long_iteration: bool = True
    max_halvings: int = 4

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise SolverError(f"unknown scheme '{self.scheme}'")
        if self.n_increments < 1:
            raise SolverError("n_increments must be at least 1")
        if self.max_iterations < 1:
            raise SolverError("max_iterations must be at least 1")
        for name, tol in (("tol_u", self.tol_u), ("tol_phi", self.tol_phi)):
            if not 0.0 < tol < 1.0:
                raise SolverError(f"{name} must lie in (0, 1), got {tol}")
        if self.max_halvings < 0:
            raise SolverError("max_halvings must be non-negative")

    @property
    def iteration_cap(self) -> int:
        if self.allow_long_iteration:
            return self.max_iterations
        return min(self.max_iterations, SHORT_ITERATION_CAP)


@dataclass
class State:
    """Primary fields at a committed load level."""

    u: np.ndarray
    phi: np.ndarray
    h_qp: np.ndarray
    increment: int = 0

    @classmethod
    def pristine(cls, data: ElementData, mat: cn.Material, choice: cn.ModelChoice):
        """Undeformed, undamaged state with the history at its floor."""
        mesh = data.mesh
        floor = cn.driving_force_floor(choice, mat)
        return cls(
            u=np.zeros(2 * mesh.n_nodes),
            phi=np.zeros(mesh.n_nodes),
            h_qp=np.full((mesh.n_elements, data.n_qp), floor),
            increment=0,
        )

    def copy(self) -> "State":
        return State(self.u.copy(), self.phi.copy(), self.h_qp.copy(), self.increment)


@dataclass(frozen=True)
class BoundaryCondition:
    """One prescribed DOF family on a named node set.

    value is the full-schedule target; with ramp=True the applied value at
    load factor t is t * value, otherwise the value is held from the first
    increment on.
    """

    node_set: str
    dof: str
    value: float
    ramp: bool = True

    def __post_init__(self):
        if self.dof not in BC_DOFS:
            raise SolverError(f"unknown BC dof '{self.dof}' (use ux, uy or phi)")


@dataclass(frozen=True)
class IncrementRecord:
    """One row of the force-displacement history."""

    increment: int
    applied: float
    reaction: float
    iterations: int
    residual_u: float
    residual_phi: float
    converged: bool


@dataclass
class Snapshot:
    increment: int
    factor: float
    u: np.ndarray
    phi: np.ndarray
    h_qp: np.ndarray


@dataclass
class RunRecord:
    """Per-increment history plus field snapshots; aborted runs keep both."""

    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    aborted: bool = False

    @property
    def applied(self) -> np.ndarray:
        return np.array([r.applied for r in self.records])

    @property
    def reactions(self) -> np.ndarray:
        return np.array([r.reaction for r in self.records])


def _refine(lu, k_csc: sp.csc_matrix, r: np.ndarray, passes: int = 5):
    """Iteratively refine lu.solve(r); return (d, backward error <= 1e-12).

    The normwise backward error ||K d - r|| / (||K|| ||d|| + ||r||) is the
    right target here: a fully degraded band leaves the system with modes
    carried only by the residual stiffness, and no factorization can push
    the residual below roughly ||r|| times unit roundoff times the
    condition number, while the backward error stays near roundoff.

    The loop doubles as a stationary iteration when lu factors a nearby
    matrix instead of k_csc itself; it then contracts at the rate set by
    how close the two are, and bails as soon as the measured rate cannot
    reach the target within the remaining passes.
    """
    d = lu.solve(r)
    r_norm = float(np.linalg.norm(r))
    k_norm = float(np.max(np.abs(k_csc).sum(axis=1)))
    previous = None
    for i in range(passes):
        if not np.all(np.isfinite(d)):
            return d, False
        residual = r - k_csc @ d
        res_norm = float(np.linalg.norm(residual))
        target = 1e-12 * (k_norm * float(np.linalg.norm(d)) + r_norm)
        if res_norm <= target:
            return d, True
        if previous is not None:
            rate = res_norm / previous
            remaining = passes - 1 - i
            if rate >= 1.0 or res_norm * rate**remaining > target:
                return d, False
        previous = res_norm
        d = d + lu.solve(residual)
    return d, False


def linear_solve(k: sp.spmatrix, r: np.ndarray, cache: dict = None, key=None):
    """Direct sparse solve with iterative refinement.

    Guarantees a normwise backward error of at most 1e-12; raises
    SolverError naming the suspect DOF when the factorization is singular
    or refinement stalls.

    With a cache dict and key, the factorization of the previous matrix
    under that key is tried first as the preconditioner of the refinement
    loop; across the many small-update iterations of the alternating
    scheme this skips most refactorizations.  The accuracy guarantee is
    the same either way; a stalling stale factorization just triggers a
    fresh one.
    """
    r = np.asarray(r, dtype=float)
    if float(np.linalg.norm(r)) == 0.0:
        return np.zeros_like(r)
    k_csc = sp.csc_matrix(k)
    if cache is not None:
        stale = cache.get(key)
        if stale is not None:
            d, ok = _refine(stale, k_csc, r, passes=8)
            if ok:
                return d
    lu = None
    try:
        # Minimum-degree ordering on K + K^T keeps the fill-in of these
        # mesh matrices several times below the COLAMD default; the
        # refinement loop backstops the relaxed pivoting.
        lu = spla.splu(
            k_csc,
            permc_spec="MMD_AT_PLUS_A",
            options=dict(SymmetricMode=True, DiagPivotThresh=0.1),
        )
    except (RuntimeError, ValueError):
        lu = None
    if lu is not None:
        d, ok = _refine(lu, k_csc, r)
        if ok:
            if cache is not None:
                cache[key] = lu
            return d
    # Nearly singular systems (a fully degraded band leaves modes with
    # only residual stiffness) defeat the relaxed pivoting; redo the
    # factorization with full partial pivoting before giving up.
    try:
        lu = spla.splu(k_csc)
    except (RuntimeError, ValueError) as exc:
        diag = k_csc.diagonal()
        zeros = np.flatnonzero(diag == 0.0)
        hint = f"; zero diagonal at DOF {zeros[0]}" if zeros.size else ""
        raise SolverError(f"factorization failed ({exc}){hint}") from exc
    d, ok = _refine(lu, k_csc, r)
    if ok:
        if cache is not None:
            cache[key] = lu
        return d
    pivots = np.abs(lu.U.diagonal())
    suspect = int(lu.perm_c[int(np.argmin(pivots))])
    raise SolverError(
        "linear solve failed to reach 1e-12 backward error; "
        f"smallest pivot at DOF {suspect}"
    )


def resolve_bcs(mesh: Mesh, bcs, factor: float):
    """Expand BC specs into (u_dofs, u_values, phi_dofs, phi_values).

    Duplicate constraints are left to apply_dirichlet, which rejects
    conflicting values.
    """
    u_dofs, u_vals, p_dofs, p_vals = [], [], [], []
    for bc in bcs:
        if bc.node_set not in mesh.node_sets:
            raise SolverError(f"BC references unknown node set '{bc.node_set}'")
        nodes = mesh.node_sets[bc.node_set]
        value = bc.value * factor if bc.ramp else bc.value
        if bc.dof == DOF_PHI:
            p_dofs.append(nodes)
            p_vals.append(np.full(nodes.size, value))
        else:
            comp = 0 if bc.dof == DOF_UX else 1
            u_dofs.append(2 * nodes + comp)
            u_vals.append(np.full(nodes.size, value))

    def cat(parts, dtype):
        if not parts:
            return np.empty(0, dtype=dtype)
        return np.concatenate(parts).astype(dtype, copy=False)

    return (
        cat(u_dofs, np.int64),
        cat(u_vals, float),
        cat(p_dofs, np.int64),
        cat(p_vals, float),
    )


def _project_phi(proposal: np.ndarray):
    """Clamp a phase proposal onto [0, 1].

    Returns the clamped array together with the largest distance any entry
    sat outside the bounds, which the increment loop reports when it
    exceeds OVERSHOOT_WARN.
    """
    exceed = max(
        float(proposal.max(initial=0.0)) - 1.0,
        -float(proposal.min(initial=0.0)),
        0.0,
    )
    return np.clip(proposal, 0.0, 1.0), exceed


def _warn_overshoot(exceed: float) -> None:
    if exceed > OVERSHOOT_WARN:
        warnings.warn(
            f"phase field overshot [0, 1] by {exceed:.3e} before clamping",
            RuntimeWarning,
            stacklevel=3,
        )


def _active_at_bounds(phi: np.ndarray, r_phi: np.ndarray) -> np.ndarray:
    """Nodes pinned at a bound with the residual pointing further out.

    The clamp, not the linear solve, balances these equations, so their
    residual entries are excluded from the convergence norm.
    """
    return ((phi <= 0.0) & (r_phi > 0.0)) | ((phi >= 1.0) & (r_phi < 0.0))


@dataclass
class IncrementResult:
    state: State
    iterations: int
    residual_u: float
    residual_phi: float
    converged: bool
    r_u_full: np.ndarray


def _solve_increment(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    state: State,
    bc_arrays,
    config: SolveConfig,
    frozen_history: bool,
    threads: int = 1,
    lu_cache: dict = None,
) -> IncrementResult:
    mesh = data.mesh
    u_dofs, u_vals, p_dofs, p_vals = bc_arrays
    floor = cn.driving_force_floor(choice, mat)

    u = state.u.copy()
    phi = state.phi.copy()
    u[u_dofs] = u_vals
    phi[p_dofs] = p_vals

    free_u = np.ones(2 * mesh.n_nodes, dtype=bool)
    free_u[u_dofs] = False
    free_p = np.ones(mesh.n_nodes, dtype=bool)
    free_p[p_dofs] = False

    h_frozen = state.h_qp
    ref_u = ref_p = None
    res_u = res_p = np.inf
    sys = None
    iterations = 0
    converged = False
    exceed = 0.0
    for it in range(1, config.iteration_cap + 1):
        iterations = it
        if frozen_history:
            h_eval = h_frozen
        else:
            h_eval = cn.update_history(
                h_frozen, psi_plus_at_qp(data, u, mat, choice), floor
            )
        sys = assemble_global(data, mat, choice, u, phi, h_eval, threads=threads)
        res_u = float(np.linalg.norm(sys.r_u[free_u]))
        active = _active_at_bounds(phi, sys.r_phi) & free_p
        res_p = float(np.linalg.norm(sys.r_phi[free_p & ~active]))
        if it == 1:
            ref_u, ref_p = res_u, res_p
        if res_u <= max(config.tol_u * ref_u, ABSOLUTE_RESIDUAL_FLOOR) and res_p <= max(
            config.tol_phi * ref_p, ABSOLUTE_RESIDUAL_FLOOR
        ):
            converged = True
            break

        k_u, rhs_u = apply_dirichlet(
            sys.k_uu, -sys.r_u, u_dofs, np.zeros(u_dofs.size)
        )
        # Bound-pinned nodes are held fixed during the solve so that their
        # neighbours' equations account for the clamp; they are released
        # the moment their residual points back inside.
        pin = np.concatenate([p_dofs, np.flatnonzero(active)])
        k_p, rhs_p = apply_dirichlet(
            sys.k_pp, -sys.r_phi, pin, np.zeros(pin.size)
        )
        du = linear_solve(k_u, rhs_u, cache=lu_cache, key="u")
        dphi = linear_solve(k_p, rhs_p, cache=lu_cache, key="phi")
        u = u + du
        phi, exceed = _project_phi(phi + dphi)

    _warn_overshoot(exceed)
    if frozen_history:
        h_commit = cn.update_history(
            h_frozen, psi_plus_at_qp(data, u, mat, choice), floor
        )
    else:
        h_commit = h_eval
    new_state = State(u, phi, h_commit, state.increment + 1)
    return IncrementResult(new_state, iterations, res_u, res_p, converged, sys.r_u)


def solve_increment_monolithic(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    state: State,
    bc_arrays,
    config: SolveConfig,
    threads: int = 1,
    lu_cache: dict = None,
) -> IncrementResult:
    """One increment with the history refreshed from current strains each
    iteration and committed at convergence."""
    return _solve_increment(
        data, mat, choice, state, bc_arrays, config, False, threads, lu_cache
    )


def solve_increment_staggered(
    data: ElementData,
    mat: cn.Material,
    choice: cn.ModelChoice,
    state: State,
    bc_arrays,
    config: SolveConfig,
    threads: int = 1,
    lu_cache: dict = None,
) -> IncrementResult:
    """One increment with the history frozen at its previous-increment
    value; the history is updated once after convergence."""
    return _solve_increment(
        data, mat, choice, state, bc_arrays, config, True, threads, lu_cache
    )


def reaction_force(mesh: Mesh, r_u_full: np.ndarray, node_set: str, dof: str) -> float:
    """Sum of assembled internal forces over a node set, one component.

    At constrained DOFs the assembled internal force equals the reaction
    the constraint exerts, which is what a testing machine would measure.
    """
    if node_set not in mesh.node_sets:
        raise SolverError(f"reaction references unknown node set '{node_set}'")
    if dof not in (DOF_UX, DOF_UY):
        raise SolverError(f"reaction dof must be ux or uy, got '{dof}'")
    comp = 0 if dof == DOF_UX else 1
    return float(np.sum(r_u_full[2 * mesh.node_sets[node_set] + comp]))


def _applied_amplitude(bcs, reaction_set: str, reaction_dof: str) -> float:
    """Full-schedule applied value reported in records.

    Prefer the ramped BC on the reaction set and component; otherwise fall
    back to the largest-magnitude ramped displacement value.
    """
    fallback = 0.0
    for bc in bcs:
        if bc.dof == DOF_PHI or not bc.ramp:
            continue
        if bc.node_set == reaction_set and bc.dof == reaction_dof:
            return bc.value
        if abs(bc.value) > abs(fallback):
            fallback = bc.value
    return fallback


def run(
    mesh: Mesh,
    mat: cn.Material,
    choice: cn.ModelChoice,
    config: SolveConfig,
    bcs,
    reaction_set: str,
    reaction_dof: str = DOF_UY,
    snapshot_stride: int = 0,
    initial_state: State = None,
    threads: int = 1,
) -> RunRecord:
    """Drive the boundary schedule through n_increments equal steps.

    Records applied value, reaction force, iteration count and residuals
    for every scheduled increment. A non-converging increment is retried
    with halved steps (up to config.max_halvings); if it still fails the
    run aborts with the failed row flagged and all prior artifacts kept.
    Snapshots of (u, phi, H) are stored every snapshot_stride scheduled
    increments (and at the final one) when the stride is positive; an
    aborted run keeps one last snapshot of the furthest converged state.
    """
    choice.validate_material(mat)
    if threads < 1:
        raise SolverError("threads must be at least 1")
    data = ElementData.build(mesh)
    state = initial_state.copy() if initial_state is not None else State.pristine(
        data, mat, choice
    )
    step = (
        solve_increment_staggered
        if config.scheme == STAGGERED
        else solve_increment_monolithic
    )
    amplitude = _applied_amplitude(bcs, reaction_set, reaction_dof)
    record = RunRecord()
    lu_cache: dict = {}

    f_prev = 0.0
    for k in range(1, config.n_increments + 1):
        f_target = k / config.n_increments
        halvings = 0
        total_iterations = 0
        f_cur = f_prev
        result = None
        aborted = False
        while f_cur < f_target - 1e-15:
            f_try = f_target
            while True:
                bc_arrays = resolve_bcs(mesh, bcs, f_try)
                result = step(
                    data, mat, choice, state, bc_arrays, config, threads, lu_cache
                )
                total_iterations += result.iterations
                if result.converged:
                    break
                if halvings >= config.max_halvings:
                    aborted = True
                    break
                halvings += 1
                f_try = f_cur + 0.5 * (f_try - f_cur)
            if aborted:
                break
            state = result.state
            f_cur = f_try
        state.increment = k

        reaction = reaction_force(mesh, result.r_u_full, reaction_set, reaction_dof)
        record.records.append(
            IncrementRecord(
                increment=k,
                applied=amplitude * f_target,
                reaction=reaction,
                iterations=total_iterations,
                residual_u=result.residual_u,
                residual_phi=result.residual_phi,
                converged=not aborted,
            )
        )
        if aborted:
            record.aborted = True
            if snapshot_stride > 0:
                # Keep a diagnostic snapshot of the furthest converged
                # state; its factor tells how far the increment got.
                record.snapshots.append(
                    Snapshot(
                        k, f_cur, state.u.copy(), state.phi.copy(), state.h_qp.copy()
                    )
                )
            break
        f_prev = f_target
        if snapshot_stride > 0 and (
            k % snapshot_stride == 0 or k == config.n_increments
        ):
            record.snapshots.append(
                Snapshot(k, f_target, state.u.copy(), state.phi.copy(), state.h_qp.copy())
            )
    return record

"""Mesh representation, structured generation, Gmsh ingestion and element kinematics.

Supports linear quadrilaterals (``q4``, 2x2 Gauss quadrature) and linear
triangles (``t3``, one-point quadrature) in two dimensions.  Coordinates are
in mm.  A mesh is immutable after construction; its arrays are marked
read-only so concurrent element-level assembly can share it safely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Q4 = "q4"
T3 = "t3"
PLANE_STRAIN = "plane_strain"
PLANE_STRESS = "plane_stress"

_NODES_PER_KIND = {Q4: 4, T3: 3}

# Gmsh element type ids for the supported subset.
_GMSH_T3 = 2
_GMSH_Q4 = 3
_GMSH_LINE = 1
_GMSH_POINT = 15
_GMSH_NNODES = {_GMSH_LINE: 2, _GMSH_T3: 3, _GMSH_Q4: 4, _GMSH_POINT: 1}


class MeshError(ValueError):
    """Invalid mesh data or unsupported mesh file content."""


@dataclass
class Mesh:
    """2D finite element mesh with named node sets.

    Parameters
    ----------
    nodes : ndarray, shape (n_nodes, 2)
        Node coordinates in mm.
    elements : ndarray, shape (n_elements, 4) or (n_elements, 3)
        Element connectivity (node indices), counter-clockwise.
    kind : str
        Element kind, ``"q4"`` or ``"t3"``.
    node_sets : dict
        Named node index arrays, used for boundary conditions and
        reaction extraction.
    regime : str
        ``"plane_strain"`` or ``"plane_stress"``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    kind: str
    node_sets: dict = field(default_factory=dict)
    regime: str = PLANE_STRAIN

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        if self.kind not in _NODES_PER_KIND:
            raise MeshError(f"unsupported element kind {self.kind!r}")
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        m = _NODES_PER_KIND[self.kind]
        if self.elements.ndim != 2 or self.elements.shape[1] != m:
            raise MeshError(f"elements must be an (n, {m}) array for kind {self.kind!r}")
        if self.regime not in (PLANE_STRAIN, PLANE_STRESS):
            raise MeshError(f"unknown regime {self.regime!r}")
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= self.n_nodes
        ):
            raise MeshError("element connectivity references nonexistent nodes")
        self.node_sets = {
            name: np.ascontiguousarray(np.unique(idx), dtype=np.int64)
            for name, idx in self.node_sets.items()
        }
        for name, idx in self.node_sets.items():
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
                raise MeshError(f"node set {name!r} references nonexistent nodes")
        self._check_jacobians()
        for arr in (self.nodes, self.elements, *self.node_sets.values()):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def element_coords(self) -> np.ndarray:
        """Node coordinates per element, shape (n_elements, m, 2)."""
        return self.nodes[self.elements]

    def _check_jacobians(self):
        pts, _ = gauss_rule(self.kind)
        coords = self.nodes[self.elements]
        for xi in pts:
            _, dn = shape_eval(self.kind, xi)
            jac = np.einsum("emi,mj->eij", coords, dn)
            det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
            bad = np.flatnonzero(det <= 0)
            if bad.size:
                raise MeshError(
                    f"non-positive Jacobian in element {bad[0]} (detJ={det[bad[0]]:g})"
                )

    def min_edge_length(self) -> float:
        """Shortest element edge in the mesh, used for resolution checks."""
        coords = self.nodes[self.elements]
        rolled = np.roll(coords, -1, axis=1)
        lengths = np.linalg.norm(rolled - coords, axis=2)
        return float(lengths.min())


def gauss_rule(kind: str):
    """Quadrature points and weights on the reference element.

    2x2 Gauss for q4 (weights sum to 4), one centroid point for t3
    (weight 1/2, the reference triangle area).
    """
    if kind == Q4:
        a = 1.0 / np.sqrt(3.0)
        pts = np.array([[-a, -a], [a, -a], [a, a], [-a, a]])
        wts = np.ones(4)
    elif kind == T3:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    else:
        raise MeshError(f"unsupported element kind {kind!r}")
    return pts, wts


def shape_eval(kind: str, xi) -> tuple[np.ndarray, np.ndarray]:
    """Shape functions and their reference-coordinate gradients at ``xi``.

    Returns
    -------
    N : ndarray, shape (m,)
        Shape function values; they sum to one.
    dN : ndarray, shape (m, 2)
        Gradients with respect to the reference coordinates; each
        component column sums to zero.
    """
    s, t = float(xi[0]), float(xi[1])
    if kind == Q4:
        n = 0.25 * np.array(
            [(1 - s) * (1 - t), (1 + s) * (1 - t), (1 + s) * (1 + t), (1 - s) * (1 + t)]
        )
        dn = 0.25 * np.array(
            [
                [-(1 - t), -(1 - s)],
                [(1 - t), -(1 + s)],
                [(1 + t), (1 + s)],
                [-(1 + t), (1 - s)],
            ]
        )
    elif kind == T3:
        n = np.array([1.0 - s - t, s, t])
        dn = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    else:
        raise MeshError(f"unsupported element kind {kind!r}")
    return n, dn


def element_kinematics(coords, xi):
    """Strain-displacement and scalar-gradient matrices at one quadrature point.

    Parameters
    ----------
    coords : ndarray, shape (m, 2)
        Element node coordinates.
    xi : array-like, shape (2,)
        Reference coordinates of the evaluation point.

    Returns
    -------
    b_u : ndarray, shape (3, 2m)
        Voigt strain-displacement matrix, rows (eps_xx, eps_yy, gamma_xy).
        Displacement DOFs are ordered (u_x1, u_y1, u_x2, ...).
    b_phi : ndarray, shape (2, m)
        Gradient matrix of the scalar field.
    det_j : float
        Jacobian determinant; must be positive.
    """
    coords = np.asarray(coords, dtype=float)
    m = coords.shape[0]
    kind = Q4 if m == 4 else T3
    _, dn = shape_eval(kind, xi)
    jac = coords.T @ dn
    det_j = jac[0, 0] * jac[1, 1] - jac[0, 1] * jac[1, 0]
    if det_j <= 0:
        raise MeshError(f"non-positive Jacobian (detJ={det_j:g})")
    dn_xy = dn @ np.linalg.inv(jac)  # dN_i/dx, dN_i/dy
    b_u = np.zeros((3, 2 * m))
    b_u[0, 0::2] = dn_xy[:, 0]
    b_u[1, 1::2] = dn_xy[:, 1]
    b_u[2, 0::2] = dn_xy[:, 1]
    b_u[2, 1::2] = dn_xy[:, 0]
    return b_u, dn_xy.T.copy(), det_j


def generate_rect(
    width: float,
    height: float,
    nx: int,
    ny: int,
    kind: str = Q4,
    regime: str = PLANE_STRAIN,
) -> Mesh:
    """Structured rectangle mesh on [0, width] x [0, height].

    Nodes are numbered row-major (x fastest).  Node sets ``"left"``,
    ``"right"``, ``"bottom"`` and ``"top"`` are created automatically.
    """
    if width <= 0 or height <= 0:
        raise MeshError("width and height must be positive")
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be at least 1")
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    return generate_grid(xs, ys, kind=kind, regime=regime)


def graded_axis(start, end, fine_lo, fine_hi, h_fine, growth=1.2, h_max=None):
    """1D coordinates with a uniform fine band and geometric coarsening.

    The band [fine_lo, fine_hi] is meshed uniformly at (close to) h_fine;
    cells outward of the band grow by the given factor up to h_max. The
    returned array starts at start, ends at end and is strictly increasing.
    """
    if not start <= fine_lo < fine_hi <= end:
        raise MeshError("fine band must lie inside [start, end]")
    if h_fine <= 0 or growth < 1.0:
        raise MeshError("h_fine must be positive and growth at least 1")
    if h_max is None:
        h_max = 50.0 * h_fine
    n_fine = max(int(round((fine_hi - fine_lo) / h_fine)), 1)
    coords = list(np.linspace(fine_lo, fine_hi, n_fine + 1))

    def march(origin, limit, direction):
        out = []
        pos = origin
        h = h_fine
        while (limit - pos) * direction > 1e-12 * max(abs(limit), 1.0):
            h = min(h * growth, h_max, abs(limit - pos))
            remaining = abs(limit - pos)
            if remaining < 1.6 * h:
                h = remaining
            pos = pos + direction * h
            out.append(pos)
        if out:
            out[-1] = limit
        return out

    left = march(fine_lo, start, -1.0)
    right = march(fine_hi, end, +1.0)
    return np.array(sorted(set(left) | set(coords) | set(right)))


def generate_grid(xs, ys, kind: str = Q4, regime: str = PLANE_STRAIN) -> Mesh:
    """Tensor-product structured mesh over explicit axis coordinates.

    Both coordinate arrays must be strictly increasing. Node numbering and
    boundary node sets follow generate_rect.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or xs.size < 2 or ys.size < 2:
        raise MeshError("axis arrays must be 1D with at least two entries")
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise MeshError("axis coordinates must be strictly increasing")
    nx, ny = xs.size - 1, ys.size - 1
    xg, yg = np.meshgrid(xs, ys)
    nodes = np.column_stack([xg.ravel(), yg.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    quads = []
    for j in range(ny):
        for i in range(nx):
            quads.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)])
    quads = np.array(quads, dtype=np.int64)
    if kind == Q4:
        elements = quads
    elif kind == T3:
        lower = quads[:, [0, 1, 2]]
        upper = quads[:, [0, 2, 3]]
        elements = np.empty((2 * quads.shape[0], 3), dtype=np.int64)
        elements[0::2] = lower
        elements[1::2] = upper
    else:
        raise MeshError(f"unsupported element kind {kind!r}")

    all_i = np.arange(nx + 1)
    all_j = np.arange(ny + 1)
    node_sets = {
        "left": nid(0, all_j),
        "right": nid(nx, all_j),
        "bottom": nid(all_i, 0),
        "top": nid(all_i, ny),
    }
    return Mesh(nodes, elements, kind, node_sets, regime)


def _strip_comments(line: str) -> str:
    return line.strip()


def parse_gmsh(path, regime: str = PLANE_STRAIN) -> Mesh:
    """Read a Gmsh MSH ASCII file (format 2.2 or 4.1).

    Physical groups of any dimension become node sets named after their
    physical names.  Only 3-node triangles and 4-node quadrangles are
    accepted as domain elements; lines and points are consumed for node
    sets only.  Any other element kind is rejected.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    sections = {}
    i = 0
    while i < len(lines):
        ln = lines[i].strip()
        if ln.startswith("$") and not ln.startswith("$End"):
            name = ln[1:]
            end = f"$End{name}"
            j = i + 1
            body = []
            while j < len(lines) and lines[j].strip() != end:
                body.append(lines[j])
                j += 1
            if j >= len(lines):
                raise MeshError(f"malformed MSH file: unterminated section ${name}")
            sections[name] = body
            i = j + 1
        else:
            i += 1

    if "MeshFormat" not in sections or not sections["MeshFormat"]:
        raise MeshError("malformed MSH file: missing $MeshFormat")
    fmt = sections["MeshFormat"][0].split()
    version = fmt[0]
    if fmt[1] != "0":
        raise MeshError("binary MSH files are not supported")
    if version.startswith("2.2"):
        return _parse_msh22(sections, regime)
    if version.startswith("4.1"):
        return _parse_msh41(sections, regime)
    raise MeshError(f"unsupported MSH version {version} (need 2.2 or 4.1 ASCII)")


def _physical_names(sections) -> dict:
    names = {}
    body = sections.get("PhysicalNames")
    if not body:
        return names
    count = int(body[0])
    for ln in body[1 : 1 + count]:
        parts = ln.split(None, 2)
        dim, tag = int(parts[0]), int(parts[1])
        name = parts[2].strip().strip('"')
        names[(dim, tag)] = name
    return names


def _build_mesh(node_ids, coords, tri, quad, set_nodes, regime) -> Mesh:
    id_to_idx = {nid: k for k, nid in enumerate(node_ids)}
    if tri and quad:
        raise MeshError("mixed triangle/quad meshes are not supported")
    if not tri and not quad:
        raise MeshError("no supported 2D elements found")
    kind = T3 if tri else Q4
    raw = tri if tri else quad
    elements = np.array([[id_to_idx[n] for n in conn] for conn in raw], dtype=np.int64)
    node_sets = {
        name: np.array(sorted(id_to_idx[n] for n in ids), dtype=np.int64)
        for name, ids in set_nodes.items()
    }
    return Mesh(np.asarray(coords, dtype=float), elements, kind, node_sets, regime)


def _parse_msh22(sections, regime) -> Mesh:
    phys = _physical_names(sections)
    body = sections.get("Nodes")
    if body is None:
        raise MeshError("malformed MSH file: missing $Nodes")
    n_nodes = int(body[0])
    node_ids, coords = [], []
    for ln in body[1 : 1 + n_nodes]:
        parts = ln.split()
        node_ids.append(int(parts[0]))
        coords.append([float(parts[1]), float(parts[2])])

    body = sections.get("Elements")
    if body is None:
        raise MeshError("malformed MSH file: missing $Elements")
    n_elem = int(body[0])
    tri, quad = [], []
    set_nodes = {name: set() for name in phys.values()}
    for ln in body[1 : 1 + n_elem]:
        parts = [int(p) for p in ln.split()]
        eid, etype, ntags = parts[0], parts[1], parts[2]
        if etype not in _GMSH_NNODES:
            raise MeshError(f"unsupported element kind {etype} (element {eid})")
        tags = parts[3 : 3 + ntags]
        conn = parts[3 + ntags :]
        if len(conn) != _GMSH_NNODES[etype]:
            raise MeshError(f"malformed element record (element {eid})")
        if etype == _GMSH_T3:
            tri.append(conn)
        elif etype == _GMSH_Q4:
            quad.append(conn)
        if tags:
            for dim in (0, 1, 2):
                name = phys.get((dim, tags[0]))
                if name is not None:
                    set_nodes[name].update(conn)
    return _build_mesh(node_ids, coords, tri, quad, set_nodes, regime)


def _parse_msh41(sections, regime) -> Mesh:
    phys = _physical_names(sections)

    # Entity -> physical tags, per dimension.
    entity_phys = {}
    body = sections.get("Entities")
    if body is not None:
        counts = [int(c) for c in body[0].split()]
        row = 1
        for dim, count in enumerate(counts):
            for _ in range(count):
                parts = body[row].split()
                row += 1
                tag = int(parts[0])
                # Points: tag x y z nphys ...; higher dims: tag + 6 bbox floats.
                skip = 4 if dim == 0 else 7
                nphys = int(parts[skip])
                ptags = [int(p) for p in parts[skip + 1 : skip + 1 + nphys]]
                entity_phys[(dim, tag)] = ptags

    body = sections.get("Nodes")
    if body is None:
        raise MeshError("malformed MSH file: missing $Nodes")
    header = body[0].split()
    n_blocks = int(header[0])
    node_ids, coords = [], []
    row = 1
    for _ in range(n_blocks):
        _, _, _, in_block = (int(v) for v in body[row].split())
        row += 1
        tags = [int(body[row + k]) for k in range(in_block)]
        row += in_block
        for k in range(in_block):
            parts = body[row + k].split()
            node_ids.append(tags[k])
            coords.append([float(parts[0]), float(parts[1])])
        row += in_block

    body = sections.get("Elements")
    if body is None:
        raise MeshError("malformed MSH file: missing $Elements")
    header = body[0].split()
    n_blocks = int(header[0])
    tri, quad = [], []
    set_nodes = {name: set() for name in phys.values()}
    row = 1
    for _ in range(n_blocks):
        ent_dim, ent_tag, etype, in_block = (int(v) for v in body[row].split())
        row += 1
        names = [
            phys[(ent_dim, pt)]
            for pt in entity_phys.get((ent_dim, ent_tag), [])
            if (ent_dim, pt) in phys
        ]
        for k in range(in_block):
            parts = [int(p) for p in body[row + k].split()]
            eid, conn = parts[0], parts[1:]
            if etype not in _GMSH_NNODES:
                raise MeshError(f"unsupported element kind {etype} (element {eid})")
            if len(conn) != _GMSH_NNODES[etype]:
                raise MeshError(f"malformed element record (element {eid})")
            if etype == _GMSH_T3:
                tri.append(conn)
            elif etype == _GMSH_Q4:
                quad.append(conn)
            for name in names:
                set_nodes[name].update(conn)
        row += in_block
    return _build_mesh(node_ids, coords, tri, quad, set_nodes, regime)


def write_gmsh22(mesh: Mesh, path):
    """Write a mesh as Gmsh MSH 2.2 ASCII, node sets as physical groups.

    Node sets are exported as physical point groups (one point element per
    node) so they survive a parse_gmsh round trip.  Used to materialise
    benchmark meshes for standalone runs.
    """
    etype = _GMSH_Q4 if mesh.kind == Q4 else _GMSH_T3
    names = sorted(mesh.node_sets)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        if names:
            fh.write("$PhysicalNames\n%d\n" % len(names))
            for k, name in enumerate(names):
                fh.write('0 %d "%s"\n' % (k + 1, name))
            fh.write("$EndPhysicalNames\n")
        fh.write("$Nodes\n%d\n" % mesh.n_nodes)
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write("%d %.17g %.17g 0\n" % (i + 1, x, y))
        fh.write("$EndNodes\n")
        n_set_elems = sum(len(mesh.node_sets[n]) for n in names)
        fh.write("$Elements\n%d\n" % (mesh.n_elements + n_set_elems))
        eid = 1
        for k, name in enumerate(names):
            for n in mesh.node_sets[name]:
                fh.write("%d %d 2 %d %d %d\n" % (eid, _GMSH_POINT, k + 1, k + 1, n + 1))
                eid += 1
        for conn in mesh.elements:
            fh.write(
                "%d %d 2 0 0 %s\n" % (eid, etype, " ".join(str(n + 1) for n in conn))
            )
            eid += 1
        fh.write("$EndElements\n")

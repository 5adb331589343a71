"""Two-dimensional polytopal meshes.

A mesh is a set of convex polygonal cells given by counterclockwise vertex
lists, each with a collocation point ``x_K``.  Faces (edges) are derived from
the cells.  Interior faces are oriented from the lower-indexed owner ``K⁻`` to
the higher-indexed owner ``K⁺``; boundary faces carry the outward normal.
Star-shapedness of cells with respect to ``x_K`` is assumed, not checked.

Files use the plain-text ``hdm-mesh 1`` format::

    hdm-mesh 1
    dim 2
    vertices N
    x y            (N lines)
    cells M
    k v1 ... vk    (M lines, 0-based, counterclockwise)
    collocation M  (optional)
    x y            (M lines)

Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

__all__ = [
    "DeltaAdaptedReport",
    "MeshFormatError",
    "PolytopalMesh",
    "circumcenters",
    "condition_m_residuals",
    "gen_diagonal_triangulation",
    "gen_square_grid",
    "load_mesh",
    "save_mesh",
    "validate_delta_adapted",
]


class MeshFormatError(InputError):
    """Parse failure in an hdm-mesh file, carrying the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _polygon_area_centroid(P: np.ndarray, mask: np.ndarray):
    """Shoelace area and centroid of padded polygons ``P`` (nc, k, 2)."""
    k = P.shape[1]
    nxt = np.roll(np.arange(k), -1)
    # Padded slots repeat the first vertex so their cross products vanish.
    Q = P[:, nxt]
    last = mask.sum(1) - 1
    Q[np.arange(len(P)), last] = P[:, 0]
    cross = P[..., 0] * Q[..., 1] - Q[..., 0] * P[..., 1]
    cross = np.where(mask, cross, 0.0)
    area = 0.5 * cross.sum(1)
    cx = ((P[..., 0] + Q[..., 0]) * cross).sum(1)
    cy = ((P[..., 1] + Q[..., 1]) * cross).sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        centroid = np.stack([cx, cy], 1) / (6.0 * area[:, None])
    return area, centroid


def circumcenters(tri: np.ndarray) -> np.ndarray:
    """Circumcenters of triangles given as ``(nt, 3, 2)`` vertex arrays."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ba, ca = b - a, c - a
    d = 2.0 * (ba[:, 0] * ca[:, 1] - ba[:, 1] * ca[:, 0])
    nb, nc_ = (ba**2).sum(1), (ca**2).sum(1)
    ux = (ca[:, 1] * nb - ba[:, 1] * nc_) / d
    uy = (ba[:, 0] * nc_ - ca[:, 0] * nb) / d
    return a + np.stack([ux, uy], 1)


def _point_segment_distance(p, a, b):
    ab = b - a
    t = np.clip(((p - a) * ab).sum(-1) / (ab * ab).sum(-1), 0.0, 1.0)
    foot = a + t[..., None] * ab
    return np.linalg.norm(p - foot, axis=-1)


class PolytopalMesh:
    """Polygonal mesh of a planar domain with the geometry used by the schemes.

    Parameters
    ----------
    vertices : array (nv, 2)
    cells : sequence of vertex-index sequences, counterclockwise
    collocation : array (nc, 2), optional
        Points ``x_K``.  Defaults to circumcenters for triangles and centroids
        for other cells.

    Notes
    -----
    Face arrays are indexed by face number ``s``:

    ``face_vertices[s]``  the two end vertices;
    ``face_cells[s]``     ``(K⁻, K⁺)``, with ``K⁺ = -1`` on the boundary;
    ``face_normal[s]``    unit normal oriented from ``K⁻`` to ``K⁺`` (outward on the boundary);
    ``face_cell_dist[s]`` ``dist(x_K, σ)`` for both owners (``nan`` if absent);
    ``face_d[s]``         ``d_σ``, the sum of the owner distances.

    Cell-to-face incidence is stored in CSR form (``cell_face_ptr``,
    ``cell_face_idx``) with ``cell_face_sign`` = +1 when ``face_normal`` points
    out of the cell.
    """

    def __init__(self, vertices, cells, collocation=None):
        V = np.array(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] != 2:
            raise InputError(f"vertices must have shape (nv, 2), got {V.shape}")
        cell_lists = [np.asarray(c, dtype=np.int64).ravel() for c in cells]
        if not cell_lists:
            raise InputError("mesh has no cells")
        nv = len(V)
        for k, c in enumerate(cell_lists):
            if len(c) < 3:
                raise InputError(f"cell {k} has fewer than 3 vertices")
            bad = c[(c < 0) | (c >= nv)]
            if bad.size:
                raise InputError(f"cell {k} references missing vertex {int(bad[0])}")
            if len(np.unique(c)) != len(c):
                raise InputError(f"cell {k} repeats a vertex")
        self.vertices = V
        self.dim = 2
        sizes = np.array([len(c) for c in cell_lists])
        kmax = int(sizes.max())
        cv = -np.ones((len(cell_lists), kmax), dtype=np.int64)
        for k, c in enumerate(cell_lists):
            cv[k, : len(c)] = c
        self.cell_vertices = cv
        self.cell_nverts = sizes
        self._build_cells()
        if collocation is None:
            colloc = self.cell_centroid.copy()
            tri = sizes == 3
            if tri.any():
                colloc[tri] = circumcenters(V[cv[tri, :3]])
        else:
            colloc = np.array(collocation, dtype=float)
            if colloc.shape != (self.n_cells, 2):
                raise InputError(f"collocation must have shape ({self.n_cells}, 2), got {colloc.shape}")
        self.collocation = colloc
        self._build_faces()
        for name in (
            "vertices", "cell_vertices", "cell_nverts", "cell_measure", "cell_centroid",
            "cell_diameter", "collocation", "face_vertices", "face_cells", "face_measure",
            "face_centroid", "face_normal", "face_cell_dist", "face_d", "cell_face_ptr",
            "cell_face_idx", "cell_face_sign", "boundary_vertex",
        ):
            getattr(self, name).setflags(write=False)

    # -- construction -------------------------------------------------------

    def _build_cells(self):
        V, cv = self.vertices, self.cell_vertices
        mask = cv >= 0
        P = V[np.where(mask, cv, cv[:, :1])]
        area, centroid = _polygon_area_centroid(P.copy(), mask)
        bad = np.where(~(area > 0))[0]
        if bad.size:
            raise InputError(f"cell {int(bad[0])} has non-positive signed area (vertices must be counterclockwise)")
        diff = P[:, :, None, :] - P[:, None, :, :]
        self.cell_measure = area
        self.cell_centroid = centroid
        self.cell_diameter = np.sqrt((diff**2).sum(-1)).max(axis=(1, 2))

    def _build_faces(self):
        V, cv, sizes = self.vertices, self.cell_vertices, self.cell_nverts
        nc, kmax = cv.shape
        a = cv
        b = np.empty_like(cv)
        b[:, :-1] = cv[:, 1:]
        last = sizes - 1
        b[np.arange(nc), last] = cv[:, 0]
        valid = np.arange(kmax)[None, :] < sizes[:, None]
        ea, eb = a[valid], b[valid]
        ecell = np.repeat(np.arange(nc), sizes)
        lo, hi = np.minimum(ea, eb), np.maximum(ea, eb)
        key = lo * (len(V) + 1) + hi
        uniq, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        if counts.max() > 2:
            s = int(np.argmax(counts > 2))
            raise InputError(f"face {s} is shared by more than two cells")
        nf = len(uniq)
        # Stable sort keeps cell order within a face: first owner is the lower index.
        order = np.argsort(inv, kind="stable")
        first = np.full(nf, -1, dtype=np.int64)
        second = np.full(nf, -1, dtype=np.int64)
        first_edge = np.full(nf, -1, dtype=np.int64)
        inv_sorted = inv[order]
        starts = np.r_[0, np.flatnonzero(np.diff(inv_sorted)) + 1]
        first[inv_sorted[starts]] = ecell[order[starts]]
        first_edge[inv_sorted[starts]] = order[starts]
        two = counts[inv_sorted[starts]] == 2
        second[inv_sorted[starts[two]]] = ecell[order[starts[two] + 1]]
        # Orientation follows the traversal of K⁻, so the normal points out of K⁻.
        fa, fb = ea[first_edge], eb[first_edge]
        pa, pb = V[fa], V[fb]
        t = pb - pa
        length = np.linalg.norm(t, axis=1)
        if np.any(length == 0):
            raise InputError("degenerate face of zero length")
        t /= length[:, None]
        self.face_vertices = np.stack([fa, fb], 1)
        self.face_cells = np.stack([first, second], 1)
        self.face_measure = length
        self.face_centroid = 0.5 * (pa + pb)
        self.face_normal = np.stack([t[:, 1], -t[:, 0]], 1)
        dist = np.full((nf, 2), np.nan)
        for side in (0, 1):
            owner = self.face_cells[:, side]
            has = owner >= 0
            dist[has, side] = _point_segment_distance(self.collocation[owner[has]], pa[has], pb[has])
        self.face_cell_dist = dist
        self.face_d = np.nansum(dist, axis=1)
        # Cell-face incidence in CSR form, faces of a cell in traversal order.
        edge_face = inv
        self.cell_face_ptr = np.r_[0, np.cumsum(sizes)].astype(np.int64)
        self.cell_face_idx = edge_face.astype(np.int64)
        self.cell_face_sign = np.where(self.face_cells[edge_face, 0] == ecell, 1.0, -1.0)
        bv = np.zeros(len(V), dtype=bool)
        bnd = self.face_cells[:, 1] < 0
        bv[self.face_vertices[bnd].ravel()] = True
        self.boundary_vertex = bv

    # -- convenience --------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cell_vertices)

    @property
    def n_faces(self) -> int:
        return len(self.face_vertices)

    @property
    def h(self) -> float:
        """Mesh size, the largest cell diameter."""
        return float(self.cell_diameter.max())

    @property
    def is_simplicial(self) -> bool:
        return bool(np.all(self.cell_nverts == 3))

    @property
    def interior_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] >= 0)

    @property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_cells[:, 1] < 0)

    def cell_faces(self, k: int) -> np.ndarray:
        return self.cell_face_idx[self.cell_face_ptr[k] : self.cell_face_ptr[k + 1]]

    def cell_vertex_list(self, k: int) -> np.ndarray:
        return self.cell_vertices[k, : self.cell_nverts[k]]

    def cell_touches_boundary(self) -> np.ndarray:
        """Boolean per cell, true iff one of its faces lies on the boundary."""
        out = np.zeros(self.n_cells, dtype=bool)
        out[self.face_cells[self.boundary_faces, 0]] = True
        return out

    def outward_normals(self, k: int) -> np.ndarray:
        """Unit normals ``n_{K,σ}`` of cell ``k`` pointing out of the cell."""
        s = slice(self.cell_face_ptr[k], self.cell_face_ptr[k + 1])
        return self.face_normal[self.cell_face_idx[s]] * self.cell_face_sign[s, None]

    def with_collocation(self, collocation) -> "PolytopalMesh":
        """Copy of the mesh with different collocation points."""
        cells = [self.cell_vertex_list(k) for k in range(self.n_cells)]
        return PolytopalMesh(self.vertices, cells, collocation)

    def __repr__(self):
        return f"PolytopalMesh(cells={self.n_cells}, faces={self.n_faces}, vertices={self.n_vertices}, h={self.h:.6g})"


# -- generators -------------------------------------------------------------


def _grid_vertices(n: int) -> np.ndarray:
    t = np.arange(n + 1) / n
    X, Y = np.meshgrid(t, t, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], 1)


def gen_square_grid(n: int) -> PolytopalMesh:
    """Uniform ``n×n`` square grid of the unit square, ``x_K`` at cell centres.

    Vertex ``(i/n, j/n)`` has index ``i(n+1)+j`` and cell ``(i, j)`` has index ``i·n+j``.
    """
    if int(n) != n or n < 2:
        raise InputError(f"square grid needs n >= 2, got {n}")
    n = int(n)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    vid = lambda a, b: a * (n + 1) + b  # noqa: E731
    cells = np.stack([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)], 1)
    centres = np.stack([(i + 0.5) / n, (j + 0.5) / n], 1)
    return PolytopalMesh(_grid_vertices(n), cells, centres)


def gen_diagonal_triangulation(n: int, collocation: str = "circumcenter") -> PolytopalMesh:
    """Unit square split into ``n×n`` squares, each cut along the same diagonal.

    Square ``(i, j)`` yields cells ``2(i·n+j)`` and ``2(i·n+j)+1`` with vertices
    ``(v_ij, v_{i+1,j}, v_{i+1,j+1})`` and ``(v_ij, v_{i+1,j+1}, v_{i,j+1})``.
    ``collocation`` is ``"circumcenter"`` or ``"centroid"``.
    """
    if int(n) != n or n < 1:
        raise InputError(f"diagonal triangulation needs n >= 1, got {n}")
    n = int(n)
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    vid = lambda a, b: a * (n + 1) + b  # noqa: E731
    t1 = np.stack([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)], 1)
    t2 = np.stack([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)], 1)
    cells = np.stack([t1, t2], 1).reshape(-1, 3)
    V = _grid_vertices(n)
    if collocation == "circumcenter":
        colloc = circumcenters(V[cells])
    elif collocation == "centroid":
        colloc = V[cells].mean(1)
    else:
        raise InputError(f"unknown collocation rule {collocation!r}")
    return PolytopalMesh(V, cells, colloc)


# -- validation -------------------------------------------------------------


@dataclass
class DeltaAdaptedReport:
    """Outcome of :func:`validate_delta_adapted`."""

    is_valid: bool
    theta: float
    max_orthogonality_residual: float
    offending_faces: list = field(default_factory=list)
    offending_cells: list = field(default_factory=list)
    tolerance: float = 1e-10

    def summary(self) -> str:
        state = "valid" if self.is_valid else "INVALID"
        lines = [
            f"delta-adapted: {state}",
            f"theta_T: {self.theta:.6g}",
            f"max orthogonality residual: {self.max_orthogonality_residual:.3e} (tol {self.tolerance:g})",
        ]
        if self.offending_faces:
            shown = ", ".join(map(str, self.offending_faces[:20]))
            more = " ..." if len(self.offending_faces) > 20 else ""
            lines.append(f"offending faces ({len(self.offending_faces)}): {shown}{more}")
        if self.offending_cells:
            shown = ", ".join(map(str, self.offending_cells[:20]))
            more = " ..." if len(self.offending_cells) > 20 else ""
            lines.append(f"cells with x_K not strictly inside ({len(self.offending_cells)}): {shown}{more}")
        return "\n".join(lines)


def validate_delta_adapted(mesh: PolytopalMesh, tol: float = 1e-10) -> DeltaAdaptedReport:
    """Check the orthogonality condition of Δ-adapted meshes.

    For an interior face the segment ``[x_K, x_L]`` must be orthogonal to the
    face, ``|(x_L - x_K)·t| ≤ tol·h``, and must cross it.  For a boundary face
    the foot of the perpendicular from ``x_K`` must lie on the face.  Every
    ``x_K`` must be strictly inside its (convex) cell.  Failures are reported,
    never raised.
    """
    h = mesh.h
    X = mesh.collocation
    fv, fc = mesh.face_vertices, mesh.face_cells
    pa, pb = mesh.vertices[fv[:, 0]], mesh.vertices[fv[:, 1]]
    n = mesh.face_normal
    t = np.stack([-n[:, 1], n[:, 0]], 1)
    length = mesh.face_measure
    slack = tol * h
    bad_face = np.zeros(mesh.n_faces, dtype=bool)
    residual = np.zeros(mesh.n_faces)

    inner = fc[:, 1] >= 0
    K, L = fc[inner, 0], fc[inner, 1]
    seg = X[L] - X[K]
    residual[inner] = np.abs((seg * t[inner]).sum(1)) / h
    across = (seg * n[inner]).sum(1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = ((mesh.face_centroid[inner] - X[K]) * n[inner]).sum(1) / across
    hit = X[K] + s[:, None] * seg
    u = ((hit - pa[inner]) * t[inner]).sum(1)
    crosses = (across > 0) & (s >= -tol) & (s <= 1 + tol) & (u >= -slack) & (u <= length[inner] + slack)
    bad_face[inner] = (residual[inner] > tol) | ~crosses

    outer = ~inner
    Kb = fc[outer, 0]
    foot = ((X[Kb] - pa[outer]) * t[outer]).sum(1)
    bad_face[outer] = (foot < -slack) | (foot > length[outer] + slack)

    # Strict interiority: positive distance to every face line, on the inner side.
    signed = (mesh.face_centroid[mesh.cell_face_idx] - X[np.repeat(np.arange(mesh.n_cells), mesh.cell_nverts)])
    signed = (signed * mesh.face_normal[mesh.cell_face_idx]).sum(1) * mesh.cell_face_sign
    margin = 1e-12 * np.repeat(mesh.cell_diameter, mesh.cell_nverts)
    bad_inc = signed <= margin
    bad_cells = np.unique(np.repeat(np.arange(mesh.n_cells), mesh.cell_nverts)[bad_inc])

    # Mesh regularity factor.
    owners = np.repeat(np.arange(mesh.n_cells), mesh.cell_nverts)
    faces = mesh.cell_face_idx
    side = np.where(fc[faces, 0] == owners, 0, 1)
    dist = mesh.face_cell_dist[faces, side]
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(dist > 0, mesh.cell_diameter[owners] / dist, np.inf)
        r2 = np.where(dist > 0, mesh.face_d[faces] / dist, np.inf)
    theta = float(np.max(np.maximum(r1, r2)))

    offending = np.flatnonzero(bad_face).tolist()
    return DeltaAdaptedReport(
        is_valid=not offending and bad_cells.size == 0,
        theta=theta,
        max_orthogonality_residual=float(residual.max(initial=0.0)),
        offending_faces=offending,
        offending_cells=bad_cells.tolist(),
        tolerance=tol,
    )


def condition_m_residuals(mesh: PolytopalMesh) -> np.ndarray:
    """Residuals ``|Σ_{K∋v} |K|/|S_v| (x̄_K − v)|`` at interior vertices.

    Returned in vertex order for the non-boundary vertices.  The mesh condition
    asks for ``O(h²)``; paired parallelogram meshes give exactly zero.
    """
    cv, sizes = mesh.cell_vertices, mesh.cell_nverts
    owners = np.repeat(np.arange(mesh.n_cells), sizes)
    verts = cv[cv >= 0]
    area = mesh.cell_measure[owners]
    support = np.bincount(verts, weights=area, minlength=mesh.n_vertices)
    off = mesh.cell_centroid[owners] - mesh.vertices[verts]
    acc = np.stack([np.bincount(verts, weights=area * off[:, k], minlength=mesh.n_vertices) for k in range(2)], 1)
    inner = ~mesh.boundary_vertex
    return np.linalg.norm(acc[inner], axis=1) / support[inner]


# -- file format ------------------------------------------------------------


def save_mesh(mesh: PolytopalMesh, path) -> None:
    """Write ``mesh`` in hdm-mesh v1 format with 17 significant digits."""
    fmt = lambda x: f"{x:.17g}"  # noqa: E731
    lines = ["hdm-mesh 1", f"dim {mesh.dim}", f"vertices {mesh.n_vertices}"]
    lines += [" ".join(map(fmt, v)) for v in mesh.vertices]
    lines.append(f"cells {mesh.n_cells}")
    for k in range(mesh.n_cells):
        c = mesh.cell_vertex_list(k)
        lines.append(" ".join([str(len(c))] + [str(int(v)) for v in c]))
    lines.append(f"collocation {mesh.n_cells}")
    lines += [" ".join(map(fmt, x)) for x in mesh.collocation]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _tokens(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line.split()


def load_mesh(path) -> PolytopalMesh:
    """Read an hdm-mesh v1 file.

    Missing collocation points are computed (circumcenters for triangles,
    centroids otherwise).  Raises :class:`MeshFormatError` with a line number
    on malformed input and :class:`~hdm.errors.InputError` for duplicate
    vertices or invalid cells.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read mesh file {path}: {exc}") from exc
    lines = list(_tokens(text))
    pos = 0

    def take(expected_len=None):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 1
            raise MeshFormatError("unexpected end of file", last)
        item = lines[pos]
        pos += 1
        if expected_len is not None and len(item[1]) != expected_len:
            raise MeshFormatError(f"expected {expected_len} fields, got {len(item[1])}", item[0])
        return item

    def header(word):
        number, toks = take()
        if len(toks) != 2 or toks[0] != word:
            raise MeshFormatError(f"expected '{word} <count>', got {' '.join(toks)!r}", number)
        try:
            value = int(toks[1])
        except ValueError:
            raise MeshFormatError(f"invalid integer {toks[1]!r}", number) from None
        if value < 0:
            raise MeshFormatError(f"negative count {value}", number)
        return number, value

    def floats(toks, number):
        try:
            return [float(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"invalid number in {' '.join(toks)!r}", number) from None

    number, toks = take()
    if toks != ["hdm-mesh", "1"]:
        raise MeshFormatError("first line must be 'hdm-mesh 1'", number)
    number, dim = header("dim")
    if dim == 3:
        raise InputError("three-dimensional meshes are not supported")
    if dim != 2:
        raise MeshFormatError(f"unsupported dimension {dim}", number)
    _, nv = header("vertices")
    verts = []
    for _ in range(nv):
        number, toks = take(dim)
        verts.append(floats(toks, number))
    V = np.array(verts, dtype=float).reshape(nv, dim)
    if len(np.unique(V, axis=0)) != nv:
        _, first, counts = np.unique(V, axis=0, return_index=True, return_counts=True)
        dup = int(np.sort(first[counts > 1])[0])
        raise InputError(f"duplicate vertex coordinates (vertex {dup})")
    _, nc = header("cells")
    cells = []
    for k in range(nc):
        number, toks = take()
        try:
            ints = [int(t) for t in toks]
        except ValueError:
            raise MeshFormatError(f"cell {k}: invalid vertex index", number) from None
        if not ints or ints[0] != len(ints) - 1:
            raise MeshFormatError(f"cell {k}: vertex count does not match the list", number)
        c = ints[1:]
        missing = [v for v in c if v < 0 or v >= nv]
        if missing:
            raise MeshFormatError(f"cell {k} references missing vertex {missing[0]}", number)
        cells.append(c)
    colloc = None
    if pos < len(lines):
        number, count = header("collocation")
        if count != nc:
            raise MeshFormatError(f"collocation count {count} differs from cell count {nc}", number)
        pts = []
        for _ in range(nc):
            number, toks = take(dim)
            pts.append(floats(toks, number))
        colloc = np.array(pts, dtype=float)
    if pos < len(lines):
        raise MeshFormatError("unexpected trailing content", lines[pos][0])
    return PolytopalMesh(V, cells, colloc)


"""Mesh ingestion, procedural sheet generation, and rest-state precomputation.

Meshes are either triangle shells or tetrahedral solids over a flat
coordinate vector of length 3n (vertex v owns entries 3v..3v+2, in meters).
All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshFormatError
from .validation import as_float_array, readonly

SHELL = "shell"
SOLID = "solid"


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic material constants in SI units.

    ``thickness`` and ``bending_stiffness`` only apply to shells. When
    ``bending_stiffness`` is None it is derived from the plate formula
    Y*h^3 / (12*(1 - nu^2)).
    """

    young_modulus: float = 1.0e6
    poisson_ratio: float = 0.3
    density: float = 1000.0
    thickness: float = 0.01
    bending_stiffness: float | None = None

    def __post_init__(self):
        if self.young_modulus <= 0:
            raise ValueError("young_modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in (-1, 0.5)")
        if self.density <= 0:
            raise ValueError("density must be positive")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    @property
    def lame_mu(self) -> float:
        return self.young_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        """3D Lame first parameter (used by solid elements)."""
        nu = self.poisson_ratio
        return self.young_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))

    @property
    def lame_lambda_plane_stress(self) -> float:
        """Plane-stress first Lame parameter (used by shell membranes)."""
        nu = self.poisson_ratio
        return self.young_modulus * nu / (1.0 - nu * nu)

    @property
    def bending_constant(self) -> float:
        if self.bending_stiffness is not None:
            return self.bending_stiffness
        nu = self.poisson_ratio
        return self.young_modulus * self.thickness**3 / (12.0 * (1.0 - nu * nu))

    def to_dict(self) -> dict:
        return {
            "young_modulus": self.young_modulus,
            "poisson_ratio": self.poisson_ratio,
            "density": self.density,
            "thickness": self.thickness,
            "bending_stiffness": self.bending_stiffness,
        }

    @staticmethod
    def from_dict(d: dict) -> "MaterialParams":
        return MaterialParams(**d)


@dataclass(frozen=True)
class Mesh:
    """Reference geometry plus element connectivity.

    rest_positions: flat (3n,) vector; elements: (ne, 3) triangles or
    (ne, 4) tets; pinned: optional {vertex: target (3,)} map for static
    attachment targets.
    """

    rest_positions: np.ndarray
    elements: np.ndarray
    kind: str
    pinned: dict | None = None
    generator: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        rest = readonly(as_float_array(self.rest_positions, "rest_positions"))
        elems = np.ascontiguousarray(self.elements, dtype=np.int64)
        object.__setattr__(self, "rest_positions", rest)
        object.__setattr__(self, "elements", readonly(elems))
        n = self.num_vertices
        if elems.ndim != 2 or elems.shape[1] not in (3, 4):
            raise MeshFormatError("elements must be (ne, 3) or (ne, 4)")
        if self.kind not in (SHELL, SOLID):
            raise MeshFormatError(f"unknown mesh kind {self.kind!r}")
        if (self.kind == SHELL) != (elems.shape[1] == 3):
            raise MeshFormatError("element arity does not match mesh kind")
        if elems.size and (elems.min() < 0 or elems.max() >= n):
            raise MeshFormatError("element index out of range")
        if self.pinned:
            for v, target in self.pinned.items():
                if not 0 <= int(v) < n:
                    raise MeshFormatError(f"pinned vertex {v} out of range")
                t = np.asarray(target, dtype=np.float64)
                if t.shape != (3,):
                    raise MeshFormatError("pinned targets must be 3-vectors")

    @property
    def num_vertices(self) -> int:
        return self.rest_positions.shape[0] // 3

    @property
    def num_dofs(self) -> int:
        return self.rest_positions.shape[0]

    @property
    def vertices(self) -> np.ndarray:
        """Rest positions reshaped to (n, 3)."""
        return self.rest_positions.reshape(-1, 3)

    def scale(self) -> float:
        """Bounding-box diagonal of the rest shape."""
        v = self.vertices
        return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))

    def fingerprint(self, material: MaterialParams | None = None) -> str:
        """Stable hash identifying (geometry, connectivity, material, pins)."""
        h = hashlib.sha256()
        h.update(self.kind.encode())
        h.update(self.rest_positions.tobytes())
        h.update(self.elements.tobytes())
        if self.pinned:
            for v in sorted(self.pinned):
                h.update(int(v).to_bytes(8, "little", signed=True))
                h.update(np.asarray(self.pinned[v], dtype=np.float64).tobytes())
        if material is not None:
            h.update(json.dumps(material.to_dict(), sort_keys=True).encode())
        return h.hexdigest()


@dataclass(frozen=True)
class RestData:
    """Per-element reference quantities shared by the energy models.

    Solid meshes populate the tet fields; shells populate triangle and
    hinge fields. ``hinges`` rows are (edge0, edge1, opposite_a, opposite_b)
    vertex indices; ``hinge_weights`` is the rest-geometry factor
    |e|^2 * 3 / (A_a + A_b), i.e. |e| / h_bar with h_bar = (A_a + A_b) / (3|e|).
    """

    lumped_mass: np.ndarray
    tet_inverse_shape: np.ndarray | None = None
    tet_volumes: np.ndarray | None = None
    tri_inverse_shape: np.ndarray | None = None
    tri_areas: np.ndarray | None = None
    edge_rest_lengths: np.ndarray | None = None
    hinges: np.ndarray | None = None
    hinge_rest_angles: np.ndarray | None = None
    hinge_weights: np.ndarray | None = None

    def __post_init__(self):
        for name in (
            "lumped_mass",
            "tet_inverse_shape",
            "tet_volumes",
            "tri_inverse_shape",
            "tri_areas",
            "edge_rest_lengths",
            "hinges",
            "hinge_rest_angles",
            "hinge_weights",
        ):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, readonly(np.ascontiguousarray(val)))

    @property
    def mass_diagonal(self) -> np.ndarray:
        """Lumped mass expanded to the 3n coordinate layout."""
        return np.repeat(self.lumped_mass, 3)


def _edge_map(elements: np.ndarray) -> dict:
    """sorted edge -> list of (triangle index, opposite vertex)."""
    edges: dict = {}
    for t, (a, b, c) in enumerate(elements):
        for u, v, w in ((a, b, c), (b, c, a), (c, a, b)):
            key = (min(u, v), max(u, v))
            edges.setdefault(key, []).append((t, w))
    return edges


def check_edge_manifold(elements: np.ndarray) -> dict:
    """Raise unless every edge has at most two incident triangles."""
    edges = _edge_map(elements)
    for (u, v), incident in edges.items():
        if len(incident) > 2:
            raise MeshFormatError(
                f"non-manifold edge ({u}, {v}): {len(incident)} incident triangles"
            )
    return edges


def extract_hinges(elements: np.ndarray) -> np.ndarray:
    """Interior-edge hinges as (e0, e1, opposite_a, opposite_b) rows.

    Deterministic: edges sorted lexicographically, triangles by index.
    """
    edges = check_edge_manifold(elements)
    rows = []
    for (u, v) in sorted(edges):
        incident = edges[(u, v)]
        if len(incident) == 2:
            (ta, wa), (tb, wb) = sorted(incident)
            rows.append((u, v, wa, wb))
    if not rows:
        return np.zeros((0, 4), dtype=np.int64)
    return np.asarray(rows, dtype=np.int64)


def dihedral_angles(positions: np.ndarray, hinges: np.ndarray) -> np.ndarray:
    """Signed dihedral angle per hinge (0 for coplanar triangles).

    The sign convention follows the hinge row order: positive when the
    second triangle folds toward the first triangle's normal.
    """
    x = positions.reshape(-1, 3)
    x0, x1, x2, x3 = (x[hinges[:, k]] for k in range(4))
    e0 = x1 - x0
    na = np.cross(e0, x2 - x0)
    nb = np.cross(x3 - x0, e0)
    w = np.cross(na, nb)
    e0n = e0 / np.linalg.norm(e0, axis=1, keepdims=True)
    sin_t = np.einsum("ij,ij->i", w, e0n)
    cos_t = np.einsum("ij,ij->i", na, nb)
    return np.arctan2(sin_t, cos_t)


def triangle_areas(positions: np.ndarray, elements: np.ndarray) -> np.ndarray:
    x = positions.reshape(-1, 3)
    a, b, c = x[elements[:, 0]], x[elements[:, 1]], x[elements[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def tet_signed_volumes(positions: np.ndarray, elements: np.ndarray) -> np.ndarray:
    x = positions.reshape(-1, 3)
    a, b, c, d = (x[elements[:, k]] for k in range(4))
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0


def make_rect_sheet(
    nx: int, ny: int, aspect_ratio: float = 1.0, side_length: float = 1.0
) -> Mesh:
    """Flat rectangular sheet with (nx+1)(ny+1) vertices and 2*nx*ny triangles.

    Side lengths are ``side_length`` along x and ``side_length / aspect_ratio``
    along y, centered on the origin in the z=0 plane. Each quad cell is split
    along the (i+j)-parity-alternating diagonal, which keeps the triangulation
    mirror-symmetric for even nx/ny.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    if aspect_ratio <= 0:
        raise ValueError("aspect_ratio must be positive")
    lx = float(side_length)
    ly = lx / float(aspect_ratio)
    xs = np.linspace(-lx / 2.0, lx / 2.0, nx + 1)
    ys = np.linspace(-ly / 2.0, ly / 2.0, ny + 1)
    verts = np.zeros(((nx + 1) * (ny + 1), 3))
    for i in range(nx + 1):
        for j in range(ny + 1):
            verts[i * (ny + 1) + j] = (xs[i], ys[j], 0.0)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append((a, b, c))
                tris.append((a, c, d))
            else:
                tris.append((a, b, d))
                tris.append((b, c, d))
    return Mesh(
        rest_positions=verts.ravel(),
        elements=np.asarray(tris, dtype=np.int64),
        kind=SHELL,
        generator={
            "type": "rect_sheet",
            "nx": nx,
            "ny": ny,
            "aspect_ratio": float(aspect_ratio),
            "side_length": lx,
        },
    )


def sheet_reflection_map(mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Mirror symmetry of a generated sheet about its x-midline.

    Returns (permutation, Q) with (sigma x)_v = Q @ x_perm[v]. Only defined
    for rect_sheet meshes with even nx.
    """
    gen = mesh.generator or {}
    if gen.get("type") != "rect_sheet":
        raise ValueError("reflection map only available for generated sheets")
    nx, ny = gen["nx"], gen["ny"]
    if nx % 2 != 0:
        raise ValueError("reflection symmetry requires even nx")
    perm = np.zeros(mesh.num_vertices, dtype=np.int64)
    for i in range(nx + 1):
        for j in range(ny + 1):
            perm[i * (ny + 1) + j] = (nx - i) * (ny + 1) + j
    q = np.diag([-1.0, 1.0, 1.0])
    return perm, q


def apply_vertex_map(
    positions: np.ndarray, perm: np.ndarray, q: np.ndarray
) -> np.ndarray:
    """Apply a (permutation, orthogonal matrix) symmetry to flat positions."""
    x = positions.reshape(-1, 3)
    return (x[perm] @ q.T).ravel()


def compute_rest_data(mesh: Mesh, material: MaterialParams) -> RestData:
    """Populate all per-element reference quantities and the lumped mass."""
    x = mesh.vertices
    n = mesh.num_vertices
    lumped = np.zeros(n)
    if mesh.kind == SOLID:
        vols = tet_signed_volumes(mesh.rest_positions, mesh.elements)
        if np.any(vols <= 0):
            bad = int(np.argmin(vols))
            raise MeshFormatError(f"degenerate or inverted tet {bad}")
        a = x[mesh.elements[:, 0]]
        dm = np.stack(
            [x[mesh.elements[:, k]] - a for k in (1, 2, 3)], axis=2
        )  # (ne, 3, 3) columns are edge vectors
        inv = np.linalg.inv(dm)
        np.add.at(lumped, mesh.elements, (material.density * vols / 4.0)[:, None])
        return RestData(
            lumped_mass=lumped,
            tet_inverse_shape=inv,
            tet_volumes=vols,
        )

    areas = triangle_areas(mesh.rest_positions, mesh.elements)
    if np.any(areas <= 0):
        bad = int(np.argmin(areas))
        raise MeshFormatError(f"degenerate triangle {bad}")
    # Local 2D frame per triangle: t1 along the first edge, t2 in-plane normal.
    a = x[mesh.elements[:, 0]]
    d1 = x[mesh.elements[:, 1]] - a
    d2 = x[mesh.elements[:, 2]] - a
    nrm = np.cross(d1, d2)
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    t1 = d1 / np.linalg.norm(d1, axis=1, keepdims=True)
    t2 = np.cross(nrm, t1)
    dm = np.empty((len(areas), 2, 2))
    dm[:, 0, 0] = np.einsum("ij,ij->i", d1, t1)
    dm[:, 0, 1] = np.einsum("ij,ij->i", d2, t1)
    dm[:, 1, 0] = 0.0
    dm[:, 1, 1] = np.einsum("ij,ij->i", d2, t2)
    inv = np.linalg.inv(dm)

    hinges = extract_hinges(mesh.elements)
    if len(hinges):
        rest_angles = dihedral_angles(mesh.rest_positions, hinges)
        edge_vec = x[hinges[:, 1]] - x[hinges[:, 0]]
        edge_len = np.linalg.norm(edge_vec, axis=1)
        area_lookup = {}
        for t, tri in enumerate(mesh.elements):
            area_lookup[frozenset(tri.tolist())] = areas[t]
        pair_areas = np.array(
            [
                area_lookup[frozenset((h[0], h[1], h[2]))]
                + area_lookup[frozenset((h[0], h[1], h[3]))]
                for h in hinges
            ]
        )
        weights = 3.0 * edge_len**2 / pair_areas
    else:
        rest_angles = np.zeros(0)
        edge_len = np.zeros(0)
        weights = np.zeros(0)

    np.add.at(
        lumped,
        mesh.elements,
        (material.density * material.thickness * areas / 3.0)[:, None],
    )
    return RestData(
        lumped_mass=lumped,
        tri_inverse_shape=inv,
        tri_areas=areas,
        edge_rest_lengths=edge_len,
        hinges=hinges,
        hinge_rest_angles=rest_angles,
        hinge_weights=weights,
    )


def load_tri_mesh(path) -> Mesh:
    """Load a triangle-only OBJ file (1-based indices on disk)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    verts = []
    faces = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            if len(parts) < 4:
                raise MeshFormatError(f"{path}:{lineno}: malformed vertex line")
            try:
                verts.append([float(p) for p in parts[1:4]])
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: bad vertex coordinate") from exc
        elif parts[0] == "f":
            refs = parts[1:]
            if len(refs) != 3:
                raise MeshFormatError(
                    f"{path}:{lineno}: non-triangle face with {len(refs)} vertices"
                )
            idx = []
            for ref in refs:
                tok = ref.split("/")[0]
                try:
                    i = int(tok)
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{lineno}: bad face index {ref!r}") from exc
                if i == 0:
                    raise MeshFormatError(f"{path}:{lineno}: OBJ indices are 1-based")
                idx.append(i - 1 if i > 0 else len(verts) + i)
            faces.append(idx)
    if not verts or not faces:
        raise MeshFormatError(f"{path}: no triangles found")
    elements = np.asarray(faces, dtype=np.int64)
    mesh = Mesh(
        rest_positions=np.asarray(verts, dtype=np.float64).ravel(),
        elements=elements,
        kind=SHELL,
    )
    if np.any(triangle_areas(mesh.rest_positions, elements) <= 0):
        raise MeshFormatError(f"{path}: degenerate (zero-area) triangle")
    check_edge_manifold(elements)
    return mesh


def save_tri_mesh(mesh: Mesh, path) -> None:
    """Write a shell mesh as OBJ; float repr round-trips exactly."""
    if mesh.kind != SHELL:
        raise MeshFormatError("save_tri_mesh expects a shell mesh")
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for f in mesh.elements:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_tet_mesh(node_path, ele_path) -> Mesh:
    """Load a TetGen-style .node/.ele pair; reorients inverted tets."""
    node_path, ele_path = Path(node_path), Path(ele_path)
    for p in (node_path, ele_path):
        if not p.exists():
            raise FileNotFoundError(f"mesh file not found: {p}")

    def data_lines(path):
        out = []
        for raw in path.read_text().splitlines():
            line = raw.split("#")[0].strip()
            if line:
                out.append(line.split())
        return out

    nlines = data_lines(node_path)
    header = nlines[0]
    count = int(header[0])
    if len(nlines) - 1 < count:
        raise MeshFormatError(f"{node_path}: expected {count} node lines")
    ids = []
    coords = []
    for parts in nlines[1 : count + 1]:
        ids.append(int(parts[0]))
        coords.append([float(parts[1]), float(parts[2]), float(parts[3])])
    base = min(ids)
    if base not in (0, 1):
        raise MeshFormatError(f"{node_path}: node indices must start at 0 or 1")
    order = np.argsort(ids)
    verts = np.asarray(coords, dtype=np.float64)[order]

    elines = data_lines(ele_path)
    ecount = int(elines[0][0])
    if len(elines) - 1 < ecount:
        raise MeshFormatError(f"{ele_path}: expected {ecount} element lines")
    tets = []
    for parts in elines[1 : ecount + 1]:
        tets.append([int(p) - base for p in parts[1:5]])
    elements = np.asarray(tets, dtype=np.int64)
    if elements.size and (elements.min() < 0 or elements.max() >= len(verts)):
        raise MeshFormatError(f"{ele_path}: node index out of range")

    flat = verts.ravel()
    vols = tet_signed_volumes(flat, elements)
    flipped = vols < 0
    if np.any(flipped):
        elements = elements.copy()
        elements[flipped, 2], elements[flipped, 3] = (
            elements[flipped, 3],
            elements[flipped, 2].copy(),
        )
        vols = tet_signed_volumes(flat, elements)
    if np.any(vols == 0):
        raise MeshFormatError("zero-volume tet")
    return Mesh(rest_positions=flat, elements=elements, kind=SOLID)


def save_tet_mesh(mesh: Mesh, node_path, ele_path) -> None:
    """Write a solid mesh as a TetGen .node/.ele pair (1-based)."""
    if mesh.kind != SOLID:
        raise MeshFormatError("save_tet_mesh expects a solid mesh")
    v = mesh.vertices
    nlines = [f"{len(v)} 3 0 0"]
    for i, p in enumerate(v, start=1):
        nlines.append(f"{i} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}")
    Path(node_path).write_text("\n".join(nlines) + "\n")
    elines = [f"{len(mesh.elements)} 4 0"]
    for i, t in enumerate(mesh.elements, start=1):
        elines.append(f"{i} {t[0] + 1} {t[1] + 1} {t[2] + 1} {t[3] + 1}")
    Path(ele_path).write_text("\n".join(elines) + "\n")


def mesh_to_dict(mesh: Mesh) -> dict:
    """JSON-safe representation; float values round-trip bit-exactly."""
    return {
        "rest_positions": [float(v) for v in mesh.rest_positions],
        "elements": [[int(i) for i in row] for row in mesh.elements],
        "kind": mesh.kind,
        "pinned": {
            str(int(v)): [float(c) for c in np.asarray(t, dtype=np.float64)]
            for v, t in (mesh.pinned or {}).items()
        } or None,
        "generator": mesh.generator,
    }


def mesh_from_dict(d: dict) -> Mesh:
    pinned = d.get("pinned")
    if pinned:
        pinned = {int(v): np.asarray(t, dtype=np.float64) for v, t in pinned.items()}
    return Mesh(
        rest_positions=np.asarray(d["rest_positions"], dtype=np.float64),
        elements=np.asarray(d["elements"], dtype=np.int64),
        kind=d["kind"],
        pinned=pinned,
        generator=d.get("generator"),
    )

"""Uniform simplicial meshes and Lagrange node layouts.

Supports the two domains used throughout: an interval partitioned into
equal subintervals, and the unit square partitioned into 2*n*n triangles
by splitting an n-by-n grid of cells along same-direction diagonals.
Node identity is resolved on an integer lattice, never by comparing
floating-point coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MeshSize:
    """Largest element diameter of a partition."""

    h: float

    def __post_init__(self):
        if not self.h > 0.0:
            raise ValueError(f"mesh size must be positive, got {self.h}")


@dataclass(frozen=True)
class SimplicialMesh:
    """Partition of an interval (dim=1) or the unit square (dim=2).

    Attributes:
        dim: spatial dimension, 1 or 2.
        vertices: (n_vertices, dim) coordinates.
        simplexes: (n_elements, dim+1) vertex index tuples.
        boundary_vertex_flags: True exactly for vertices on the domain boundary.
        divisions: subdivisions per direction (n elements for intervals,
            n cells per side for the square).
        interval: (a, b) endpoints for dim=1, None for dim=2.
        h: largest element diameter.
    """

    dim: int
    vertices: np.ndarray
    simplexes: np.ndarray
    boundary_vertex_flags: np.ndarray
    divisions: int
    interval: tuple[float, float] | None
    h: float

    def __post_init__(self):
        for arr in (self.vertices, self.simplexes, self.boundary_vertex_flags):
            arr.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return len(self.simplexes)

    def element_vertices(self) -> np.ndarray:
        """Coordinates of each simplex, shape (n_elements, dim+1, dim)."""
        return self.vertices[self.simplexes]

    def size(self) -> MeshSize:
        """Recompute the mesh size from the geometry (max element diameter)."""
        verts = self.element_vertices()
        if self.dim == 1:
            diam = np.abs(verts[:, 1, 0] - verts[:, 0, 0])
        else:
            d01 = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
            d02 = np.linalg.norm(verts[:, 2] - verts[:, 0], axis=1)
            d12 = np.linalg.norm(verts[:, 2] - verts[:, 1], axis=1)
            diam = np.max(np.stack([d01, d02, d12]), axis=0)
        return MeshSize(h=float(diam.max()))

    def element_measures(self) -> np.ndarray:
        """Length (dim=1) or area (dim=2) of every element."""
        verts = self.element_vertices()
        if self.dim == 1:
            return np.abs(verts[:, 1, 0] - verts[:, 0, 0])
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True)
class LagrangeSpace:
    """Degree-k Lagrange nodal layout over a mesh (continuous, C0-conforming).

    Attributes:
        mesh: underlying simplicial mesh.
        degree: polynomial degree k >= 1.
        nodes: (n_nodes, dim) node coordinates, equally spaced per element.
        node_lattice: (n_nodes, dim) integer lattice coordinates on the fine
            grid of spacing h_lattice = 1/(n*k) per direction; exact node identity.
        element_dofs: (n_elements, n_local) global node index per local node.
        boundary_node_flags: True exactly for nodes on the domain boundary.
        free_node_indices: indices of interior nodes (the unknowns).
    """

    mesh: SimplicialMesh
    degree: int
    nodes: np.ndarray
    node_lattice: np.ndarray
    element_dofs: np.ndarray
    boundary_node_flags: np.ndarray
    free_node_indices: np.ndarray

    def __post_init__(self):
        for arr in (self.nodes, self.node_lattice, self.element_dofs,
                    self.boundary_node_flags, self.free_node_indices):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_free(self) -> int:
        return len(self.free_node_indices)


def uniform_interval_mesh(a: float, b: float, n: int) -> SimplicialMesh:
    """Partition [a, b] into n equal elements.

    Raises ValueError on an invalid range (a >= b) or element count (n < 1).
    """
    if not a < b:
        raise ValueError(f"invalid range: need a < b, got a={a}, b={b}")
    if n < 1:
        raise ValueError(f"invalid element count: need n >= 1, got {n}")
    x = a + (b - a) * np.arange(n + 1) / n
    vertices = x.reshape(-1, 1)
    simplexes = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    flags = np.zeros(n + 1, dtype=bool)
    flags[0] = flags[-1] = True
    return SimplicialMesh(dim=1, vertices=vertices,
                          simplexes=simplexes.astype(np.int64),
                          boundary_vertex_flags=flags, divisions=n,
                          interval=(float(a), float(b)), h=(b - a) / n)


def uniform_square_mesh(n: int) -> SimplicialMesh:
    """Triangulate the unit square with 2*n*n triangles.

    Each grid cell is split along the diagonal from its lower-left to its
    upper-right corner (all diagonals in the same direction), so the mesh
    is deterministic and symmetric under half-turn rotation about the center.
    Raises ValueError when n < 1.
    """
    if n < 1:
        raise ValueError(f"invalid subdivision count: need n >= 1, got {n}")
    idx = np.arange(n + 1)
    xv, yv = np.meshgrid(idx / n, idx / n, indexing="xy")
    vertices = np.column_stack([xv.ravel(), yv.ravel()])

    def vid(ix, iy):
        return iy * (n + 1) + ix

    simplexes = []
    for cy in range(n):
        for cx in range(n):
            v00 = vid(cx, cy)
            v10 = vid(cx + 1, cy)
            v01 = vid(cx, cy + 1)
            v11 = vid(cx + 1, cy + 1)
            simplexes.append((v00, v10, v11))
            simplexes.append((v00, v11, v01))
    simplexes = np.array(simplexes, dtype=np.int64)

    ix = np.tile(idx, n + 1)
    iy = np.repeat(idx, n + 1)
    flags = (ix == 0) | (ix == n) | (iy == 0) | (iy == n)
    return SimplicialMesh(dim=2, vertices=vertices, simplexes=simplexes,
                          boundary_vertex_flags=flags, divisions=n,
                          interval=None, h=float(np.sqrt(2.0) / n))


def reference_node_multi_indices(dim: int, k: int) -> list[tuple[int, ...]]:
    """Lattice multi-indices of the equally spaced degree-k reference nodes.

    dim=1: (i,) for i = 0..k. dim=2: (i, j) with i + j <= k, enumerated j-major.
    The enumeration order fixes the local dof ordering used everywhere.
    """
    if dim == 1:
        return [(i,) for i in range(k + 1)]
    return [(i, j) for j in range(k + 1) for i in range(k + 1 - j)]


def build_lagrange_space(mesh: SimplicialMesh, k: int) -> LagrangeSpace:
    """Lay out the degree-k Lagrange nodes over a uniform mesh.

    Nodes shared between elements are merged exactly via their integer
    position on the fine lattice of spacing (element size)/k.
    Raises ValueError when k < 1.
    """
    if k < 1:
        raise ValueError(f"invalid degree: need k >= 1, got {k}")
    n = mesh.divisions
    local = reference_node_multi_indices(mesh.dim, k)

    if mesh.dim == 1:
        a, b = mesh.interval
        nk = n * k
        # element e covers fine-lattice positions [e*k, e*k + k]
        element_dofs = np.array([[e * k + i for (i,) in local]
                                 for e in range(mesh.n_elements)], dtype=np.int64)
        lattice = np.arange(nk + 1, dtype=np.int64).reshape(-1, 1)
        nodes = (a + (b - a) * lattice[:, 0] / nk).reshape(-1, 1)
        boundary = np.zeros(nk + 1, dtype=bool)
        boundary[0] = boundary[-1] = True
    else:
        nk = n * k
        lattice_to_id: dict[tuple[int, int], int] = {}
        lattice_list: list[tuple[int, int]] = []

        def node_id(pos):
            nid = lattice_to_id.get(pos)
            if nid is None:
                nid = len(lattice_list)
                lattice_to_id[pos] = nid
                lattice_list.append(pos)
            return nid

        element_dofs = np.empty((mesh.n_elements, len(local)), dtype=np.int64)
        e = 0
        for cy in range(n):
            for cx in range(n):
                # lower triangle (v00, v10, v11): edge1 -> +x, edge2 -> diagonal
                for loc, (i, j) in enumerate(local):
                    element_dofs[e, loc] = node_id((cx * k + i + j, cy * k + j))
                e += 1
                # upper triangle (v00, v11, v01): edge1 -> diagonal, edge2 -> +y
                for loc, (i, j) in enumerate(local):
                    element_dofs[e, loc] = node_id((cx * k + i, cy * k + i + j))
                e += 1
        lattice = np.array(lattice_list, dtype=np.int64)
        nodes = lattice / nk
        boundary = ((lattice[:, 0] == 0) | (lattice[:, 0] == nk)
                    | (lattice[:, 1] == 0) | (lattice[:, 1] == nk))

    free = np.flatnonzero(~boundary)
    return LagrangeSpace(mesh=mesh, degree=k, nodes=np.asarray(nodes, dtype=float),
                         node_lattice=lattice, element_dofs=element_dofs,
                         boundary_node_flags=boundary, free_node_indices=free)

"""Structured meshes for the two solver branches.

Two kinds are supported: ``"fe-tri"`` (P1 triangulation, nodal DOFs) and
``"fv-quad"`` (cell-centred quadrilaterals, DOFs at cell centres). Boundary
facets carry one tag each from :data:`TAGS`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidGeometry, InvalidResolution

INLET, WALL, OUTLET = 0, 1, 2
TAGS = {INLET: "Inlet", WALL: "Wall", OUTLET: "Outlet"}

FE_TRI = "fe-tri"
FV_QUAD = "fv-quad"


@dataclass(eq=False)
class Mesh:
    kind: str
    nodes: np.ndarray  # (n_nodes, 2)
    cells: np.ndarray  # (n_cells, 3 | 4) node indices, counter-clockwise
    h: np.ndarray  # element diameters
    volumes: np.ndarray  # element areas (unit depth)
    bfacets: np.ndarray  # (n_b, 2) node pairs
    btags: np.ndarray  # (n_b,) one of INLET / WALL / OUTLET
    # fv-quad only; faces are ordered interior first, then boundary (same order as bfacets)
    centers: np.ndarray | None = None
    owner: np.ndarray | None = None
    neighbour: np.ndarray | None = None
    face_normal: np.ndarray | None = None
    face_area: np.ndarray | None = None
    face_center: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_dofs(self) -> int:
        return self.n_nodes if self.kind == FE_TRI else self.n_cells

    @property
    def n_interior_faces(self) -> int:
        return 0 if self.neighbour is None else len(self.neighbour)

    def boundary_nodes(self, tag=None) -> np.ndarray:
        sel = self.bfacets if tag is None else self.bfacets[self.btags == tag]
        return np.unique(sel.ravel())

    def tag_census(self) -> dict[str, int]:
        return {name: int(np.sum(self.btags == t)) for t, name in TAGS.items()}

    def fingerprint(self) -> tuple:
        return (self.kind, self.n_nodes, self.n_cells, len(self.bfacets))

    def wall_distance(self) -> np.ndarray:
        """Distance from every cell centre to the nearest Wall facet."""
        if self.centers is None:
            raise InvalidGeometry("wall distance needs cell centres (fv-quad mesh)")
        seg = self.nodes[self.bfacets[self.btags == WALL]]  # (m, 2, 2)
        a, b = seg[:, 0], seg[:, 1]
        ab = b - a
        ap = self.centers[:, None, :] - a[None]
        t = np.clip(np.einsum("cmk,mk->cm", ap, ab) / np.einsum("mk,mk->m", ab, ab), 0.0, 1.0)
        closest = a[None] + t[..., None] * ab[None]
        return np.min(np.linalg.norm(self.centers[:, None, :] - closest, axis=-1), axis=1)


def build_cavity_mesh(n: int) -> Mesh:
    """Unit square split into ``2 n^2`` right triangles; the top edge is the lid (Inlet)."""
    if int(n) != n or n < 2:
        raise InvalidResolution(f"cavity mesh needs n >= 2 cells per side, got {n}")
    n = int(n)
    s = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(s, s)
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (n + 1) + i

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    i, j = i.ravel(), j.ravel()
    a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([a, b, c])
    cells[1::2] = np.column_stack([a, c, d])

    k = np.arange(n)
    bottom = np.column_stack([idx(k, 0), idx(k + 1, 0)])
    right = np.column_stack([idx(n, k), idx(n, k + 1)])
    top = np.column_stack([idx(k + 1, n), idx(k, n)])
    left = np.column_stack([idx(0, k + 1), idx(0, k)])
    bfacets = np.vstack([bottom, right, top, left])
    btags = np.full(4 * n, WALL, dtype=np.int8)
    btags[2 * n : 3 * n] = INLET

    p = nodes[cells]
    e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    volumes = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    edges = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
    h = np.linalg.norm(edges, axis=-1).max(axis=1)
    return Mesh(FE_TRI, nodes, cells, h, volumes, bfacets, btags, meta={"n": n})


def _structured_quads(x_edges, y_edges, active, tag_of) -> Mesh:
    nx, ny = len(x_edges) - 1, len(y_edges) - 1
    cell_id = -np.ones((nx, ny), dtype=np.int64)
    ii, jj = np.nonzero(active)
    order = np.lexsort((ii, jj))  # row-major in y then x
    ii, jj = ii[order], jj[order]
    cell_id[ii, jj] = np.arange(len(ii))

    node_id = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    used = np.zeros((nx + 1, ny + 1), dtype=bool)
    for di in (0, 1):
        for dj in (0, 1):
            used[ii + di, jj + dj] = True
    ni, nj = np.nonzero(used)
    order = np.lexsort((ni, nj))
    ni, nj = ni[order], nj[order]
    node_id[ni, nj] = np.arange(len(ni))
    nodes = np.column_stack([x_edges[ni], y_edges[nj]])
    cells = np.column_stack(
        [node_id[ii, jj], node_id[ii + 1, jj], node_id[ii + 1, jj + 1], node_id[ii, jj + 1]]
    )
    dx = np.diff(x_edges)[ii]
    dy = np.diff(y_edges)[jj]
    volumes = dx * dy
    centers = np.column_stack([0.5 * (x_edges[ii] + x_edges[ii + 1]), 0.5 * (y_edges[jj] + y_edges[jj + 1])])

    def has(i, j):
        ok = (i >= 0) & (i < nx) & (j >= 0) & (j < ny)
        out = np.zeros_like(ok)
        out[ok] = active[i[ok], j[ok]]
        return out

    owner, neigh, normal, area, fcenter = [], [], [], [], []
    # interior faces: east then north neighbours
    east = has(ii + 1, jj)
    owner.append(cell_id[ii[east], jj[east]])
    neigh.append(cell_id[ii[east] + 1, jj[east]])
    normal.append(np.tile([1.0, 0.0], (east.sum(), 1)))
    area.append(dy[east])
    fcenter.append(np.column_stack([x_edges[ii[east] + 1], centers[east, 1]]))
    north = has(ii, jj + 1)
    owner.append(cell_id[ii[north], jj[north]])
    neigh.append(cell_id[ii[north], jj[north] + 1])
    normal.append(np.tile([0.0, 1.0], (north.sum(), 1)))
    area.append(dx[north])
    fcenter.append(np.column_stack([centers[north, 0], y_edges[jj[north] + 1]]))
    n_if = int(east.sum() + north.sum())

    # boundary faces, cell by cell: south, east, north, west
    sides = [
        ((0, -1), (0.0, -1.0), lambda i, j: (node_id[i, j], node_id[i + 1, j])),
        ((1, 0), (1.0, 0.0), lambda i, j: (node_id[i + 1, j], node_id[i + 1, j + 1])),
        ((0, 1), (0.0, 1.0), lambda i, j: (node_id[i + 1, j + 1], node_id[i, j + 1])),
        ((-1, 0), (-1.0, 0.0), lambda i, j: (node_id[i, j + 1], node_id[i, j])),
    ]
    b_rows = []
    for s, ((di, dj), nrm, nodes_of) in enumerate(sides):
        miss = ~has(ii + di, jj + dj)
        c = np.nonzero(miss)[0]
        a_, b_ = nodes_of(ii[c], jj[c])
        b_rows.append(np.column_stack([c, np.full(len(c), s), a_, b_]))
    b_rows = np.vstack(b_rows)
    b_rows = b_rows[np.lexsort((b_rows[:, 1], b_rows[:, 0]))]
    bc_cells = b_rows[:, 0]
    bfacets = b_rows[:, 2:4]
    bnorm = np.array([sides[s][1] for s in b_rows[:, 1]])
    seg = nodes[bfacets]
    barea = np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1)
    bcenter = seg.mean(axis=1)
    btags = np.array([tag_of(c, nv) for c, nv in zip(bcenter, bnorm)], dtype=np.int8)

    owner.append(bc_cells)
    normal.append(bnorm)
    area.append(barea)
    fcenter.append(bcenter)
    return Mesh(
        FV_QUAD,
        nodes,
        cells,
        h=np.hypot(dx, dy),
        volumes=volumes,
        bfacets=bfacets,
        btags=btags,
        centers=centers,
        owner=np.concatenate(owner).astype(np.int64),
        neighbour=np.concatenate(neigh).astype(np.int64),
        face_normal=np.vstack(normal),
        face_area=np.concatenate(area),
        face_center=np.vstack(fcenter),
        meta={"n_interior_faces": n_if, "ij": np.column_stack([ii, jj]), "shape": (nx, ny)},
    )


def build_channel_mesh(nx: int, ny: int, length: float = 1.0, height: float = 1.0) -> Mesh:
    """Rectangular FV channel: Inlet on the left, Outlet on the right, Walls top and bottom."""
    if nx < 1 or ny < 1:
        raise InvalidResolution(f"channel needs at least one cell per direction, got {nx}x{ny}")
    if length <= 0 or height <= 0:
        raise InvalidGeometry("channel dimensions must be positive")
    xe = np.linspace(0.0, length, nx + 1)
    ye = np.linspace(0.0, height, ny + 1)

    def tag_of(center, normal):
        if normal[0] < -0.5 and np.isclose(center[0], 0.0):
            return INLET
        if normal[0] > 0.5 and np.isclose(center[0], length):
            return OUTLET
        return WALL

    mesh = _structured_quads(xe, ye, np.ones((nx, ny), dtype=bool), tag_of)
    mesh.meta.update(channel_height=height, step_x=0.0)
    return mesh


@dataclass(frozen=True)
class BackstepGeometry:
    step_height: float = 50.8
    inlet_height: float = 50.8
    upstream_length: float = 4 * 50.8
    downstream_length: float = 16 * 50.8

    @classmethod
    def from_d(cls, d: float) -> "BackstepGeometry":
        return cls(d, d, 4 * d, 16 * d)

    def validate(self):
        for name, v in vars(self).items():
            if not v > 0:
                raise InvalidGeometry(f"backstep {name} must be positive, got {v}")


def build_backstep_mesh(geometry: BackstepGeometry | None = None, resolution: int = 4) -> Mesh:
    """L-shaped backward-facing-step channel with ``resolution`` cells per step height.

    The step corner sits at the origin: the upstream channel spans
    ``x in [-upstream, 0], y in [step, step + inlet]`` and the downstream
    channel ``x in [0, downstream], y in [0, step + inlet]``.
    """
    g = geometry or BackstepGeometry()
    g.validate()
    if int(resolution) != resolution or resolution < 4:
        raise InvalidResolution(f"backstep resolution must be >= 4 cells per step height, got {resolution}")
    h = g.step_height / resolution

    def edges(a, b):
        n = max(1, int(round((b - a) / h)))
        return np.linspace(a, b, n + 1)

    xe = np.concatenate([edges(-g.upstream_length, 0.0)[:-1], edges(0.0, g.downstream_length)])
    top = g.step_height + g.inlet_height
    ye = np.concatenate([edges(0.0, g.step_height)[:-1], edges(g.step_height, top)])
    xc = 0.5 * (xe[:-1] + xe[1:])
    yc = 0.5 * (ye[:-1] + ye[1:])
    active = ~((xc[:, None] < 0.0) & (yc[None, :] < g.step_height))

    x0, x1 = xe[0], xe[-1]

    def tag_of(center, normal):
        if normal[0] < -0.5 and np.isclose(center[0], x0):
            return INLET
        if normal[0] > 0.5 and np.isclose(center[0], x1):
            return OUTLET
        return WALL

    mesh = _structured_quads(xe, ye, active, tag_of)
    mesh.meta.update(channel_height=top, step_x=0.0, geometry=g, resolution=int(resolution))
    return mesh

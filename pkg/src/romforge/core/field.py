"""Discrete fields, inner products and norms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..errors import IncompatibleFields, InvalidConfig, UndefinedRelativeError
from .mesh import FE_TRI, FV_QUAD, INLET, OUTLET, WALL, Mesh
from .p1 import mass_matrix, p1_elements, stiffness_matrix

L2, H1_SEMI, H1 = "L2", "H1-semi", "H1-full"


@dataclass(eq=False)
class Field:
    """Scalar ``(n,)`` or 2-vector ``(n, 2)`` DOF values on a mesh.

    ``bc`` is the inlet Dirichlet vector carried by FV velocity fields; it is
    what makes face reconstructions linear in the field (modes carry zero,
    liftings carry a unit vector, snapshots carry the inlet velocity).
    """

    mesh: Mesh
    values: np.ndarray
    bc: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.mesh.n_dofs or self.values.ndim not in (1, 2):
            raise IncompatibleFields(
                f"field has shape {self.values.shape}, mesh has {self.mesh.n_dofs} DOFs"
            )
        if self.values.ndim == 2 and self.values.shape[1] != 2:
            raise IncompatibleFields("vector fields must have two components")
        if self.bc is not None:
            self.bc = np.asarray(self.bc, dtype=float).reshape(2)

    @property
    def arity(self) -> int:
        return 1 if self.values.ndim == 1 else 2

    def flat(self) -> np.ndarray:
        """Component-major flattening: all x-values, then all y-values."""
        return self.values if self.arity == 1 else self.values.T.ravel()

    @classmethod
    def from_flat(cls, mesh, flat, arity, bc=None) -> "Field":
        flat = np.asarray(flat, dtype=float)
        vals = flat if arity == 1 else flat.reshape(2, -1).T
        return cls(mesh, vals, bc)

    def bc_or_zero(self) -> np.ndarray:
        return np.zeros(2) if self.bc is None else self.bc

    def _combine(self, other, op):
        _check_pair(self, other)
        bc = None
        if self.bc is not None or other.bc is not None:
            bc = op(self.bc_or_zero(), other.bc_or_zero())
        return Field(self.mesh, op(self.values, other.values), bc)

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, s):
        return Field(self.mesh, self.values * s, None if self.bc is None else self.bc * s)

    __rmul__ = __mul__

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def _check_pair(f, g):
    if f.mesh is not g.mesh and f.mesh.fingerprint() != g.mesh.fingerprint():
        raise IncompatibleFields("fields live on different meshes")
    if f.arity != g.arity:
        raise IncompatibleFields(f"arity mismatch: {f.arity} vs {g.arity}")


@dataclass(eq=False)
class InnerProduct:
    kind: str
    weight: sp.csr_matrix  # acts on Field.flat()
    mesh: Mesh
    arity: int

    def __call__(self, f: Field, g: Field) -> float:
        return inner(f, g, self)

    def gram(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        """Gram matrix of column-stacked flat vectors."""
        b = a if b is None else b
        return a.T @ (self.weight @ b)

    def norm(self, f: Field) -> float:
        return float(np.sqrt(max(inner(f, f, self), 0.0)))


def _fv_stiffness(mesh: Mesh, dirichlet_tags) -> sp.csr_matrix:
    n_if = mesh.n_interior_faces
    o, nb = mesh.owner[:n_if], mesh.neighbour
    dist = np.linalg.norm(mesh.centers[nb] - mesh.centers[o], axis=1)
    c = mesh.face_area[:n_if] / dist
    rows = np.concatenate([o, nb, o, nb])
    cols = np.concatenate([o, nb, nb, o])
    vals = np.concatenate([c, c, -c, -c])
    bo = mesh.owner[n_if:]
    bd = np.linalg.norm(mesh.face_center[n_if:] - mesh.centers[bo], axis=1)
    mask = np.isin(mesh.btags, dirichlet_tags)
    rows = np.concatenate([rows, bo[mask]])
    cols = np.concatenate([cols, bo[mask]])
    vals = np.concatenate([vals, (mesh.face_area[n_if:] / bd)[mask]])
    return sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_cells,) * 2).tocsr()


@lru_cache(maxsize=32)
def _scalar_weight(mesh: Mesh, kind: str, arity: int) -> sp.csr_matrix:
    if mesh.kind == FE_TRI:
        el = p1_elements(mesh)
        m, k = mass_matrix(el), stiffness_matrix(el)
    elif mesh.kind == FV_QUAD:
        m = sp.diags(mesh.volumes).tocsr()
        # velocity-like fields are pinned on Inlet/Wall; scalar fields are free
        k = _fv_stiffness(mesh, (INLET, WALL) if arity == 2 else ())
    else:
        raise InvalidConfig(f"unknown mesh kind {mesh.kind}")
    return {L2: m, H1_SEMI: k, H1: (m + k).tocsr()}[kind]


def inner_product(mesh: Mesh, kind: str = L2, arity: int = 1) -> InnerProduct:
    if kind not in (L2, H1_SEMI, H1):
        raise InvalidConfig(f"unknown inner product {kind!r}")
    w = _scalar_weight(mesh, kind, arity)
    if arity == 2:
        w = sp.block_diag([w, w]).tocsr()
    return InnerProduct(kind, w, mesh, arity)


def inner(f: Field, g: Field, ip: InnerProduct) -> float:
    _check_pair(f, g)
    if ip.arity != f.arity or ip.weight.shape[0] != f.flat().size:
        raise IncompatibleFields("inner product was built for a different mesh or arity")
    return float(f.flat() @ (ip.weight @ g.flat()))


def relative_l2_error(f_rom: Field, f_fom: Field, ip: InnerProduct | None = None) -> float:
    ip = ip or inner_product(f_fom.mesh, L2, f_fom.arity)
    ref = ip.norm(f_fom)
    if ref == 0.0:
        raise UndefinedRelativeError("reference field has zero L2 norm")
    return ip.norm(f_rom - f_fom) / ref


__all__ = [
    "Field",
    "InnerProduct",
    "inner_product",
    "inner",
    "relative_l2_error",
    "L2",
    "H1_SEMI",
    "H1",
    "INLET",
    "OUTLET",
    "WALL",
]

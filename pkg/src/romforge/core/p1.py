"""P1 element geometry and the edge-midpoint quadrature rule (exact to degree 2)."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# barycentric coordinates of the three edge midpoints; weights are |K|/3 each
QP_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


@dataclass(frozen=True, eq=False)
class P1Elements:
    conn: np.ndarray  # (E, 3)
    area: np.ndarray  # (E,)
    grad: np.ndarray  # (E, 3, 2) gradients of the barycentric functions
    h: np.ndarray  # (E,)
    n_nodes: int

    @property
    def qw(self) -> np.ndarray:
        """Quadrature weights, shape (E, 3)."""
        return np.repeat(self.area[:, None] / 3.0, 3, axis=1)

    def at_qp(self, nodal: np.ndarray) -> np.ndarray:
        """Values of nodal fields at quadrature points: (..., n_nodes[, c]) -> (E, 3[, c])."""
        return np.einsum("qa,ea...->eq...", QP_BARY, nodal[self.conn])

    def gradient(self, nodal: np.ndarray) -> np.ndarray:
        """Element-constant gradients. Scalar (n,) -> (E, 2); vector (n, 2) -> (E, 2, 2) as [comp, deriv]."""
        vals = nodal[self.conn]
        if vals.ndim == 2:
            return np.einsum("ea,ead->ed", vals, self.grad)
        return np.einsum("eac,ead->ecd", vals, self.grad)

    def scatter(self, local: np.ndarray, shape=None) -> sp.csr_matrix:
        """Assemble element matrices (E, 3, 3) into a global sparse matrix."""
        rows = np.repeat(self.conn, 3, axis=1).ravel()
        cols = np.tile(self.conn, (1, 3)).ravel()
        n = self.n_nodes
        return sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape or (n, n)).tocsr()

    def scatter_vec(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(self.conn.ravel(), weights=local.ravel(), minlength=self.n_nodes)


def p1_elements(mesh) -> P1Elements:
    p = mesh.nodes[mesh.cells]  # (E, 3, 2)
    x, y = p[..., 0], p[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    # grad(lambda_a) = (y_b - y_c, x_c - x_b) / det for (a, b, c) cyclic
    grad = np.empty((len(p), 3, 2))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        grad[:, a, 0] = (y[:, b] - y[:, c]) / det
        grad[:, a, 1] = (x[:, c] - x[:, b]) / det
    return P1Elements(mesh.cells, 0.5 * np.abs(det), grad, mesh.h, mesh.n_nodes)


def mass_matrix(el: P1Elements) -> sp.csr_matrix:
    local = np.einsum("eq,qa,qb->eab", el.qw, QP_BARY, QP_BARY)
    return el.scatter(local)


def stiffness_matrix(el: P1Elements) -> sp.csr_matrix:
    local = el.area[:, None, None] * np.einsum("ead,ebd->eab", el.grad, el.grad)
    return el.scatter(local)

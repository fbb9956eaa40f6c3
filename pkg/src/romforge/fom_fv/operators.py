"""Cell-centred finite-volume operators on structured quad meshes.

Velocity states are handled as extended vectors ``X = [u_x (n), u_y (n), bc_x, bc_y]``
where ``bc`` is the inlet Dirichlet vector. Every face reconstruction is then
a linear map of ``X``, which makes the discrete operators exactly linear (or
bilinear for convection) in the fields they act on. The reduced operators
are assembled from the very same maps, so a Galerkin projection of these
discrete equations is exact.

Boundary conventions:

* velocity: Inlet = carried ``bc`` vector, Wall = 0, Outlet = zero gradient;
* pressure: Outlet = 0, Inlet and Wall = zero gradient;
* eddy viscosity: zero gradient everywhere.

Gradients use the Gauss theorem with linear face interpolation. The
Laplacian uses compact face-normal gradients. Face gradients (needed by the
transpose-gradient stress) average the two neighbouring cell gradients and
fall back to the owner gradient on boundary faces.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..core import FV_QUAD, INLET, OUTLET, WALL, Field, Mesh
from ..errors import IncompatibleMesh


def xvec(u: np.ndarray, bc=None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    bc = np.zeros(2) if bc is None else np.asarray(bc, dtype=float)
    return np.concatenate([u[:, 0], u[:, 1], bc])


def xfield(f: Field) -> np.ndarray:
    return xvec(f.values, f.bc)


class FVOperators:
    """Sparse discrete operators for one FV mesh."""

    def __init__(self, mesh: Mesh, tau: float | None = None):
        if mesh.kind != FV_QUAD:
            raise IncompatibleMesh(f"FV operators need an {FV_QUAD} mesh, got {mesh.kind}")
        self.mesh = mesh
        n = self.n = mesh.n_cells
        nf = self.nf = len(mesh.owner)
        ni = self.ni = mesh.n_interior_faces
        self.V = mesh.volumes
        self.A = mesh.face_area
        self.N = mesh.face_normal
        own, nb = mesh.owner, mesh.neighbour
        btag = mesh.btags
        bo = own[ni:]
        fi = np.arange(nf)
        ii = np.arange(ni)
        bi = np.arange(ni, nf)

        d_int = np.linalg.norm(mesh.centers[nb] - mesh.centers[own[:ni]], axis=1)
        d_bnd = np.linalg.norm(mesh.face_center[ni:] - mesh.centers[bo], axis=1)
        w_own = np.linalg.norm(mesh.face_center[:ni] - mesh.centers[nb], axis=1) / d_int
        self.d_int, self.d_bnd = d_int, d_bnd

        # signed face-to-cell summation, per unit volume
        self.Dsum = sp.coo_matrix(
            (np.concatenate([1.0 / self.V[own], -1.0 / self.V[nb]]),
             (np.concatenate([own, nb]), np.concatenate([fi, ii]))),
            shape=(n, nf),
        ).tocsr()

        def interp(boundary_weight):
            rows = np.concatenate([ii, ii, bi])
            cols = np.concatenate([own[:ni], nb, bo])
            vals = np.concatenate([w_own, 1.0 - w_own, boundary_weight])
            return sp.coo_matrix((vals, (rows, cols)), shape=(nf, n)).tocsr()

        is_out = (btag == OUTLET).astype(float)
        is_in = (btag == INLET).astype(float)
        is_dir_u = np.isin(btag, (INLET, WALL)).astype(float)
        self.inlet_faces = np.concatenate([np.zeros(ni), is_in])

        # face values
        Fu1 = interp(is_out)  # one velocity component, cells only
        Z = sp.csr_matrix((nf, n))
        inl = sp.csr_matrix(self.inlet_faces[:, None])
        zc = sp.csr_matrix((nf, 1))
        self.FU = [sp.hstack([Fu1, Z, inl, zc], format="csr"), sp.hstack([Z, Fu1, zc, inl], format="csr")]
        self.Fp = interp(1.0 - is_out)
        self.Feta = interp(np.ones(nf - ni))
        # plain averaging (not distance weighted) for face gradients
        self.Favg = sp.coo_matrix(
            (np.concatenate([np.full(ni, 0.5), np.full(ni, 0.5), np.ones(nf - ni)]),
             (np.concatenate([ii, ii, bi]), np.concatenate([own[:ni], nb, bo]))), shape=(nf, n)).tocsr()

        # compact normal gradients
        sn_rows = np.concatenate([ii, ii, bi])
        sn_cols = np.concatenate([nb, own[:ni], bo])
        snU = sp.coo_matrix(
            (np.concatenate([1.0 / d_int, -1.0 / d_int, -is_dir_u / d_bnd]), (sn_rows, sn_cols)), shape=(nf, n)
        ).tocsr()
        sn_in = sp.csr_matrix((self.inlet_faces / np.concatenate([np.ones(ni), d_bnd]))[:, None])
        Zn = sp.csr_matrix((nf, n))
        self.SNU = [sp.hstack([snU, Zn, sn_in, zc], format="csr"), sp.hstack([Zn, snU, zc, sn_in], format="csr")]
        self.SNp = sp.coo_matrix(
            (np.concatenate([1.0 / d_int, -1.0 / d_int, -is_out / d_bnd]), (sn_rows, sn_cols)), shape=(nf, n)
        ).tocsr()

        DA = self.Dsum @ sp.diags(self.A)
        self.DA = DA.tocsr()
        DAn = [(self.Dsum @ sp.diags(self.A * self.N[:, d])).tocsr() for d in range(2)]
        self.DAn = DAn

        # linear operators on X (2n + 2 columns)
        self.LAP = sp.vstack([DA @ self.SNU[0], DA @ self.SNU[1]], format="csr")
        # GRAD[c][d] = d/dx_d of component c, maps X -> cells
        self.GRAD = [[(DAn[d] @ self.FU[c]).tocsr() for d in range(2)] for c in range(2)]
        self.DIV = (DAn[0] @ self.FU[0] + DAn[1] @ self.FU[1]).tocsr()
        self.GRADP = [(DAn[d] @ self.Fp).tocsr() for d in range(2)]
        # face gradients of velocity: GF[c][d] maps X -> faces
        self.GF = [[(self.Favg @ self.GRAD[c][d]).tocsr() for d in range(2)] for c in range(2)]
        # momentum-interpolation smoothing: interior faces only
        mask = sp.diags(np.concatenate([np.ones(ni), np.zeros(nf - ni)]))
        avg_gp_n = sum(sp.diags(self.N[:, d]) @ self.Favg @ self.GRADP[d] for d in range(2))
        self.RC = (self.DA @ mask @ (self.SNp - avg_gp_n)).tocsr()
        self.tau = float(tau) if tau is not None else default_tau(mesh)
        self._divgt_one = self.divgradT_matrix(np.ones(n))

    # ---- evaluation helpers -------------------------------------------------
    @property
    def nx(self) -> int:
        return 2 * self.n + 2

    def face_velocity(self, X: np.ndarray) -> np.ndarray:
        """Face velocities, shape (nf, 2[, m])."""
        return np.stack([self.FU[0] @ X, self.FU[1] @ X], axis=1)

    def flux(self, X: np.ndarray) -> np.ndarray:
        """Face volume fluxes ``A u_f . n``; works column-wise when X is 2-D."""
        an = (self.A[:, None] * self.N).T
        if X.ndim == 2:
            an = an[..., None]
        return an[0] * (self.FU[0] @ X) + an[1] * (self.FU[1] @ X)

    def convection(self, Xa: np.ndarray, Xb: np.ndarray | None = None) -> np.ndarray:
        """div(a (x) b): flux of ``a`` transporting ``b``; returns stacked (2n,)."""
        Xb = Xa if Xb is None else Xb
        phi = self.flux(Xa)
        return np.concatenate([self.Dsum @ (phi * (self.FU[c] @ Xb)) for c in range(2)])

    def convection_jacobian(self, X: np.ndarray) -> sp.csr_matrix:
        phi = self.flux(X)
        uf = [self.FU[c] @ X for c in range(2)]
        rows = []
        for c in range(2):
            J = self.Dsum @ sp.diags(phi) @ self.FU[c]
            for d in range(2):
                J = J + self.Dsum @ sp.diags(uf[c] * self.A * self.N[:, d]) @ self.FU[d]
            rows.append(J)
        return sp.vstack(rows, format="csr")

    def upwind_convection_matrix(self, phi: np.ndarray) -> sp.csr_matrix:
        """Block-diagonal upwind transport with frozen face fluxes, acting on X."""
        m = self.mesh
        ni, nf, n = self.ni, self.nf, self.n
        own, nb = m.owner, m.neighbour
        pos = phi >= 0.0
        donor = np.concatenate([np.where(pos[:ni], own[:ni], nb), own[ni:]])
        pick = sp.coo_matrix((np.ones(nf), (np.arange(nf), donor)), shape=(nf, n)).tocsr()
        # inflow boundary faces take the face-value map (inlet bc, wall zero)
        inflow_b = np.concatenate([np.zeros(ni, bool), ~pos[ni:]])
        keep = sp.diags((~inflow_b).astype(float))
        bmask = sp.diags(inflow_b.astype(float))
        blocks = []
        for c in range(2):
            cell_part = sp.hstack(
                [keep @ pick if c == 0 else sp.csr_matrix((nf, n)), keep @ pick if c == 1 else sp.csr_matrix((nf, n)),
                 sp.csr_matrix((nf, 2))], format="csr")
            face = cell_part + bmask @ self.FU[c]
            blocks.append(self.Dsum @ sp.diags(phi) @ face)
        return sp.vstack(blocks, format="csr")

    def laplacian(self, X: np.ndarray) -> np.ndarray:
        return self.LAP @ X

    def gradient(self, X: np.ndarray) -> np.ndarray:
        """Cell gradients, shape (n, 2, 2[, m]) indexed [cell, component, derivative]."""
        return np.stack([np.stack([self.GRAD[c][d] @ X for d in range(2)], axis=1) for c in range(2)], axis=1)

    def divergence(self, X: np.ndarray) -> np.ndarray:
        return self.DIV @ X

    def grad_p(self, p: np.ndarray) -> np.ndarray:
        return np.concatenate([self.GRADP[0] @ p, self.GRADP[1] @ p])

    def rc_smoothing(self, p: np.ndarray) -> np.ndarray:
        return self.RC @ p

    def eta_face(self, eta: np.ndarray) -> np.ndarray:
        return self.Feta @ eta

    def divgradT_matrix(self, eta: np.ndarray) -> sp.csr_matrix:
        """Matrix of ``u -> div(eta grad(u)^T)`` acting on X; component b sums n_a d_b u_a."""
        ef = self.Feta @ eta
        rows = []
        for b in range(2):
            M = None
            for a in range(2):
                term = self.Dsum @ sp.diags(ef * self.A * self.N[:, a]) @ self.GF[a][b]
                M = term if M is None else M + term
            rows.append(M)
        return sp.vstack(rows, format="csr")

    def divgradT(self, eta: np.ndarray | None, X: np.ndarray) -> np.ndarray:
        if eta is None:
            return self._divgt_one @ X
        return self.divgradT_matrix(eta) @ X

    def strain_rate_norm(self, X: np.ndarray) -> np.ndarray:
        """sqrt(2 S:S) per cell with S the symmetric part of the Gauss gradient."""
        g = self.gradient(X)
        s = 0.5 * (g + np.swapaxes(g, 1, 2))
        return np.sqrt(2.0 * np.einsum("ncd,ncd->n", s, s))

    def boundary_flux(self, X: np.ndarray) -> float:
        """Net outward volume flux through the boundary."""
        return float(np.sum(self.flux(X)[self.ni:]))

    def inlet_flux(self, X: np.ndarray) -> float:
        return float(np.sum(self.flux(X)[self.ni:][self.mesh.btags == INLET]))


def default_tau(mesh: Mesh, nu: float = 2e-2, u_ref: float = 0.25) -> float:
    """Momentum-interpolation coefficient ``h^2 / (4 nu + 2 u_ref h)`` on the mean cell size."""
    h2 = float(np.mean(mesh.volumes))
    return h2 / (4.0 * nu + 2.0 * u_ref * np.sqrt(h2))

"""POD-Galerkin reduced systems for the FV branch, with and without the RBF eddy-viscosity closure.

Velocity trial functions are ordered ``[L1, L2, phi..., sup...]``. The two
lifting coefficients are pinned to the inlet vector, so only the remaining
modes are unknowns and only they are used as test functions.

Every reduced operator is the exact L2 (cell-volume) pairing of the FOM
discrete operators applied to mode fields, so projecting a converged
snapshot gives a zero reduced residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Field, ParameterBox, inlet_vector
from .errors import DimensionMismatch, IncompatibleMesh, NewtonDiverged
from .fom_fv.operators import FVOperators, xvec
from .reduction import ReducedBasis
from .rom_fe import NewtonSettings, newton

N_LIFT = 2


@dataclass(eq=False)
class ReducedOperators:
    nu: float
    tau: float
    B: np.ndarray  # (Nt, Na)
    BT: np.ndarray  # (Nt, Na)
    C: np.ndarray  # (Nt, Na, Na)
    H: np.ndarray  # (Nt, Np)
    P: np.ndarray  # (Np, Na)
    S: np.ndarray  # (Np, Np) momentum-interpolation smoothing, scaled by tau
    CT1: np.ndarray  # (Nt, Nnut, Na)
    CT2: np.ndarray  # (Nt, Nnut, Na)
    n_phi: int  # POD velocity modes among the free modes
    n_sup: int  # supremizer modes after them
    box: ParameterBox | None = None
    train_mu: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    train_coeffs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    train_g: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def n_u(self) -> int:
        return self.B.shape[0]

    @property
    def n_p(self) -> int:
        return self.S.shape[0]

    @property
    def n_nut(self) -> int:
        return self.CT1.shape[1]

    def select(self, n_phi: int, n_sup: int, n_p: int, n_nut: int) -> "ReducedOperators":
        """Keep the leading modes of each family."""
        if n_phi > self.n_phi or n_sup > self.n_sup or n_p > self.n_p or n_nut > self.n_nut:
            raise DimensionMismatch("requested more modes than assembled")
        free = np.concatenate([np.arange(n_phi), self.n_phi + np.arange(n_sup)])
        tr = np.concatenate([np.arange(N_LIFT), N_LIFT + free])
        pi = np.arange(n_p)
        tc = self.train_coeffs
        if tc.size:
            tc = np.hstack([tc[:, free], tc[:, self.n_u + pi]])
        tg = self.train_g[:, :n_nut] if self.train_g.size else self.train_g
        ix = np.ix_
        return replace(
            self, B=self.B[ix(free, tr)], BT=self.BT[ix(free, tr)], C=self.C[ix(free, tr, tr)],
            H=self.H[ix(free, pi)], P=self.P[ix(pi, tr)], S=self.S[ix(pi, pi)],
            CT1=self.CT1[ix(free, np.arange(n_nut), tr)], CT2=self.CT2[ix(free, np.arange(n_nut), tr)],
            n_phi=n_phi, n_sup=n_sup, train_coeffs=tc, train_g=tg,
        )

    def without_convection(self) -> "ReducedOperators":
        return replace(self, C=np.zeros_like(self.C))

    # ---- residuals -------------------------------------------------------
    def _x(self, y, mu):
        return np.concatenate([inlet_vector(mu), y[: self.n_u]]), y[self.n_u:]

    def residual_plain(self, y, mu, nu: float | None = None) -> np.ndarray:
        nu = self.nu if nu is None else nu
        x, b = self._x(y, mu)
        rm = nu * (self.B @ x) - np.einsum("ijk,j,k->i", self.C, x, x) - self.H @ b
        return np.concatenate([rm, self.P @ x - self.S @ b])

    def jacobian_plain(self, y, mu, nu: float | None = None) -> np.ndarray:
        nu = self.nu if nu is None else nu
        x, _ = self._x(y, mu)
        dx = nu * self.B - np.einsum("ijk,k->ij", self.C, x) - np.einsum("ikj,k->ij", self.C, x)
        return np.block([[dx[:, N_LIFT:], -self.H], [self.P[:, N_LIFT:], -self.S]])

    def _eddy(self, g):
        g = np.asarray(g, dtype=float)
        if g.size != self.n_nut:
            raise DimensionMismatch(f"expected {self.n_nut} viscosity coefficients, got {g.size}")
        return np.einsum("j,ijk->ik", g, self.CT1 + self.CT2)

    def residual_rbf(self, y, mu, g, include_bt: bool = True, scale: float = 1.0) -> np.ndarray:
        x, b = self._x(y, mu)
        lin = scale * (self.nu * (self.B + self.BT if include_bt else self.B) + self._eddy(g))
        rm = lin @ x - np.einsum("ijk,j,k->i", self.C, x, x) - self.H @ b
        return np.concatenate([rm, self.P @ x - self.S @ b])

    def jacobian_rbf(self, y, mu, g, include_bt: bool = True, scale: float = 1.0) -> np.ndarray:
        x, _ = self._x(y, mu)
        lin = scale * (self.nu * (self.B + self.BT if include_bt else self.B) + self._eddy(g))
        dx = lin - np.einsum("ijk,k->ij", self.C, x) - np.einsum("ikj,k->ij", self.C, x)
        return np.block([[dx[:, N_LIFT:], -self.H], [self.P[:, N_LIFT:], -self.S]])

    def initial_guess(self, mu) -> np.ndarray:
        if self.train_coeffs.size == 0:
            return np.zeros(self.n_u + self.n_p)
        mu = np.asarray(mu, dtype=float)
        t = self.train_mu
        if self.box is not None:
            t, mu = self.box.normalize(t), self.box.normalize(mu)
        return self.train_coeffs[int(np.argmin(np.linalg.norm(t - mu[None], axis=1)))].copy()


@dataclass
class FVRomSolution:
    a: np.ndarray  # free velocity coefficients
    b: np.ndarray
    lift: np.ndarray  # pinned lifting coefficients
    iterations: int
    residuals: list[float]
    seconds: float
    g: np.ndarray | None = None

    @property
    def velocity_coefficients(self) -> np.ndarray:
        return np.concatenate([self.lift, self.a])


CONTINUATION_START = 50.0
CONTINUATION_STEPS = 30


def _solve(residual, jacobian, y0, settings: NewtonSettings, continuation: bool):
    """Newton from ``y0``; on failure, optionally retry by continuation in the viscous scale.

    ``residual(y, s)`` multiplies every viscous term by ``s``; the homotopy
    walks ``s`` from a strongly diffusive value down to 1.
    """
    try:
        return newton(lambda v: residual(v, 1.0), lambda v: jacobian(v, 1.0), y0, settings)
    except NewtonDiverged as exc:
        if not continuation:
            raise
        first = exc.context.get("residuals", [])
    y, total, trace = np.array(y0, dtype=float), 0, list(first)
    for s in np.geomspace(CONTINUATION_START, 1.0, CONTINUATION_STEPS):
        try:
            y, it, tr = newton(lambda v: residual(v, s), lambda v: jacobian(v, s), y, settings)
        except NewtonDiverged as exc:
            raise NewtonDiverged(f"viscous continuation failed at scale {s:.3g}",
                                 residuals=trace + exc.context.get("residuals", [])) from exc
        total += it
        trace.extend(tr)
    return y, total, trace


def solve_rom_plain(ops: ReducedOperators, mu, init=None, settings: NewtonSettings = NewtonSettings(),
                    continuation: bool = True) -> FVRomSolution:
    t0 = time.perf_counter()
    y0 = ops.initial_guess(mu) if init is None else np.asarray(init, dtype=float)
    y, it, trace = _solve(lambda v, s: ops.residual_plain(v, mu, s * ops.nu),
                          lambda v, s: ops.jacobian_plain(v, mu, s * ops.nu), y0, settings, continuation)
    return FVRomSolution(y[: ops.n_u], y[ops.n_u:], inlet_vector(mu), it, trace, time.perf_counter() - t0)


def solve_rom_rbf(ops: ReducedOperators, mu, g, init=None, settings: NewtonSettings = NewtonSettings(),
                  include_bt: bool = True, continuation: bool = True) -> FVRomSolution:
    t0 = time.perf_counter()
    g = np.asarray(g, dtype=float)
    y0 = ops.initial_guess(mu) if init is None else np.asarray(init, dtype=float)
    y, it, trace = _solve(lambda v, s: ops.residual_rbf(v, mu, g, include_bt, s),
                          lambda v, s: ops.jacobian_rbf(v, mu, g, include_bt, s), y0, settings, continuation)
    return FVRomSolution(y[: ops.n_u], y[ops.n_u:], inlet_vector(mu), it, trace, time.perf_counter() - t0, g)


def velocity_matrix(liftings: list[Field], velocity: ReducedBasis, supremizers: ReducedBasis | None) -> np.ndarray:
    """Extended trial matrix (2n + 2, Na): liftings carry unit inlet vectors, modes carry zero."""
    cols = [xvec(L.values, L.bc_or_zero()) for L in liftings]
    for basis in (velocity, supremizers):
        if basis is not None and basis.count:
            M = basis.modes
            cols.extend(np.concatenate([M[:, k], [0.0, 0.0]]) for k in range(basis.count))
    return np.column_stack(cols)


def assemble_reduced(ops: FVOperators, liftings: list[Field], velocity: ReducedBasis, pressure: ReducedBasis,
                     supremizers: ReducedBasis | None, viscosity: ReducedBasis | None, nu: float,
                     box: ParameterBox | None = None) -> ReducedOperators:
    """Pair the FOM discrete operators applied to mode fields against the test modes."""
    fp = ops.mesh.fingerprint()
    for b in (velocity, pressure, supremizers, viscosity):
        if b is not None and b.mesh is not ops.mesh and b.mesh.fingerprint() != fp:
            raise IncompatibleMesh("mode families and operators live on different meshes")
    if len(liftings) != N_LIFT:
        raise DimensionMismatch("exactly two lifting fields are required")
    n, V = ops.n, ops.V
    Psi = velocity_matrix(liftings, velocity, supremizers)  # (2n+2, Na)
    test = Psi[: 2 * n, N_LIFT:]  # free modes, cell values
    TW = np.vstack([V[:, None] * test[:n], V[:, None] * test[n:]])  # (2n, Nt)
    chi = pressure.modes  # (n, Np)
    Vchi = V[:, None] * chi

    B = TW.T @ (ops.LAP @ Psi)
    BT = TW.T @ (ops._divgt_one @ Psi)
    H = TW.T @ np.vstack([ops.GRADP[0] @ chi, ops.GRADP[1] @ chi])
    P = Vchi.T @ (ops.DIV @ Psi)
    S = ops.tau * (Vchi.T @ (ops.RC @ chi))

    # face-level pieces
    Wf = [ops.Dsum.T @ TW[c * n:(c + 1) * n] for c in range(2)]  # (nf, Nt)
    uf = [ops.FU[c] @ Psi for c in range(2)]  # (nf, Na)
    phi = ops.A[:, None] * (ops.N[:, 0:1] * uf[0] + ops.N[:, 1:2] * uf[1])
    C = sum(np.einsum("fi,fj,fk->ijk", Wf[c], phi, uf[c], optimize=True) for c in range(2))

    if viscosity is not None and viscosity.count:
        eta = viscosity.modes  # (n, Nnut)
        etaf = ops.Feta @ eta
        lap = ops.LAP @ Psi
        CT1 = sum(np.einsum("pi,pj,pk->ijk", TW[c * n:(c + 1) * n], eta, lap[c * n:(c + 1) * n], optimize=True)
                  for c in range(2))
        CT2 = np.zeros_like(CT1)
        for b in range(2):
            Tb = ops.A[:, None] * sum(ops.N[:, a:a + 1] * (ops.GF[a][b] @ Psi) for a in range(2))
            CT2 += np.einsum("fi,fj,fk->ijk", Wf[b], etaf, Tb, optimize=True)
    else:
        CT1 = np.zeros((TW.shape[1], 0, Psi.shape[1]))
        CT2 = CT1.copy()
    return ReducedOperators(nu, ops.tau, B, BT, C, H, P, S, CT1, CT2, velocity.count,
                            0 if supremizers is None else supremizers.count, box)


def reconstruct_fv(liftings: list[Field], velocity: ReducedBasis, supremizers: ReducedBasis | None,
                   pressure: ReducedBasis, sol: FVRomSolution, n_phi: int | None = None) -> tuple[Field, Field]:
    """Full fields from free coefficients ordered ``[phi (n_phi), sup (rest)]``."""
    n_phi = velocity.count if n_phi is None else n_phi
    a = sol.a
    flat = velocity.modes[:, :n_phi] @ a[:n_phi]
    n_sup = a.size - n_phi
    if n_sup:
        flat = flat + supremizers.modes[:, :n_sup] @ a[n_phi:]
    u = Field.from_flat(velocity.mesh, flat, 2)
    g = sol.lift
    u = Field(u.mesh, u.values + g[0] * liftings[0].values + g[1] * liftings[1].values, g.copy())
    return u, Field(pressure.mesh, pressure.modes[:, : sol.b.size] @ sol.b)

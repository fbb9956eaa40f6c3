"""Stabilized reduced-basis system for the FE cavity and its online Newton solve.

Trial velocities are expanded as ``u = x_0 L + sum_j x_j phi_j`` with the
lifting ``L`` in slot 0 and ``x_0 = 1`` pinned, so reduced tensors carry the
lifting contributions without separate bookkeeping. Test functions are the
homogeneous modes only.

With ``w = u`` at convergence the stabilization adds terms up to cubic order
in ``x``; they are stored exactly as tensors (P1 Laplacians vanish element-wise)
so the online residual is a polynomial in the coefficients.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import L2, Field, inner_product
from .core.p1 import QP_BARY
from .errors import DimensionMismatch, InvalidBasis, InvalidConfig, NewtonDiverged, SingularJacobian
from .fom_fe import FEDiscretization, StabilizationConfig, viscosity
from .reduction import ReducedBasis

log = logging.getLogger(__name__)

OFFLINE_ONLINE, OFFLINE_ONLY = "offline-online", "offline-only"


@dataclass(frozen=True)
class RBOptions:
    stabilization: str = OFFLINE_ONLINE
    supremizer: bool = True

    def __post_init__(self):
        if self.stabilization not in (OFFLINE_ONLINE, OFFLINE_ONLY):
            raise InvalidConfig(f"unknown stabilization mode {self.stabilization!r}")

    @property
    def name(self) -> str:
        return self.stabilization + ("+sup" if self.supremizer else "")

    @classmethod
    def from_name(cls, name: str) -> "RBOptions":
        base, sup = (name[:-4], True) if name.endswith("+sup") else (name, False)
        return cls(base, sup)


VARIANTS = tuple(RBOptions(s, b).name for s in (OFFLINE_ONLINE, OFFLINE_ONLY) for b in (True, False))


@dataclass(frozen=True)
class NewtonSettings:
    tol: float = 1e-10
    max_iter: int = 100


@dataclass(eq=False)
class RBSystemFE:
    """Reduced tensors; index 0 of every trial axis is the lifting."""

    A: np.ndarray  # (Nu, Na) diffusion, scaled by nu online
    C: np.ndarray  # (Nu, Na, Na)
    Bt: np.ndarray  # (Nu, Np)
    S4: np.ndarray  # (Nu, Na, Na, Na)
    S3: np.ndarray  # (Nu, Np, Na)
    D: np.ndarray  # (Np, Na)
    E: np.ndarray  # (Np, Na, Na)
    G: np.ndarray  # (Np, Np)
    options: RBOptions
    velocity: ReducedBasis | None = None
    pressure: ReducedBasis | None = None
    lifting: Field | None = None
    train_mu: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    train_coeffs: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    u_counts: list[int] = field(default_factory=list)  # velocity modes per greedy step

    @property
    def n_u(self) -> int:
        return self.A.shape[0]

    @property
    def n_p(self) -> int:
        return self.G.shape[0]

    def truncated(self, n_u: int, n_p: int) -> "RBSystemFE":
        if n_u > self.n_u or n_p > self.n_p:
            raise DimensionMismatch(f"requested ({n_u}, {n_p}) modes, system has ({self.n_u}, {self.n_p})")
        a = n_u + 1
        tc = self.train_coeffs
        if tc.size:
            tc = np.hstack([tc[:, :n_u], tc[:, self.n_u:self.n_u + n_p]])
        return replace(
            self,
            A=self.A[:n_u, :a], C=self.C[:n_u, :a, :a], Bt=self.Bt[:n_u, :n_p], S4=self.S4[:n_u, :a, :a, :a],
            S3=self.S3[:n_u, :n_p, :a], D=self.D[:n_p, :a], E=self.E[:n_p, :a, :a], G=self.G[:n_p, :n_p],
            velocity=None if self.velocity is None else self.velocity.truncated(n_u),
            pressure=None if self.pressure is None else self.pressure.truncated(n_p),
            train_coeffs=tc, u_counts=[c for c in self.u_counts if c <= n_u],
        )

    def for_samples(self, n: int) -> "RBSystemFE":
        """Truncate to the modes contributed by the first ``n`` greedy samples."""
        if not self.u_counts:
            return self.truncated(min(n, self.n_u), min(n, self.n_p))
        return self.truncated(self.u_counts[n - 1], n)

    def stokes_limit(self) -> "RBSystemFE":
        """Copy with every velocity-dependent tensor zeroed; the system becomes linear."""
        z = np.zeros_like
        return replace(self, C=z(self.C), S4=z(self.S4), S3=z(self.S3), E=z(self.E))

    def offline_only(self) -> "RBSystemFE":
        z = np.zeros_like
        return replace(self, S4=z(self.S4), S3=z(self.S3), E=z(self.E), G=z(self.G),
                       options=RBOptions(OFFLINE_ONLY, self.options.supremizer))

    # ---- residual and Jacobian ------------------------------------------
    def residual(self, y: np.ndarray, mu) -> np.ndarray:
        nu = viscosity(mu)
        nu_, np_ = self.n_u, self.n_p
        a, b = y[:nu_], y[nu_:nu_ + np_]
        x = np.concatenate([[1.0], a])
        Cx = np.einsum("ijk,k->ij", self.C, x)
        S4x = np.einsum("ijkl,l->ijk", self.S4, x)
        rm = nu * (self.A @ x) + Cx @ x + self.Bt @ b + np.einsum("ijk,j,k->i", S4x, x, x) \
            + np.einsum("iml,m,l->i", self.S3, b, x)
        rp = self.D @ x + np.einsum("ijk,j,k->i", self.E, x, x) + self.G @ b
        return np.concatenate([rm, rp])

    def jacobian(self, y: np.ndarray, mu) -> np.ndarray:
        nu = viscosity(mu)
        nu_, np_ = self.n_u, self.n_p
        a, b = y[:nu_], y[nu_:nu_ + np_]
        x = np.concatenate([[1.0], a])
        dx = (
            nu * self.A
            + np.einsum("ijk,k->ij", self.C, x)
            + np.einsum("ikj,k->ij", self.C, x)
            + np.einsum("ijkl,k,l->ij", self.S4, x, x)
            + np.einsum("ikjl,k,l->ij", self.S4, x, x)
            + np.einsum("iklj,k,l->ij", self.S4, x, x)
            + np.einsum("imj,m->ij", self.S3, b)
        )
        db = self.Bt + np.einsum("iml,l->im", self.S3, x)
        px = self.D + np.einsum("ijk,k->ij", self.E, x) + np.einsum("ikj,k->ij", self.E, x)
        top = np.hstack([dx[:, 1:], db])
        bot = np.hstack([px[:, 1:], self.G])
        return np.vstack([top, bot])

    def initial_guess(self, mu) -> np.ndarray:
        if self.train_coeffs.size == 0:
            return np.zeros(self.n_u + self.n_p)
        d = np.linalg.norm(self.train_mu - np.atleast_1d(mu)[None, : self.train_mu.shape[1]], axis=1)
        return self.train_coeffs[int(np.argmin(d))].copy()


@dataclass
class RBSolution:
    a: np.ndarray
    b: np.ndarray
    iterations: int
    residuals: list[float]
    seconds: float


def newton(residual, jacobian, y0: np.ndarray, settings: NewtonSettings) -> tuple[np.ndarray, int, list[float]]:
    """Newton with backtracking on the residual 2-norm; convergence on the infinity norm."""
    y = np.array(y0, dtype=float)
    r = residual(y)
    trace = [float(np.max(np.abs(r))) if r.size else 0.0]
    it = 0
    while trace[-1] > settings.tol:
        if it >= settings.max_iter or not np.isfinite(trace[-1]):
            raise NewtonDiverged(f"reduced Newton did not converge: residual {trace[-1]:.3e} after {it} iterations",
                                 residuals=trace)
        J = jacobian(y)
        try:
            with np.errstate(all="raise"):
                dy = np.linalg.solve(J, -r)
        except (np.linalg.LinAlgError, FloatingPointError) as exc:
            raise SingularJacobian(f"reduced Jacobian is singular: {exc}", residuals=trace) from exc
        if not np.all(np.isfinite(dy)) or np.linalg.cond(J) > 1e15:
            raise SingularJacobian("reduced Jacobian is numerically singular", residuals=trace)
        step, n0 = 1.0, np.linalg.norm(r)
        while True:
            yn = y + step * dy
            rn = residual(yn)
            if np.linalg.norm(rn) < (1 - 1e-4 * step) * n0 or step < 1e-4:
                break
            step *= 0.5
        y, r = yn, rn
        it += 1
        trace.append(float(np.max(np.abs(r))))
    return y, it, trace


def solve_rb_fe(system: RBSystemFE, mu, n_use: int | None = None, settings: NewtonSettings = NewtonSettings(),
                initial: np.ndarray | None = None) -> RBSolution:
    """Online solve; ``n_use`` counts greedy samples (nested truncation)."""
    t0 = time.perf_counter()
    sys_ = system if n_use is None else system.for_samples(n_use)
    y0 = sys_.initial_guess(mu) if initial is None else np.asarray(initial, dtype=float)
    if y0.size != sys_.n_u + sys_.n_p:
        raise DimensionMismatch(f"initial guess has {y0.size} entries, expected {sys_.n_u + sys_.n_p}")
    y, it, trace = newton(lambda v: sys_.residual(v, mu), lambda v: sys_.jacobian(v, mu), y0, settings)
    return RBSolution(y[: sys_.n_u], y[sys_.n_u:], it, trace, time.perf_counter() - t0)


def reconstruct(velocity: ReducedBasis, pressure: ReducedBasis, a, b, lifting: Field | None = None) -> tuple[Field, Field]:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size > velocity.count or b.size > pressure.count:
        raise DimensionMismatch("more coefficients than modes")
    uf = velocity.modes[:, : a.size] @ a
    u = Field.from_flat(velocity.mesh, uf, 2)
    if lifting is not None:
        u = Field(velocity.mesh, u.values + lifting.values)
    return u, Field(pressure.mesh, pressure.modes[:, : b.size] @ b)


def _check_orthonormal(basis: ReducedBasis, tol: float = 1e-8):
    G = inner_product(basis.mesh, L2, basis.arity).gram(basis.modes)
    dev = np.max(np.abs(G - np.eye(basis.count))) if basis.count else 0.0
    if dev > tol:
        raise InvalidBasis(f"{basis.family} basis is not L2-orthonormal (Gram deviation {dev:.2e})")


def project_fe(disc: FEDiscretization, velocity: ReducedBasis, pressure: ReducedBasis, lifting: Field,
               options: RBOptions = RBOptions(), stab: StabilizationConfig = StabilizationConfig()) -> RBSystemFE:
    """Galerkin projection of the stabilized FE system onto the reduced spaces."""
    _check_orthonormal(velocity)
    _check_orthonormal(pressure)
    if velocity.mesh.fingerprint() != disc.mesh.fingerprint() or pressure.mesh.fingerprint() != disc.mesh.fingerprint():
        raise DimensionMismatch("bases and discretization live on different meshes")
    el, n = disc.el, disc.n
    phi = velocity.modes.reshape(2, n, -1).transpose(1, 0, 2)  # (n, 2, Nu)
    lift = lifting.values[:, :, None]
    psi = np.concatenate([lift, phi], axis=2)  # (n, 2, Na)
    chi = pressure.modes  # (n, Np)

    qw = el.qw  # (E, 3)
    tau = stab.delta * el.h**2
    # values at quadrature points and element gradients
    psi_q = np.einsum("qa,eacj->eqcj", QP_BARY, psi[el.conn])  # (E, 3, 2, Na)
    psi_g = np.einsum("eacj,ead->ecdj", psi[el.conn], el.grad)  # (E, 2, 2, Na) [comp, deriv]
    chi_q = np.einsum("qa,eam->eqm", QP_BARY, chi[el.conn])  # (E, 3, Np)
    chi_g = np.einsum("eam,ead->edm", chi[el.conn], el.grad)  # (E, 2, Np)
    phi_q, phi_g = psi_q[..., 1:], psi_g[..., 1:]

    A = np.einsum("e,ecdi,ecdj->ij", el.area, phi_g, psi_g)
    adv = np.einsum("eqdj,ecdk->eqcjk", psi_q, psi_g)  # (psi_j . grad) psi_k
    C = np.einsum("eq,eqci,eqcjk->ijk", qw, phi_q, adv)
    div_phi = phi_g[:, 0, 0] + phi_g[:, 1, 1]  # (E, Nu)
    div_psi = psi_g[:, 0, 0] + psi_g[:, 1, 1]
    Bt = -np.einsum("eq,eqm,ei->im", qw, chi_q, div_phi)
    D = -np.einsum("eq,eqi,ej->ij", qw, chi_q, div_psi)
    nu_, na, np_ = phi.shape[2], psi.shape[2], chi.shape[1]
    if options.stabilization == OFFLINE_ONLINE:
        tw = tau[:, None] * qw  # (E, 3)
        tadv = np.einsum("eqdl,ecdi->eqcli", psi_q, phi_g)  # (psi_l . grad) phi_i
        S4 = np.einsum("eq,eqcjk,eqcli->ijkl", tw, adv, tadv, optimize=True)
        S3 = np.einsum("eq,ecm,eqcli->iml", tw, chi_g, tadv, optimize=True)
        E = -np.einsum("eq,eqcjk,eci->ijk", tw, adv, chi_g, optimize=True)
        G = -np.einsum("e,eci,ecm->im", tau * el.area, chi_g, chi_g)
    else:
        S4 = np.zeros((nu_, na, na, na))
        S3 = np.zeros((nu_, np_, na))
        E = np.zeros((np_, na, na))
        G = np.zeros((np_, np_))
    return RBSystemFE(A, C, Bt, S4, S3, D, E, G, options, velocity, pressure, lifting)


def inf_sup_constant(system: RBSystemFE) -> float:
    """Smallest singular value of the reduced pressure-divergence coupling."""
    if system.n_p == 0 or system.n_u == 0:
        return 0.0
    s = np.linalg.svd(system.Bt, compute_uv=False)
    return float(s[-1]) if system.n_u >= system.n_p else 0.0


def training_coefficients(velocity: ReducedBasis, pressure: ReducedBasis, u_hom: list[Field], p: list[Field]) -> np.ndarray:
    """L2 projections of homogenized snapshots, one row per snapshot."""
    Wu = inner_product(velocity.mesh, L2, 2).weight
    Wp = inner_product(pressure.mesh, L2, 1).weight
    a = np.array([velocity.modes.T @ (Wu @ f.flat()) for f in u_hom])
    b = np.array([pressure.modes.T @ (Wp @ f.flat()) for f in p])
    return np.hstack([a.reshape(len(u_hom), -1), b.reshape(len(p), -1)])

"""Stabilized P1/P1 finite elements for the steady lid-driven cavity.

Unknown layout of the global system: ``[u_x (n), u_y (n), p (n), lambda (1)]``,
``lambda`` being the multiplier that pins the pressure mean to zero. Residual
based stabilization is added element-wise with ``tau_K = delta * h_K^2``. For
P1 fields the Laplacian of the discrete solution and of the test functions
vanishes inside each element, so only the convective and pressure-gradient
parts of the strong residual survive; ``gamma`` therefore never enters the
P1 system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import FE_TRI, INLET, WALL, Field, Mesh
from .core.p1 import QP_BARY, P1Elements, p1_elements
from .errors import FOMDiverged, IncompatibleMesh, InvalidStabilization, SolverFailure

log = logging.getLogger(__name__)

SUPG, GLS, DW = 0, 1, -1

BodyForce = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class StabilizationConfig:
    gamma: int = SUPG
    delta: float = 1.0
    c_max: float = 10.0

    def __post_init__(self):
        if self.gamma not in (SUPG, GLS, DW):
            raise InvalidStabilization(f"gamma must be one of 0, 1, -1; got {self.gamma}")
        if not (0.0 < self.delta <= self.c_max):
            raise InvalidStabilization(f"delta must lie in (0, {self.c_max}], got {self.delta}")


@dataclass(frozen=True)
class FESolverConfig:
    picard_tol: float = 1e-9
    picard_max: int = 200
    relax: float = 1.0


def viscosity(mu) -> float:
    """Reynolds number to kinematic viscosity for unit lid speed and unit cavity side."""
    return 1.0 / float(np.atleast_1d(mu)[0])


@dataclass(eq=False)
class FEOperatorSet:
    """Assembled blocks of the linearized stabilized system.

    Momentum rows are tested with vector P1 functions, continuity rows with
    scalar P1 functions. Signs follow the residual form
    ``a + c + b(v, p) + tau (R, w.grad v) = (f, v)`` and
    ``-(div u, q) - tau (R, grad q) + lambda (1, q) = -tau (f, grad q)``.
    """

    mesh: Mesh
    nu: float
    diffusion: sp.csr_matrix  # (2n, 2n)
    convection: sp.csr_matrix  # (2n, 2n)
    pressure_grad: sp.csr_matrix  # (2n, n)   -(p, div v)
    divergence: sp.csr_matrix  # (n, 2n)     -(div u, q)
    stab_uu: sp.csr_matrix
    stab_up: sp.csr_matrix
    stab_pu: sp.csr_matrix
    stab_pp: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    mean_row: np.ndarray  # (n,) integrals of the nodal basis
    dirichlet_dofs: np.ndarray
    dirichlet_values: np.ndarray

    @property
    def n(self) -> int:
        return self.mesh.n_nodes

    def stabilization_blocks(self):
        return self.stab_uu, self.stab_up, self.stab_pu, self.stab_pp

    def matrix(self, dirichlet: bool = True) -> sp.csr_matrix:
        n = self.n
        m = self.mean_row[:, None]
        A = sp.bmat(
            [
                [self.diffusion + self.convection + self.stab_uu, self.pressure_grad + self.stab_up, None],
                [self.divergence + self.stab_pu, self.stab_pp, sp.csr_matrix(m)],
                [None, sp.csr_matrix(m.T), sp.csr_matrix((1, 1))],
            ],
            format="csr",
        )
        if dirichlet:
            keep = np.ones(3 * n + 1)
            keep[self.dirichlet_dofs] = 0.0
            pin = np.zeros(3 * n + 1)
            pin[self.dirichlet_dofs] = 1.0
            A = (sp.diags(keep) @ A + sp.diags(pin)).tocsr()
        return A

    def rhs(self, dirichlet: bool = True) -> np.ndarray:
        b = np.concatenate([self.rhs_u, self.rhs_p, [0.0]])
        if dirichlet:
            b[self.dirichlet_dofs] = self.dirichlet_values
        return b


class FEDiscretization:
    """Mesh-level data reused by every assembly on one cavity mesh."""

    def __init__(self, mesh: Mesh):
        if mesh.kind != FE_TRI:
            raise IncompatibleMesh(f"FE solver needs an {FE_TRI} mesh, got {mesh.kind}")
        self.mesh = mesh
        self.el: P1Elements = p1_elements(mesh)
        n = mesh.n_nodes
        self.n = n
        self.mean_row = self.el.scatter_vec(self.el.qw @ QP_BARY)
        self.boundary = mesh.boundary_nodes()
        wall = mesh.boundary_nodes(WALL)
        self.lid = np.setdiff1d(mesh.boundary_nodes(INLET), wall)
        self.dirichlet_dofs = np.concatenate([self.boundary, self.boundary + n])
        self.free_velocity = np.setdiff1d(np.arange(2 * n), self.dirichlet_dofs)

    def lid_values(self, lid: float = 1.0) -> np.ndarray:
        """Dirichlet values (u_x block then u_y block): lid speed on the top edge, zero elsewhere.

        Top corners belong to the walls as well and get zero.
        """
        n = self.n
        vals = np.zeros(2 * n)
        vals[self.lid] = lid
        return vals[self.dirichlet_dofs]

    def values_from(self, func) -> np.ndarray:
        xy = self.mesh.nodes[self.boundary]
        uv = np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float)
        return np.concatenate([uv[0], uv[1]])

    def qp_coords(self) -> tuple[np.ndarray, np.ndarray]:
        xy = self.el.at_qp(self.mesh.nodes)
        return xy[..., 0], xy[..., 1]


def assemble_fe(
    mesh: Mesh | FEDiscretization,
    mu,
    stab: StabilizationConfig,
    linearization_state: Field | np.ndarray | None,
    body_force: BodyForce | None = None,
    dirichlet_values: np.ndarray | None = None,
    nu: float | None = None,
    convection: bool = True,
) -> FEOperatorSet:
    """Assemble the Oseen-linearized stabilized system around a velocity state."""
    disc = mesh if isinstance(mesh, FEDiscretization) else FEDiscretization(mesh)
    if not isinstance(stab, StabilizationConfig):
        raise InvalidStabilization("stab must be a StabilizationConfig")
    el, n = disc.el, disc.n
    nu = viscosity(mu) if nu is None else nu
    if linearization_state is None:
        w = np.zeros((n, 2))
    else:
        w = linearization_state.values if isinstance(linearization_state, Field) else np.asarray(linearization_state)
        if isinstance(linearization_state, Field) and linearization_state.mesh is not disc.mesh:
            if linearization_state.mesh.fingerprint() != disc.mesh.fingerprint():
                raise IncompatibleMesh("linearization state lives on another mesh")
    if not convection:
        w = np.zeros((n, 2))

    G, area, qw = el.grad, el.area, el.qw
    tau = stab.delta * el.h**2
    wq = el.at_qp(w)  # (E, 3, 2)
    adv = np.einsum("eqd,ead->eqa", wq, G)  # w.grad(phi_a) at qp

    K = area[:, None, None] * np.einsum("ead,ebd->eab", G, G)
    Nloc = np.einsum("eq,qa,eqb->eab", qw, QP_BARY, adv)
    Sloc = tau[:, None, None] * np.einsum("eq,eqa,eqb->eab", qw, adv, adv)
    stiff = el.scatter(K)
    conv1 = el.scatter(Nloc)
    supg = el.scatter(Sloc)

    diffusion = sp.block_diag([nu * stiff, nu * stiff], format="csr")
    convection_m = sp.block_diag([conv1, conv1], format="csr")
    stab_uu = sp.block_diag([supg, supg], format="csr")

    grad_cols, sup_cols, div_rows, sdiv_rows = [], [], [], []
    for c in range(2):
        # -(p, d_c v_a): test a, trial b
        Pc = -(area / 3.0)[:, None, None] * np.repeat(G[:, :, c][:, :, None], 3, axis=2)
        grad_cols.append(el.scatter(Pc))
        SPc = tau[:, None, None] * np.einsum("eq,eqa,eb->eab", qw, adv, G[:, :, c])
        sup_cols.append(el.scatter(SPc))
        # -(d_c u_b, q_a)
        Dc = -(area / 3.0)[:, None, None] * np.repeat(G[:, None, :, c], 3, axis=1)
        div_rows.append(el.scatter(Dc))
        SDc = -tau[:, None, None] * np.einsum("eq,eqb,ea->eab", qw, adv, G[:, :, c])
        sdiv_rows.append(el.scatter(SDc))
    pressure_grad = sp.vstack(grad_cols, format="csr")
    stab_up = sp.vstack(sup_cols, format="csr")
    divergence = sp.hstack(div_rows, format="csr")
    stab_pu = sp.hstack(sdiv_rows, format="csr")
    stab_pp = el.scatter(-tau[:, None, None] * K)

    rhs_u = np.zeros(2 * n)
    rhs_p = np.zeros(n)
    if body_force is not None:
        x, y = disc.qp_coords()
        f = np.asarray(body_force(x, y), dtype=float)  # (2, E, 3)
        for c in range(2):
            loc = np.einsum("eq,qa,eq->ea", qw, QP_BARY, f[c]) + tau[:, None] * np.einsum("eq,eq,eqa->ea", qw, f[c], adv)
            rhs_u[c * n : (c + 1) * n] = el.scatter_vec(loc)
        loc = -tau[:, None] * np.einsum("eq,ceq,eac->ea", qw, f, G)
        rhs_p = el.scatter_vec(loc)

    if dirichlet_values is None:
        dirichlet_values = disc.lid_values(1.0)
    return FEOperatorSet(
        disc.mesh, nu, diffusion, convection_m, pressure_grad, divergence,
        stab_uu, stab_up, stab_pu, stab_pp, rhs_u, rhs_p, disc.mean_row,
        disc.dirichlet_dofs, np.asarray(dirichlet_values, dtype=float),
    )


@dataclass
class FESolution:
    u: Field
    p: Field
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    multiplier: float = 0.0


def _split(disc: FEDiscretization, x: np.ndarray):
    n = disc.n
    u = np.column_stack([x[:n], x[n : 2 * n]])
    return u, x[2 * n : 3 * n], x[3 * n]


def _linear_solve(A, b):
    try:
        x = spla.spsolve(A.tocsc(), b)
    except RuntimeError as exc:  # singular factor
        raise SolverFailure(f"sparse solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("sparse solve returned non-finite values (singular system)")
    return x


def solve_fom_fe(
    mesh: Mesh | FEDiscretization,
    mu,
    stab: StabilizationConfig = StabilizationConfig(),
    solver_cfg: FESolverConfig = FESolverConfig(),
    lid: float = 1.0,
    body_force: BodyForce | None = None,
    boundary_velocity=None,
    initial: np.ndarray | None = None,
    nu: float | None = None,
) -> FESolution:
    """Picard (Oseen) iterations on the stabilized steady Navier-Stokes system."""
    disc = mesh if isinstance(mesh, FEDiscretization) else FEDiscretization(mesh)
    n = disc.n
    bvals = disc.values_from(boundary_velocity) if boundary_velocity is not None else disc.lid_values(lid)
    x = np.zeros(3 * n + 1)
    if initial is not None:
        x[: 2 * n] = initial
    x[disc.dirichlet_dofs] = bvals
    history = []
    for it in range(solver_cfg.picard_max + 1):
        u, _, _ = _split(disc, x)
        ops = assemble_fe(disc, mu, stab, u, body_force, bvals, nu=nu)
        A, b = ops.matrix(), ops.rhs()
        r = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
        history.append(r)
        if not np.isfinite(r):
            break
        if r <= solver_cfg.picard_tol:
            u, p, lam = _split(disc, x)
            log.debug("FE Picard converged: mu=%s iters=%d res=%.3e", mu, it, r)
            return FESolution(Field(disc.mesh, u), Field(disc.mesh, p), True, it, history, float(lam))
        if it == solver_cfg.picard_max:
            break
        x_new = _linear_solve(A, b)
        x = solver_cfg.relax * x_new + (1.0 - solver_cfg.relax) * x
    raise FOMDiverged(
        f"Picard did not converge for mu={mu}: final residual {history[-1]:.3e} after {len(history) - 1} iterations",
        mu=mu, residual=history[-1], residuals=history,
    )


def lifting_fe(mesh: Mesh | FEDiscretization, lid: float = 1.0, stab: StabilizationConfig = StabilizationConfig(),
               boundary_velocity=None) -> Field:
    """Velocity of one stabilized Stokes solve (unit viscosity) carrying the Dirichlet data."""
    disc = mesh if isinstance(mesh, FEDiscretization) else FEDiscretization(mesh)
    bvals = disc.values_from(boundary_velocity) if boundary_velocity is not None else disc.lid_values(lid)
    ops = assemble_fe(disc, 1.0, stab, None, None, bvals, nu=1.0, convection=False)
    x = _linear_solve(ops.matrix(), ops.rhs())
    u, _, _ = _split(disc, x)
    return Field(disc.mesh, u)


def stabilized_continuity_residual(disc: FEDiscretization, sol: FESolution, mu, stab: StabilizationConfig) -> np.ndarray:
    """Residual of the stabilized continuity rows at a converged state."""
    ops = assemble_fe(disc, mu, stab, sol.u)
    return ops.divergence @ sol.u.flat() + ops.stab_pu @ sol.u.flat() + ops.stab_pp @ sol.p.values - ops.rhs_p


def divergence_l2(disc: FEDiscretization, u: Field) -> tuple[float, float]:
    """Raw L2 norms of div(u_h) and grad(u_h), element-wise exact for P1."""
    g = disc.el.gradient(u.values)  # (E, 2, 2) [comp, deriv]
    div = g[:, 0, 0] + g[:, 1, 1]
    return float(np.sqrt(np.sum(disc.el.area * div**2))), float(np.sqrt(np.sum(disc.el.area * np.sum(g**2, axis=(1, 2)))))

"""Steady incompressible FV solver with an algebraic eddy-viscosity closure."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..core import Field, Mesh, inlet_vector
from ..errors import FOMDiverged, InvalidConfig
from .operators import FVOperators, default_tau, xfield, xvec

log = logging.getLogger(__name__)

KAPPA = 0.41


@dataclass(frozen=True)
class FVConfig:
    nu: float = 2e-2
    closure: bool = True  # mixing-length eddy viscosity
    convection: bool = True
    blend: float = 1.0  # 1 = central, 0 = upwind
    relax_u: float = 0.7
    relax_p: float = 0.3
    relax_nut: float = 0.5
    mixing_cap: float = 0.09  # fraction of channel height
    tol: float = 1e-6
    max_iter: int = 3000
    newton_tol: float = 1e-12
    newton_max: int = 30
    tau: float | None = None  # momentum-interpolation coefficient; None = automatic
    u_ref: float = 0.25

    def __post_init__(self):
        if self.nu <= 0:
            raise InvalidConfig(f"viscosity must be positive, got {self.nu}")
        if not 0.0 <= self.blend <= 1.0:
            raise InvalidConfig("blend must lie in [0, 1]")
        for name in ("relax_u", "relax_p", "relax_nut"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in (0, 1]")

    def resolved_tau(self, mesh: Mesh) -> float:
        return self.tau if self.tau is not None else default_tau(mesh, self.nu, self.u_ref)


@dataclass(eq=False)
class FVState:
    u: Field
    p: Field
    nut: Field
    converged: bool
    iterations: int
    residuals: dict = field(default_factory=dict)
    fallback: bool = False


def mixing_length(mesh: Mesh, cap: float = 0.09) -> np.ndarray:
    h = float(mesh.meta.get("channel_height", np.ptp(mesh.nodes[:, 1])))
    return np.minimum(KAPPA * mesh.wall_distance(), cap * h)


def eddy_viscosity(ops: FVOperators, u: Field, cap: float = 0.09, length: np.ndarray | None = None) -> np.ndarray:
    """Prandtl mixing-length viscosity ``l^2 sqrt(2 S:S)``."""
    ell = mixing_length(ops.mesh, cap) if length is None else length
    return ell**2 * ops.strain_rate_norm(xfield(u))


class FVSystem:
    """Residual and Jacobian of the steady equations at fixed eddy viscosity.

    Unknowns are ``[u_x, u_y, p]``; the inlet vector is a fixed parameter.
    The momentum residual (per unit volume) is

        nu (lap u + div(grad u^T)) + nut lap u + div(nut grad u^T) - div(u u) - grad p

    and continuity is ``div u - tau * smoothing(p)``.
    """

    def __init__(self, ops: FVOperators, nu: float, nut: np.ndarray | None, convection: bool = True,
                 blend: float = 1.0):
        self.ops, self.nu, self.convection, self.blend = ops, nu, convection, blend
        n = ops.n
        lin = nu * ops.LAP
        if nut is not None:
            lin = lin + nu * ops._divgt_one + sp.block_diag([sp.diags(nut)] * 2) @ ops.LAP + ops.divgradT_matrix(nut)
        self.lin = lin.tocsr()  # acts on X
        self.gp = sp.vstack(ops.GRADP, format="csr")
        self.n = n

    def split(self, z: np.ndarray, bc) -> tuple[np.ndarray, np.ndarray]:
        n = self.n
        return np.concatenate([z[: 2 * n], bc]), z[2 * n:]

    def residual(self, z: np.ndarray, bc) -> np.ndarray:
        X, p = self.split(z, bc)
        ops = self.ops
        mom = self.lin @ X - self.gp @ p
        if self.convection:
            mom = mom - self.transport(X)
        cont = ops.DIV @ X - ops.tau * (ops.RC @ p)
        return np.concatenate([mom, cont])

    def transport(self, X: np.ndarray) -> np.ndarray:
        ops = self.ops
        conv = ops.convection(X)
        if self.blend < 1.0:
            up = ops.upwind_convection_matrix(ops.flux(X)) @ X
            conv = self.blend * conv + (1.0 - self.blend) * up
        return conv

    def jacobian(self, z: np.ndarray, bc) -> sp.csr_matrix:
        X, _ = self.split(z, bc)
        n, ops = self.n, self.ops
        Juu = self.lin[:, : 2 * n]
        if self.convection:
            Juu = Juu - ops.convection_jacobian(X)[:, : 2 * n]
        return sp.bmat([[Juu, -self.gp], [ops.DIV[:, : 2 * n], -ops.tau * ops.RC]], format="csc")

    def scales(self, z: np.ndarray, bc) -> tuple[float, float]:
        """Magnitudes used to normalise the momentum and continuity residuals."""
        X, p = self.split(z, bc)
        ops = self.ops
        m = np.linalg.norm(self.lin @ X) + np.linalg.norm(self.gp @ p)
        if self.convection:
            m += np.linalg.norm(self.transport(X))
        c = np.sum(np.abs(ops.flux(X))) / np.sum(ops.V) + 1e-300
        return m + 1e-300, c * np.sqrt(ops.n)

    def normalized(self, z, bc) -> tuple[float, float]:
        r = self.residual(z, bc)
        sm, sc = self.scales(z, bc)
        n = self.n
        return float(np.linalg.norm(r[: 2 * n]) / sm), float(np.linalg.norm(r[2 * n:]) / sc)


def _pack(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.concatenate([u[:, 0], u[:, 1], p])


def _unpack(z: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([z[:n], z[n: 2 * n]], axis=1), z[2 * n:]


def newton_fv(system: FVSystem, z: np.ndarray, bc, tol: float, max_iter: int) -> tuple[np.ndarray, list[float], bool]:
    """Damped Newton on the coupled system; returns (state, residual history, converged)."""
    hist = []
    r = system.residual(z, bc)
    sm, sc = system.scales(z, bc)
    n = system.n

    def norm(r):
        return max(np.linalg.norm(r[: 2 * n]) / sm, np.linalg.norm(r[2 * n:]) / sc)

    res = norm(r)
    hist.append(res)
    for _ in range(max_iter):
        if not np.isfinite(res):
            return z, hist, False
        if res < tol:
            return z, hist, True
        try:
            dz = spla.spsolve(system.jacobian(z, bc), -r)
        except RuntimeError:
            return z, hist, False
        if not np.all(np.isfinite(dz)):
            return z, hist, False
        step = 1.0
        while True:
            zn = z + step * dz
            rn = system.residual(zn, bc)
            resn = norm(rn)
            if resn < (1 - 1e-4 * step) * res or step < 1e-3:
                break
            step *= 0.5
        if resn >= res and step < 1e-3:
            return z, hist, False
        z, r, res = zn, rn, resn
        hist.append(res)
    return z, hist, res < tol


def _simple(ops: FVOperators, cfg: FVConfig, bc: np.ndarray, u: np.ndarray, p: np.ndarray,
            nut: np.ndarray, ell: np.ndarray | None, blend: float, hist: dict):
    """SIMPLE outer iterations with deferred-correction blending.

    Returns the final (u, p, nut, converged flag). Raises ``FOMDiverged`` on
    blow-up or stagnation.
    """
    n = ops.n
    nu = cfg.nu
    best, stall = np.inf, 0
    gp = sp.vstack(ops.GRADP, format="csr")
    for it in range(1, cfg.max_iter + 1):
        X = xvec(u, bc)
        system = FVSystem(ops, nu, nut if cfg.closure else None, cfg.convection, blend)
        rm, rc = system.normalized(_pack(u, p), bc)
        hist["momentum"].append(rm)
        hist["continuity"].append(rc)
        res = max(rm, rc)
        if not np.isfinite(res) or res > 1e8:
            raise FOMDiverged("SIMPLE iterations blew up", iteration=it, residual=float(res))
        if res < cfg.tol:
            return u, p, nut, True, it
        if res < 0.999 * best:
            best, stall = res, 0
        else:
            stall += 1
            if stall > 400:
                raise FOMDiverged("SIMPLE iterations stagnated", iteration=it, residual=float(res))

        # momentum predictor: A u = b with implicit upwind transport and diffusion
        nu_eff = nu + (nut if cfg.closure else np.zeros(n))
        lap_imp = sp.block_diag([sp.diags(nu_eff)] * 2) @ ops.LAP
        A_full = -lap_imp
        explicit = np.zeros(2 * n)
        if cfg.closure:
            explicit += nu * (ops._divgt_one @ X) + ops.divgradT_matrix(nut) @ X
        if cfg.convection:
            phi = ops.flux(X)
            up = ops.upwind_convection_matrix(phi)
            A_full = A_full + up
            if blend > 0.0:
                explicit -= blend * (ops.convection(X) - up @ X)
        A_full = A_full.tocsr()
        Auu = A_full[:, : 2 * n]
        b = -(A_full[:, 2 * n:] @ bc) + explicit - gp @ p
        diag = Auu.diagonal()
        diag_r = diag / cfg.relax_u
        Auu_r = Auu + sp.diags(diag_r - diag)
        b_r = b + (diag_r - diag) * np.concatenate([u[:, 0], u[:, 1]])
        ustar_flat = spla.spsolve(Auu_r.tocsc(), b_r)
        ustar = np.stack([ustar_flat[:n], ustar_flat[n:]], axis=1)

        # pressure correction
        dP = 1.0 / (0.5 * (diag_r[:n] + diag_r[n:]))
        df = ops.Favg @ dP
        Xs = xvec(ustar, bc)
        mass = ops.DIV @ Xs - ops.tau * (ops.RC @ p)
        Lp = (ops.DA @ sp.diags(df) @ ops.SNp).tocsr()
        pc = spla.spsolve(Lp.tocsc(), mass)
        p = p + cfg.relax_p * pc
        corr = np.stack([ops.GRADP[0] @ pc, ops.GRADP[1] @ pc], axis=1)
        u = ustar - dP[:, None] * corr

        if cfg.closure:
            nut_new = ell**2 * ops.strain_rate_norm(xvec(u, bc))
            nut = (1 - cfg.relax_nut) * nut + cfg.relax_nut * nut_new
    raise FOMDiverged("SIMPLE did not converge", iteration=cfg.max_iter, residual=float(res))


def solve_fom_fv(mesh: Mesh, mu, cfg: FVConfig = FVConfig(), ops: FVOperators | None = None,
                 initial: FVState | None = None) -> FVState:
    """Solve the steady problem for inlet parameters ``mu = (magnitude, angle_deg)``."""
    bc = inlet_vector(mu)
    ops = ops or FVOperators(mesh, cfg.resolved_tau(mesh))
    n = ops.n
    ell = mixing_length(mesh, cfg.mixing_cap) if cfg.closure else None
    if initial is not None:
        u0, p0, nut0 = initial.u.values.copy(), initial.p.values.copy(), initial.nut.values.copy()
    else:
        stokes = solve_linear_stokes(mesh, bc, cfg.nu, ops)
        u0, p0, nut0 = stokes.u.values, stokes.p.values, np.zeros(n)
        if cfg.closure:
            nut0 = ell**2 * ops.strain_rate_norm(xfield(stokes.u))
    hist = {"momentum": [], "continuity": [], "newton": []}
    fallback = False
    try:
        u, p, nut, _, its = _simple(ops, cfg, bc, u0, p0, nut0, ell, cfg.blend, hist)
    except FOMDiverged as exc:
        if cfg.blend == 0.0 or not cfg.convection:
            raise
        log.warning("central blend failed at mu=%s (%s); retrying with upwind", tuple(mu), exc)
        fallback = True
        u, p, nut, _, its = _simple(ops, cfg, bc, u0, p0, nut0, ell, 0.0, hist)

    # polish the frozen-nut system; with upwind fallback only SIMPLE accuracy is claimed
    system = FVSystem(ops, cfg.nu, nut if cfg.closure else None, cfg.convection)
    converged = True
    if not fallback:
        z, nh, converged = newton_fv(system, _pack(u, p), bc, cfg.newton_tol, cfg.newton_max)
        hist["newton"] = nh
        if not converged:
            raise FOMDiverged("coupled Newton polish failed", mu=tuple(mu), residual=nh[-1] if nh else None)
        u, p = _unpack(z, n)
    return FVState(Field(mesh, u, bc), Field(mesh, p), Field(mesh, nut if cfg.closure else np.zeros(n)),
                   converged, its, hist, fallback)


def solve_linear_stokes(mesh: Mesh, bc, nu: float, ops: FVOperators) -> FVState:
    system = FVSystem(ops, nu, None, convection=False)
    bc = np.asarray(bc, dtype=float)
    z0 = np.zeros(3 * ops.n)
    z = spla.spsolve(system.jacobian(z0, bc), -system.residual(z0, bc))
    u, p = _unpack(z, ops.n)
    return FVState(Field(mesh, u, bc), Field(mesh, p), Field(mesh, np.zeros(ops.n)), True, 1,
                   {"momentum": [], "continuity": [], "newton": [float(np.linalg.norm(system.residual(z, bc)))]})


def lifting_fv(mesh: Mesh, cfg: FVConfig = FVConfig(), ops: FVOperators | None = None) -> tuple[Field, Field]:
    """Stokes liftings for unit inlet vectors along x and y."""
    ops = ops or FVOperators(mesh, cfg.resolved_tau(mesh))
    return tuple(solve_linear_stokes(mesh, e, cfg.nu, ops).u for e in np.eye(2))


def lifting_coefficients(mu) -> np.ndarray:
    return inlet_vector(mu)


def homogenize(u: Field, liftings, mu) -> Field:
    """Subtract the inlet-matching combination of liftings; the result carries a zero inlet vector."""
    g = lifting_coefficients(mu)
    out = u - g[0] * liftings[0] - g[1] * liftings[1]
    out.bc = np.zeros(2)
    return out


def reattachment_index(state: FVState) -> int:
    """Number of bottom-row cells behind the step that carry reverse flow before reattachment.

    Zero means no recirculation bubble.
    """
    mesh = state.u.mesh
    ij = mesh.meta["ij"]
    c = mesh.centers
    row0 = np.min(ij[:, 1])
    sel = np.where((ij[:, 1] == row0) & (c[:, 0] > 0))[0]
    sel = sel[np.argsort(c[sel, 0])]
    ux = state.u.values[sel, 0]
    neg = np.where(ux < 0)[0]
    if neg.size == 0:
        return 0
    after = np.where((np.arange(len(ux)) > neg[0]) & (ux >= 0))[0]
    return int(after[0]) if after.size else len(ux)

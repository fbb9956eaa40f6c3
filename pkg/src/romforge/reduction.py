"""Snapshot sets, POD, Gram-Schmidt, supremizers and strong greedy sampling."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import H1, L2, Field, InnerProduct, Mesh, ParameterSample, inner_product
from .errors import (
    DegenerateSnapshots,
    DegenerateSpectrum,
    DimensionMismatch,
    EmptySnapshots,
    IncompatibleFields,
    InvalidConfig,
    SolverFailure,
)

log = logging.getLogger(__name__)

VELOCITY, PRESSURE, SUPREMIZER, EDDY = "velocity", "pressure", "supremizer", "eddy-viscosity"
FAMILIES = (VELOCITY, PRESSURE, SUPREMIZER, EDDY)
EIG_CUTOFF = 1e-12


@dataclass(eq=False)
class SnapshotSet:
    """Converged FOM fields at distinct parameter samples."""

    samples: list[ParameterSample]
    velocity: list[Field]
    pressure: list[Field]
    nut: list[Field] | None = None
    liftings: list[Field] = field(default_factory=list)
    homogenized: bool = False

    def __post_init__(self):
        if not self.samples:
            raise EmptySnapshots("snapshot set is empty")
        k = len(self.samples)
        if len(self.velocity) != k or len(self.pressure) != k or (self.nut is not None and len(self.nut) != k):
            raise DimensionMismatch("every sample needs one field per family")
        mus = [s.mu for s in self.samples]
        if len(set(mus)) != len(mus):
            raise InvalidConfig("snapshot parameter samples must be pairwise distinct")
        fp = self.mesh.fingerprint()
        for f in [*self.velocity, *self.pressure, *(self.nut or []), *self.liftings]:
            if f.mesh is not self.mesh and f.mesh.fingerprint() != fp:
                raise IncompatibleFields("all snapshot fields must share one mesh")

    @property
    def mesh(self) -> Mesh:
        return self.velocity[0].mesh

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(eq=False)
class ReducedBasis:
    """Orthonormal modes stored column-wise as flat DOF vectors."""

    family: str
    mesh: Mesh
    arity: int
    modes: np.ndarray  # (n_flat, N)
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ip_kind: str = L2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidConfig(f"unknown basis family {self.family!r}")
        self.modes = np.asarray(self.modes, dtype=float).reshape(self.modes.shape[0], -1)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)

    @property
    def count(self) -> int:
        return self.modes.shape[1]

    def field(self, i: int) -> Field:
        bc = np.zeros(2) if self.arity == 2 else None
        return Field.from_flat(self.mesh, self.modes[:, i], self.arity, bc)

    def fields(self) -> list[Field]:
        return [self.field(i) for i in range(self.count)]

    def truncated(self, n: int) -> "ReducedBasis":
        return ReducedBasis(self.family, self.mesh, self.arity, self.modes[:, :n].copy(), self.eigenvalues, self.ip_kind)

    def gram(self, ip: InnerProduct | None = None) -> np.ndarray:
        ip = ip or inner_product(self.mesh, self.ip_kind, self.arity)
        return ip.gram(self.modes)


def _stack(fields) -> tuple[np.ndarray, Mesh, int]:
    if isinstance(fields, np.ndarray):
        raise InvalidConfig("pass Field objects so the mesh is known")
    fields = list(fields)
    if not fields:
        raise EmptySnapshots("no snapshots given")
    mesh, arity = fields[0].mesh, fields[0].arity
    fp = mesh.fingerprint()
    for f in fields:
        if f.arity != arity:
            raise IncompatibleFields("mixed arities in one snapshot family")
        if f.mesh is not mesh and f.mesh.fingerprint() != fp:
            raise IncompatibleFields("snapshots live on different meshes")
    return np.column_stack([f.flat() for f in fields]), mesh, arity


def pod(snapshots: Sequence[Field], ip: InnerProduct | None = None, n: int | None = None,
        energy: float | None = None, family: str = VELOCITY) -> ReducedBasis:
    """POD by the method of snapshots.

    ``n`` fixes the mode count, ``energy`` picks the smallest count whose
    cumulative energy reaches the threshold; with neither, every mode above
    the eigenvalue cutoff is kept. Eigenvalues are those of the correlation
    matrix itself (no 1/N_s factor).
    """
    S, mesh, arity = _stack(snapshots)
    ip = ip or inner_product(mesh, L2, arity)
    ns = S.shape[1]
    if n is not None and not 1 <= n <= ns:
        raise InvalidConfig(f"mode count {n} outside 1..{ns}")
    if energy is not None and not 0.0 < energy <= 1.0:
        raise InvalidConfig(f"energy threshold {energy} outside (0, 1]")
    K = ip.gram(S)
    K = 0.5 * (K + K.T)
    lam, vec = np.linalg.eigh(K)
    order = np.argsort(lam)[::-1]
    lam, vec = np.clip(lam[order], 0.0, None), vec[:, order]
    if lam[0] <= 0.0:
        raise DegenerateSnapshots("all snapshots are zero")
    usable = int(np.sum(lam > EIG_CUTOFF * lam[0]))
    if energy is not None:
        cum = cumulative_energy(lam)
        n = int(np.searchsorted(cum, energy - 1e-15) + 1)
    n = usable if n is None else min(n, usable)
    modes = S @ (vec[:, :n] / np.sqrt(lam[:n]))
    norms = np.sqrt(np.einsum("ij,ij->j", modes, ip.weight @ modes))
    modes = modes / norms
    # fix signs deterministically: largest-magnitude entry positive
    idx = np.argmax(np.abs(modes), axis=0)
    modes = modes * np.sign(modes[idx, np.arange(n)])
    lam[usable:] = 0.0
    return ReducedBasis(family, mesh, arity, modes, lam, ip.kind)


def cumulative_energy(eigenvalues) -> np.ndarray:
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0 or np.sum(lam) <= 0.0:
        raise DegenerateSpectrum("spectrum has no energy")
    if np.any(lam < 0):
        raise DegenerateSpectrum("eigenvalues must be non-negative")
    cum = np.minimum(np.cumsum(lam) / np.sum(lam), 1.0)
    cum[-1] = 1.0
    return np.maximum.accumulate(cum)


@dataclass
class GSResult:
    vectors: np.ndarray
    kept: list[int]
    dropped: list[int]


def gram_schmidt(vectors, ip: InnerProduct, against: np.ndarray | None = None, drop_tol: float = 1e-8) -> GSResult:
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    ``vectors`` is a matrix of flat columns or a list of Fields. Columns whose
    norm after projection falls below ``drop_tol`` of the original are
    dropped and reported. ``against`` holds already-orthonormal columns
    the new vectors are orthogonalized against (they are not returned).
    """
    if not isinstance(vectors, np.ndarray):
        vectors, _, _ = _stack(vectors)
    W = ip.weight
    basis = [] if against is None else [against[:, k] for k in range(against.shape[1])]
    base0 = len(basis)
    kept, dropped = [], []
    for j in range(vectors.shape[1]):
        v = np.array(vectors[:, j], dtype=float)
        n0 = np.sqrt(max(v @ (W @ v), 0.0))
        if n0 == 0.0:
            dropped.append(j)
            continue
        for _ in range(2):
            for q in basis:
                v -= (q @ (W @ v)) * q
        nv = np.sqrt(max(v @ (W @ v), 0.0))
        if nv < drop_tol * n0:
            dropped.append(j)
            continue
        basis.append(v / nv)
        kept.append(j)
    if dropped:
        log.info("Gram-Schmidt dropped %d near-dependent vectors: %s", len(dropped), dropped)
    new = basis[base0:]
    out = np.column_stack(new) if new else np.zeros((vectors.shape[0], 0))
    return GSResult(out, kept, dropped)


# ---- supremizers -------------------------------------------------------------

def supremizer_fe(disc, pressure_modes: np.ndarray, kind: str = H1) -> np.ndarray:
    """Supremizer velocities for P1 pressure modes (columns).

    Solves ``(s, v)_V = -(q, div v)`` for all homogeneous test functions; the
    result is zero on every Dirichlet node.
    """
    from .fom_fe import assemble_fe, StabilizationConfig

    ops = assemble_fe(disc, 1.0, StabilizationConfig(), None)
    Bt = ops.pressure_grad  # (2n, n)
    W = inner_product(disc.mesh, kind, 2).weight
    free = disc.free_velocity
    Q = np.atleast_2d(np.asarray(pressure_modes, dtype=float).T).T
    rhs = Bt[free] @ Q
    try:
        lu = spla.splu(W[free][:, free].tocsc())
    except RuntimeError as exc:
        raise SolverFailure(f"supremizer system is singular: {exc}") from exc
    out = np.zeros((2 * disc.n, Q.shape[1]))
    out[free] = lu.solve(rhs)
    return out


def supremizer_fv(ops, pressure_modes: np.ndarray, kind: str = H1) -> np.ndarray:
    """FV supremizers: ``(s, v)_V = (q, div v)`` with the Gauss divergence of homogeneous fields."""
    n = ops.n
    W = inner_product(ops.mesh, kind, 2).weight
    D = ops.DIV[:, : 2 * n]  # homogeneous inlet data
    Q = np.atleast_2d(np.asarray(pressure_modes, dtype=float).T).T
    rhs = D.T @ (ops.V[:, None] * Q)
    try:
        lu = spla.splu(sp.csc_matrix(W))
    except RuntimeError as exc:
        raise SolverFailure(f"supremizer system is singular: {exc}") from exc
    return lu.solve(rhs)


# ---- strong greedy -----------------------------------------------------------

@dataclass(eq=False)
class GreedyResult:
    velocity: ReducedBasis
    pressure: ReducedBasis
    selected: list[int]
    max_errors: list[float]  # max training error after each enrichment
    errors: list[np.ndarray]  # per-candidate errors after each enrichment
    u_counts: list[int] = field(default_factory=list)  # velocity modes after each enrichment


def greedy_rb(
    samples: Sequence[ParameterSample],
    snapshot: Callable[[int], tuple[Field, Field]],
    rom_error: Callable[[ReducedBasis, ReducedBasis, int], float],
    tol: float,
    n_max: int,
    supremizer: Callable[[np.ndarray], np.ndarray] | None = None,
    ip_u: InnerProduct | None = None,
    ip_p: InnerProduct | None = None,
) -> GreedyResult:
    """Strong greedy selection over a training set using the true ROM error.

    ``snapshot(k)`` returns the homogenized velocity and pressure at sample
    ``k`` (the caller caches FOM solves). ``rom_error(V, Q, k)`` is the
    combined relative error of the ROM built on bases ``V, Q`` at sample
    ``k``. With ``supremizer`` the velocity space interleaves each snapshot
    with the supremizer of its pressure, so bases stay nested.
    """
    if not samples:
        raise EmptySnapshots("greedy needs at least one training sample")
    if n_max < 1:
        raise InvalidConfig("n_max must be at least 1")
    u0, p0 = snapshot(0)
    ip_u = ip_u or inner_product(u0.mesh, L2, 2)
    ip_p = ip_p or inner_product(p0.mesh, L2, 1)
    snaps = [snapshot(k) for k in range(len(samples))]
    norms = [ip_u.norm(u) ** 2 + ip_p.norm(p) ** 2 for u, p in snaps]
    pick = int(np.argmax(norms))
    selected, max_errors, errors, counts = [], [], [], []
    V = np.zeros((u0.flat().size, 0))
    Q = np.zeros((p0.flat().size, 0))
    while True:
        selected.append(pick)
        u, p = snaps[pick]
        gq = gram_schmidt(p.flat()[:, None], ip_p, against=Q)
        Q = np.hstack([Q, gq.vectors])
        cols = [u.flat()]
        if supremizer is not None and gq.vectors.shape[1]:
            cols.append(supremizer(gq.vectors)[:, 0])
        gv = gram_schmidt(np.column_stack(cols), ip_u, against=V)
        V = np.hstack([V, gv.vectors])
        counts.append(V.shape[1])
        vb = ReducedBasis(VELOCITY, u.mesh, 2, V, ip_kind=ip_u.kind)
        pb = ReducedBasis(PRESSURE, p.mesh, 1, Q, ip_kind=ip_p.kind)
        err = np.array([rom_error(vb, pb, k) for k in range(len(samples))])
        errors.append(err)
        max_errors.append(float(np.max(err)))
        log.info("greedy step %d: picked %s, max error %.3e", len(selected), samples[pick].mu, max_errors[-1])
        if max_errors[-1] <= tol or len(selected) >= min(n_max, len(samples)):
            break
        masked = err.copy()
        masked[selected] = -np.inf
        pick = int(np.argmax(masked))
    return GreedyResult(vb, pb, selected, max_errors, errors, counts)

"""Gaussian RBF interpolation of reduced eddy-viscosity coefficients."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .core import L2, Field, ParameterBox, inner_product
from .errors import DimensionMismatch, IllConditionedKernel, IncompatibleFields, InvalidConfig
from .reduction import ReducedBasis

COND_LIMIT = 1e14
GAUSSIAN = "gaussian"


class ExtrapolationWarning(UserWarning):
    """Raised (as a warning) when an RBF model is evaluated outside its box."""


def gaussian(r: np.ndarray, eps) -> np.ndarray:
    return np.exp(-((eps * r) ** 2))


@dataclass(frozen=True, eq=False)
class RBFModel:
    centers: np.ndarray  # (Ns, d), normalized coordinates
    eps: np.ndarray  # (Nout,) shape parameter per output row
    weights: np.ndarray  # (Nout, Ns)
    ridge: float = 0.0
    kernel: str = GAUSSIAN
    box: ParameterBox | None = None

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def __call__(self, mu) -> np.ndarray:
        return rbf_eval(self, mu)


def project_viscosity(snapshots: list[Field], modes: ReducedBasis) -> np.ndarray:
    """Table ``g[i, j] = (nut_j, eta_i)_L2`` of shape (N_nut, N_s)."""
    if modes.count == 0:
        return np.zeros((0, len(snapshots)))
    fp = modes.mesh.fingerprint()
    for s in snapshots:
        if s.mesh is not modes.mesh and s.mesh.fingerprint() != fp:
            raise IncompatibleFields("viscosity snapshots and modes live on different meshes")
    W = inner_product(modes.mesh, L2, 1).weight
    S = np.column_stack([s.flat() for s in snapshots])
    return modes.modes.T @ (W @ S)


def default_eps(centers: np.ndarray) -> float:
    """Reciprocal of the median pairwise distance (1 for a single centre)."""
    if len(centers) < 2:
        return 1.0
    med = float(np.median(pdist(centers)))
    return 1.0 / med if med > 0 else 1.0


def rbf_fit(centers, table, eps=None, ridge: float = 0.0, box: ParameterBox | None = None,
            auto_ridge: bool = False) -> RBFModel:
    """Solve one kernel system per output row.

    ``centers`` are normalized coordinates (rows), stored in lexicographic
    order. ``eps`` may be a scalar (shared) or one value per output row. With
    ``auto_ridge`` an ill-conditioned kernel is retried with a 1e-10 ridge
    instead of raising.
    """
    X = np.atleast_2d(np.asarray(centers, dtype=float))
    Y = np.atleast_2d(np.asarray(table, dtype=float))
    if Y.shape[1] != X.shape[0]:
        raise DimensionMismatch(f"table has {Y.shape[1]} columns for {X.shape[0]} centres")
    if len(X) > 1 and np.min(pdist(X)) == 0.0:
        raise InvalidConfig("RBF centres must be pairwise distinct")
    if ridge < 0:
        raise InvalidConfig("ridge must be non-negative")
    # canonical centre order: the fitted model does not depend on input ordering
    order = np.lexsort(X.T[::-1])
    X, Y = X[order], Y[:, order]
    e = np.broadcast_to(np.asarray(default_eps(X) if eps is None else eps, dtype=float), (Y.shape[0],)).copy()
    if np.any(e <= 0):
        raise InvalidConfig("shape parameter must be positive")
    R = cdist(X, X)
    W = np.zeros_like(Y)
    cache = {}
    for i in range(Y.shape[0]):
        key = float(e[i])
        if key not in cache:
            Phi = gaussian(R, key)
            lam = ridge
            if lam == 0.0:
                c = np.linalg.cond(Phi)
                if not np.isfinite(c) or c > COND_LIMIT:
                    if not auto_ridge:
                        raise IllConditionedKernel(
                            f"kernel condition number {c:.2e} exceeds {COND_LIMIT:.0e}; "
                            "raise the ridge or lower the shape parameter", condition=float(c), eps=key)
                    lam = 1e-10
            cache[key] = Phi + lam * np.eye(len(X))
        W[i] = np.linalg.solve(cache[key], Y[i])
    return RBFModel(X, e, W, ridge, GAUSSIAN, box)


def rbf_eval(model: RBFModel, mu, normalized: bool = False) -> np.ndarray:
    """Evaluate every output row at one parameter point."""
    x = np.asarray(mu, dtype=float).ravel()
    if model.box is not None and not normalized:
        inside = model.box.contains(x)
        x = model.box.normalize(x)
    else:
        inside = bool(np.all((x >= -1e-12) & (x <= 1 + 1e-12)))
    if not inside:
        warnings.warn(f"RBF evaluated outside the training box at {tuple(np.atleast_1d(mu))}", ExtrapolationWarning,
                      stacklevel=2)
    r = np.linalg.norm(model.centers - x[None, :], axis=1)
    return np.einsum("ij,ij->i", model.weights, gaussian(r[None, :], model.eps[:, None]))

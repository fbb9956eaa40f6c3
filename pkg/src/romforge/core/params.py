"""Parameter boxes, samples and sampling plans."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidConfig


@dataclass(frozen=True)
class ParameterBox:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise InvalidConfig("parameter box bounds must be non-empty and of equal length")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise InvalidConfig(f"degenerate parameter box {self.lower} .. {self.upper}")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, mu, tol: float = 1e-12) -> bool:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        span = np.asarray(self.upper) - np.asarray(self.lower)
        return bool(np.all(mu >= np.asarray(self.lower) - tol * span) and np.all(mu <= np.asarray(self.upper) + tol * span))

    def normalize(self, mu) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (np.asarray(mu, dtype=float) - lo) / (hi - lo)

    def denormalize(self, t) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + np.asarray(t, dtype=float) * (hi - lo)

    def sample(self, mu, check: bool = True) -> "ParameterSample":
        mu = tuple(float(v) for v in np.atleast_1d(mu))
        if len(mu) != self.dim:
            raise InvalidConfig(f"expected {self.dim} parameters, got {len(mu)}")
        if check and not self.contains(mu):
            raise InvalidConfig(f"parameter {mu} outside box {self.lower}..{self.upper}")
        return ParameterSample(mu, tuple(float(v) for v in self.normalize(mu)))

    def grid(self, counts) -> list["ParameterSample"]:
        """Tensor grid with ``counts[k]`` equispaced points per dimension, first dimension slowest."""
        axes = [np.linspace(lo, hi, int(c)) if c > 1 else np.array([0.5 * (lo + hi)])
                for lo, hi, c in zip(self.lower, self.upper, counts)]
        return [self.sample(p) for p in itertools.product(*axes)]


@dataclass(frozen=True)
class ParameterSample:
    mu: tuple[float, ...]
    normalized: tuple[float, ...] | None = None

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    def __len__(self):
        return len(self.mu)


def inlet_vector(mu) -> np.ndarray:
    """Inlet velocity ``[m cos(a), m sin(a)]`` from magnitude ``m`` (m/s) and angle ``a`` (degrees)."""
    m, a = np.asarray(mu, dtype=float)[:2]
    r = np.deg2rad(a)
    return np.array([m * np.cos(r), m * np.sin(r)])


def maxmin_holdout(box: ParameterBox, offline: list[ParameterSample], count: int,
                   resolution: int = 41) -> list[ParameterSample]:
    """Pick ``count`` points inside the box that are as far as possible from the offline set.

    Greedy max-min over a candidate lattice in normalized coordinates; each
    pick also repels later picks. Ties break on lattice order, so the result
    is deterministic.
    """
    axes = [np.linspace(0.0, 1.0, resolution)] * box.dim
    cand = np.array(list(itertools.product(*axes)))
    taken = np.array([box.normalize(s.mu) for s in offline])
    picks = []
    for _ in range(count):
        d = np.min(np.linalg.norm(cand[:, None, :] - taken[None], axis=-1), axis=1)
        k = int(np.argmax(d))
        picks.append(cand[k])
        taken = np.vstack([taken, cand[k]])
    return [box.sample(box.denormalize(t)) for t in picks]

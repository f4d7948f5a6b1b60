"""Structured descriptions of feasible dual-vector (subgradient) sets.

Each variant describes a closed convex set C of dual vectors; the supremum
representation of a risk function ranges over nonnegative vectors in C.  The
variants are exactly the shapes the constraint emitter in `backend` knows how
to write down as linear or second-order-cone rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.atleast_1d(np.asarray(array, dtype=dtype))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class FullSimplex:
    """All probability vectors: {q | 1'q = 1} intersected with the nonnegative orthant."""

    dim: int


@dataclass(frozen=True)
class Singleton:
    """A single dual vector: {q | q = point}."""

    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _frozen(self.point))

    @property
    def dim(self) -> int:
        return self.point.size


@dataclass(frozen=True)
class CVaRBox:
    """Capped probabilities: {q >= 0 | q_o <= probs_o / (1 - alpha), 1'q = 1}."""

    alpha: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class MADSet:
    """Mean-absolute-deviation duals: q_o = p_o(1 + gamma(h_o - p'h)), |h|_inf <= 1.

    The per-atom form is derived by the same blockwise-constant argument as the
    semideviation set (signed h instead of nonnegative); its value function is
    cross-checked against the closed-form deviation formula in the tests.
    """

    gamma: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class SemidevSOC:
    """Mean-upper-semideviation (order 2) duals.

    q_o = p_o(1 + gamma(h_o - p'h)) with h >= 0 and sum_o p_o h_o^2 <= 1;
    the quadratic cap is a second-order-cone row on sqrt(p_o) h_o.
    """

    gamma: float
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class TransportationPolytope:
    """Stepwise-spectral duals: {q | q = Q levels, Q 1 = probs, Q' 1 = level_masses, Q >= 0}."""

    levels: np.ndarray
    level_masses: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "levels", _frozen(self.levels))
        object.__setattr__(self, "level_masses", _frozen(self.level_masses))
        object.__setattr__(self, "probs", _frozen(self.probs))

    @property
    def dim(self) -> int:
        return self.probs.size


@dataclass(frozen=True)
class MinkowskiMix:
    """Weighted Minkowski sum: {q | q = sum_c w_c q_c, q_c in components[c]}."""

    weights: tuple[float, ...]
    components: tuple["SubgradientSet", ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        dims = {c.dim for c in self.components}
        if len(dims) != 1:
            raise ValueError("mix components must share one ambient dimension")

    @property
    def dim(self) -> int:
        return self.components[0].dim


@dataclass(frozen=True)
class Polyhedron:
    """Explicit halfspace description: {q | A q <= b, E q = f}."""

    A: np.ndarray
    b: np.ndarray
    E: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        E = np.atleast_2d(np.asarray(self.E, dtype=float))
        for name, arr in (("A", A), ("E", E)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "b", _frozen(self.b))
        object.__setattr__(self, "f", _frozen(self.f))
        if self.A.shape[0] != self.b.size or self.E.shape[0] != self.f.size:
            raise ValueError("row counts of A/b and E/f must match")
        if self.A.size and self.E.size and self.A.shape[1] != self.E.shape[1]:
            raise ValueError("A and E must have the same number of columns")

    @property
    def dim(self) -> int:
        return self.A.shape[1] if self.A.size else self.E.shape[1]


SubgradientSet = Union[
    FullSimplex,
    Singleton,
    CVaRBox,
    MADSet,
    SemidevSOC,
    TransportationPolytope,
    MinkowskiMix,
    Polyhedron,
]


def has_soc(c: SubgradientSet) -> bool:
    """Whether embedding `c` needs a second-order cone (not LP-only)."""
    if isinstance(c, SemidevSOC):
        return True
    if isinstance(c, MinkowskiMix):
        return any(has_soc(comp) for comp in c.components)
    return False


def sums_to_one(c: SubgradientSet) -> bool:
    """Whether every q in C automatically satisfies 1'q = 1 (translation invariance)."""
    if isinstance(c, (FullSimplex, CVaRBox)):
        return True
    if isinstance(c, Singleton):
        return bool(abs(float(c.point.sum()) - 1.0) <= 1e-12)
    if isinstance(c, (MADSet, SemidevSOC)):
        # q sums to 1 + gamma(p'h - p'h) = 1 identically.
        return True
    if isinstance(c, TransportationPolytope):
        return bool(
            abs(float(c.level_masses @ c.levels) - 1.0) <= 1e-12
            and abs(float(c.probs.sum()) - 1.0) <= 1e-12
        )
    if isinstance(c, MinkowskiMix):
        return abs(sum(c.weights) - 1.0) <= 1e-12 and all(sums_to_one(x) for x in c.components)
    return False

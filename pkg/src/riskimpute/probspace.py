"""Finite outcome spaces and discrete distributions with exact rational weights.

Probabilities are `fractions.Fraction` throughout, never floats: replication
counts of the form p*M must be exact integers, and round trips between a
distribution and its uniform lift must be lossless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import CapExceeded, DimensionMismatch, IncompatibleM

__all__ = [
    "OutcomeSpace",
    "DiscreteDistribution",
    "RandomLoss",
    "ScenarioMap",
    "uniform_lift",
    "distribution_of",
    "replicate",
    "sort_with_order",
    "equal_in_distribution",
]


def _as_fraction(value) -> Fraction:
    """Coerce ints, strings like '1/3', and Fractions; reject floats.

    Floats are rejected on purpose: a weight of 1/3 written as 0.333... would
    silently break the exact-count arithmetic this module relies on.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"probabilities must be exact rationals, got {type(value).__name__}")


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class OutcomeSpace:
    """Finite sample space with one exact rational weight per outcome."""

    weights: tuple[Fraction, ...]

    def __post_init__(self):
        weights = tuple(_as_fraction(w) for w in self.weights)
        if not weights:
            raise ValueError("an outcome space needs at least one outcome")
        if any(w <= 0 for w in weights):
            raise ValueError("outcome weights must be strictly positive")
        if sum(weights) != 1:
            raise ValueError("outcome weights must sum to exactly 1")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, size: int) -> "OutcomeSpace":
        if size < 1:
            raise ValueError("size must be positive")
        return cls(tuple(Fraction(1, size) for _ in range(size)))

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def is_uniform(self) -> bool:
        return all(w == Fraction(1, self.size) for w in self.weights)

    def weights_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite distribution: strictly increasing support, exact rational masses."""

    support: np.ndarray
    probs: tuple[Fraction, ...]

    def __eq__(self, other):
        if not isinstance(other, DiscreteDistribution):
            return NotImplemented
        return (
            self.probs == other.probs
            and self.support.size == other.support.size
            and bool(np.all(self.support == other.support))
        )

    def __hash__(self):
        return hash((tuple(self.support.tolist()), self.probs))

    def __post_init__(self):
        support = _freeze(np.atleast_1d(np.asarray(self.support, dtype=float)))
        probs = tuple(_as_fraction(p) for p in self.probs)
        if support.ndim != 1 or support.size == 0:
            raise ValueError("support must be a nonempty vector")
        if support.size != len(probs):
            raise DimensionMismatch("support and probs must have equal length")
        if not np.all(np.isfinite(support)):
            raise ValueError("support values must be finite")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing; merge duplicates first")
        if any(p <= 0 for p in probs):
            raise ValueError("probabilities must be strictly positive")
        if sum(probs) != 1:
            raise ValueError("probabilities must sum to exactly 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, values: Sequence[float], probs: Iterable) -> "DiscreteDistribution":
        """Build a canonical distribution: sort support, merge equal values."""
        probs = [_as_fraction(p) for p in probs]
        values = [float(v) for v in values]
        if len(values) != len(probs):
            raise DimensionMismatch("values and probs must have equal length")
        merged: dict[float, Fraction] = {}
        for v, p in zip(values, probs):
            merged[v] = merged.get(v, Fraction(0)) + p
        items = sorted(merged.items())
        return cls(np.array([v for v, _ in items]), tuple(p for _, p in items))

    @property
    def size(self) -> int:
        return len(self.probs)

    def probs_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    def mean(self) -> float:
        return float(np.dot(self.support, self.probs_array()))

    def denominator_lcm(self) -> int:
        return math.lcm(*(p.denominator for p in self.probs))

    def to_literal(self) -> list:
        """Config-file form: list of [value, "num/den"] pairs."""
        return [[float(v), f"{p.numerator}/{p.denominator}"] for v, p in zip(self.support, self.probs)]

    @classmethod
    def from_literal(cls, pairs: Sequence) -> "DiscreteDistribution":
        values = [float(v) for v, _ in pairs]
        probs = [Fraction(str(p)) for _, p in pairs]
        return cls.from_atoms(values, probs)


def dirac(value: float) -> DiscreteDistribution:
    return DiscreteDistribution(np.array([float(value)]), (Fraction(1),))


@dataclass(frozen=True)
class RandomLoss:
    """A loss vector indexed by the outcomes of a finite space."""

    values: np.ndarray
    space: OutcomeSpace

    def __post_init__(self):
        values = _freeze(np.atleast_1d(np.asarray(self.values, dtype=float)))
        if values.ndim != 1:
            raise ValueError("loss values must form a vector")
        if values.size != self.space.size:
            raise DimensionMismatch(
                f"loss has {values.size} entries but the space has {self.space.size} outcomes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("loss values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class ScenarioMap:
    """Finite support of a driving random vector: scenarios with rational masses."""

    scenarios: np.ndarray
    probs: tuple[Fraction, ...]

    def __post_init__(self):
        scenarios = _freeze(np.atleast_2d(np.asarray(self.scenarios, dtype=float)))
        probs = tuple(_as_fraction(p) for p in self.probs)
        if scenarios.shape[0] != len(probs):
            raise DimensionMismatch("one probability per scenario row is required")
        if any(p <= 0 for p in probs):
            raise ValueError("scenario probabilities must be positive")
        if sum(probs) != 1:
            raise ValueError("scenario probabilities must sum to exactly 1")
        seen = set()
        for row in scenarios:
            key = row.tobytes()
            if key in seen:
                raise ValueError("scenario vectors must be pairwise distinct; merge duplicates")
            seen.add(key)
        object.__setattr__(self, "scenarios", scenarios)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_rows(cls, rows: np.ndarray, probs: Iterable | None = None) -> "ScenarioMap":
        """Merge duplicate rows, summing their masses (uniform by default)."""
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        n = rows.shape[0]
        if probs is None:
            probs = [Fraction(1, n)] * n
        else:
            probs = [_as_fraction(p) for p in probs]
        merged: dict[bytes, tuple[np.ndarray, Fraction]] = {}
        order: list[bytes] = []
        for row, p in zip(rows, probs):
            key = row.tobytes()
            if key in merged:
                merged[key] = (merged[key][0], merged[key][1] + p)
            else:
                merged[key] = (row, p)
                order.append(key)
        kept = [merged[k] for k in order]
        return cls(np.array([r for r, _ in kept]), tuple(p for _, p in kept))

    @property
    def size(self) -> int:
        return len(self.probs)

    def space(self) -> OutcomeSpace:
        return OutcomeSpace(self.probs)


def uniform_lift(d: DiscreteDistribution, cap: int) -> RandomLoss:
    """Rewrite `d` as a loss over M equally likely outcomes, M = lcm of denominators.

    Each support value appears exactly p*M times, laid out as contiguous blocks
    in ascending support order.  Raises CapExceeded when M would exceed `cap`.
    """
    M = d.denominator_lcm()
    if M > cap:
        raise CapExceeded(f"uniform lift needs {M} outcomes, cap is {cap}")
    counts = [p * M for p in d.probs]
    values = np.repeat(d.support, [int(c) for c in counts])
    return RandomLoss(values, OutcomeSpace.uniform(M))


def distribution_of(z: RandomLoss) -> DiscreteDistribution:
    """Canonical distribution of a loss: merge equal values, sum their weights."""
    return DiscreteDistribution.from_atoms(list(z.values), list(z.space.weights))


def replicate(y: Sequence[float], d: DiscreteDistribution, M: int) -> np.ndarray:
    """Repeat entry o of `y` exactly p_o*M times, concatenated in support order."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != d.size:
        raise DimensionMismatch("y must have one entry per support atom")
    counts = []
    for p in d.probs:
        c = p * M
        if c.denominator != 1:
            raise IncompatibleM(f"probability {p} is not an integer count out of {M}")
        counts.append(int(c))
    return np.repeat(y, counts)


def sort_with_order(z: RandomLoss) -> tuple[np.ndarray, np.ndarray]:
    """Stable ascending sort; returns (sorted values, permutation indices).

    `values[order] == sorted_values`; ties keep their original relative order.
    Indices are 0-based.
    """
    order = np.argsort(z.values, kind="stable")
    return z.values[order], order


def equal_in_distribution(z1: RandomLoss, z2: RandomLoss, tol: float = 0.0) -> bool:
    """True iff the canonical distributions match: probs exactly, support within tol."""
    d1 = distribution_of(z1)
    d2 = distribution_of(z2)
    if d1.size != d2.size or d1.probs != d2.probs:
        return False
    return bool(np.all(np.abs(d1.support - d2.support) <= tol))

"""Reference risk measures: evaluation and structured dual (subgradient) sets.

Each measure can report the convex set of dual vectors appearing in its
supremum representation, both over a distribution's own support (the reduced
form used by the support-dimension programs) and over a uniform outcome space
of a given size (the lifted form used by permutation-based oracles).  Tail and
quantile measures are evaluated by maximizing over the reduced set; exact
closed forms are provided alongside as independent cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import backend
from . import sets as S
from .errors import IncompatibleM, ParameterOutOfRange, SolverFailure, UnsupportedMeasure
from .probspace import DiscreteDistribution, RandomLoss, distribution_of

__all__ = [
    "MaxLoss",
    "Expectation",
    "MeanAbsDev",
    "MeanUpperSemidev",
    "CVaR",
    "StepwiseSpectral",
    "Entropic",
    "Mix",
    "ReferenceMeasure",
    "evaluate",
    "evaluate_loss",
    "reduced_subgradient_set",
    "lifted_subgradient_set",
    "law_restricted_set",
    "grid_spectrum",
    "subgradient_set_for_probs",
    "cvar_as_spectral",
    "mix_to_spectral",
    "cvar_tail_value",
    "spectral_closed_value",
    "measure_from_literal",
    "measure_to_literal",
]


def as_ratio(value, hint: int | None = None) -> Fraction:
    """Coerce a parameter to an exact rational.

    Floats go through their shortest decimal representation (0.9 -> 9/10)
    unless a denominator hint caps the search instead.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, float):
        if hint is not None:
            return Fraction(value).limit_denominator(hint)
        return Fraction(str(value))
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


# -- measure variants --------------------------------------------------------


@dataclass(frozen=True)
class MaxLoss:
    pass


@dataclass(frozen=True)
class Expectation:
    pass


@dataclass(frozen=True)
class MeanAbsDev:
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 0.5:
            raise ParameterOutOfRange("mean-absolute-deviation weight must lie in [0, 1/2]")


@dataclass(frozen=True)
class MeanUpperSemidev:
    """Mean plus upper semideviation of order 2 (other orders are rejected)."""

    gamma: float
    order: int = 2

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterOutOfRange("semideviation weight must lie in [0, 1]")
        if self.order != 2:
            raise ParameterOutOfRange("only order-2 semideviation is supported")


@dataclass(frozen=True)
class CVaR:
    alpha: Fraction

    def __post_init__(self):
        alpha = as_ratio(self.alpha)
        if not 0 <= alpha < 1:
            raise ParameterOutOfRange("CVaR level must lie in [0, 1)")
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class StepwiseSpectral:
    """Piecewise-constant spectrum: level k applies on (breakpoints[k-1], breakpoints[k]].

    Levels are nondecreasing with at most the first equal to zero, and the
    masses-weighted level sum must equal one.  Breakpoints are exact rationals
    so the lifted form can check divisibility of the outcome count.
    """

    levels: tuple[float, ...]
    breakpoints: tuple[Fraction, ...]

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        breaks = tuple(as_ratio(b) for b in self.breakpoints)
        if len(breaks) != len(levels) + 1:
            raise ParameterOutOfRange("need one more breakpoint than levels")
        if breaks[0] != 0 or breaks[-1] != 1:
            raise ParameterOutOfRange("breakpoints must run from 0 to 1")
        if any(b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
            raise ParameterOutOfRange("breakpoints must be strictly increasing")
        if any(v2 <= v1 for v1, v2 in zip(levels, levels[1:])):
            raise ParameterOutOfRange("spectrum levels must be strictly increasing")
        if levels[0] < 0 or (len(levels) > 1 and levels[1] <= 0):
            raise ParameterOutOfRange("spectrum levels must be nonnegative")
        total = sum(float(b2 - b1) * v for b1, b2, v in zip(breaks, breaks[1:], levels))
        if abs(total - 1.0) > 1e-9:
            raise ParameterOutOfRange(f"spectrum must integrate to 1, got {total!r}")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "breakpoints", breaks)

    def level_masses(self) -> np.ndarray:
        return np.array(
            [float(b2 - b1) for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])]
        )


@dataclass(frozen=True)
class Entropic:
    """Optimized certainty equivalent with exponential disutility; value (1/s) ln E[e^{sZ}]."""

    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ParameterOutOfRange("entropic parameter must be positive")


@dataclass(frozen=True)
class Mix:
    weights: tuple[float, ...]
    components: tuple["ReferenceMeasure", ...]

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != len(self.components):
            raise ParameterOutOfRange("one weight per component is required")
        if any(w < 0 for w in weights):
            raise ParameterOutOfRange("mix weights must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ParameterOutOfRange("mix weights must sum to 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", tuple(self.components))


ReferenceMeasure = Union[
    MaxLoss, Expectation, MeanAbsDev, MeanUpperSemidev, CVaR, StepwiseSpectral, Entropic, Mix
]


# -- exact closed forms ------------------------------------------------------


def cvar_tail_value(alpha: Fraction | float, d: DiscreteDistribution) -> float:
    """Average of the worst (1 - alpha) tail, by exact greedy mass filling."""
    alpha = as_ratio(alpha)
    if not 0 <= alpha < 1:
        raise ParameterOutOfRange("CVaR level must lie in [0, 1)")
    tail = Fraction(1) - alpha
    left = tail
    total = 0.0
    for v, p in zip(d.support[::-1], d.probs[::-1]):
        take = min(left, p)
        total += float(take) * float(v)
        left -= take
        if left == 0:
            break
    return total / float(tail)


def spectral_closed_value(m: StepwiseSpectral, d: DiscreteDistribution) -> float:
    """Quantile integral of the stepwise spectrum, with exact mass splitting."""
    total = 0.0
    lo = Fraction(0)
    for v, p in zip(d.support, d.probs):
        hi = lo + p
        for k, (b1, b2) in enumerate(zip(m.breakpoints, m.breakpoints[1:])):
            overlap = min(hi, b2) - max(lo, b1)
            if overlap > 0:
                total += float(overlap) * m.levels[k] * float(v)
        lo = hi
    return total


def _entropic_value(s: float, d: DiscreteDistribution) -> float:
    z = s * d.support
    shift = float(np.max(z))
    weights = d.probs_array()
    return (shift + math.log(float(weights @ np.exp(z - shift)))) / s


def _deviation_values(d: DiscreteDistribution) -> tuple[float, np.ndarray, np.ndarray]:
    mean = d.mean()
    dev = d.support - mean
    return mean, dev, d.probs_array()


# -- evaluation --------------------------------------------------------------


def _sup_over_set(c: S.SubgradientSet, values: np.ndarray) -> float:
    pb = backend.ProgramBuilder(sense="max")
    q = pb.add_vars("q", c.dim)
    backend.embed_set(pb, q, c)
    pb.add_objective_terms(q, values)
    report = backend.solve(pb)
    if not report.ok:
        raise SolverFailure(f"dual-set maximization ended with status {report.status.value}")
    return report.objective


def evaluate(m: ReferenceMeasure, d: DiscreteDistribution) -> float:
    """Risk of a distribution under measure `m`.

    Tail/quantile measures (CVaR, stepwise spectral) are computed as linear
    programs over their reduced dual sets; the rest have closed forms.
    """
    if isinstance(m, MaxLoss):
        return float(d.support[-1])
    if isinstance(m, Expectation):
        return d.mean()
    if isinstance(m, MeanAbsDev):
        mean, dev, w = _deviation_values(d)
        return mean + m.gamma * float(w @ np.abs(dev))
    if isinstance(m, MeanUpperSemidev):
        mean, dev, w = _deviation_values(d)
        return mean + m.gamma * math.sqrt(float(w @ np.square(np.maximum(dev, 0.0))))
    if isinstance(m, (CVaR, StepwiseSpectral)):
        return _sup_over_set(reduced_subgradient_set(m, d), d.support)
    if isinstance(m, Entropic):
        return _entropic_value(m.s, d)
    if isinstance(m, Mix):
        return float(sum(w * evaluate(c, d) for w, c in zip(m.weights, m.components)))
    raise UnsupportedMeasure(f"cannot evaluate {type(m).__name__}")


def evaluate_loss(m: ReferenceMeasure, z: RandomLoss) -> float:
    """Risk of a loss vector; all supported measures are law invariant."""
    return evaluate(m, distribution_of(z))


# -- dual sets ---------------------------------------------------------------


def subgradient_set_for_probs(m: ReferenceMeasure, probs: np.ndarray) -> S.SubgradientSet:
    """Dual set of `m` for atoms carrying the given probability masses.

    The set depends on the distribution only through its probability vector;
    support values never enter.
    """
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    if isinstance(m, MaxLoss):
        return S.FullSimplex(probs.size)
    if isinstance(m, Expectation):
        return S.Singleton(probs)
    if isinstance(m, MeanAbsDev):
        return S.MADSet(m.gamma, probs)
    if isinstance(m, MeanUpperSemidev):
        return S.SemidevSOC(m.gamma, probs)
    if isinstance(m, CVaR):
        return S.CVaRBox(float(m.alpha), probs)
    if isinstance(m, StepwiseSpectral):
        return S.TransportationPolytope(np.array(m.levels), m.level_masses(), probs)
    if isinstance(m, Mix):
        return S.MinkowskiMix(
            m.weights, tuple(subgradient_set_for_probs(c, probs) for c in m.components)
        )
    raise UnsupportedMeasure(f"{type(m).__name__} has no polyhedral/conic dual set")


def reduced_subgradient_set(m: ReferenceMeasure, d: DiscreteDistribution) -> S.SubgradientSet:
    """Dual set over the distribution's own support dimension."""
    return subgradient_set_for_probs(m, d.probs_array())


def lifted_subgradient_set(m: ReferenceMeasure, M: int) -> S.SubgradientSet:
    """Permutation-invariant dual set over a uniform space of size M.

    For stepwise spectra the breakpoints must fall on the M-point grid; use
    `law_restricted_set` when they need not.
    """
    _check_lift_compatible(m, M)
    return subgradient_set_for_probs(m, np.full(M, 1.0 / M))


def grid_spectrum(m: StepwiseSpectral, M: int) -> np.ndarray:
    """Per-outcome spectrum weights on M uniform outcomes (exact overlap integrals)."""
    out = np.zeros(M)
    for j in range(M):
        lo, hi = Fraction(j, M), Fraction(j + 1, M)
        for k, (b1, b2) in enumerate(zip(m.breakpoints, m.breakpoints[1:])):
            overlap = min(hi, b2) - max(lo, b1)
            if overlap > 0:
                out[j] += float(overlap) * m.levels[k]
    return out


def law_restricted_set(m: ReferenceMeasure, M: int) -> S.SubgradientSet:
    """Dual set of `m` restricted to losses over M uniform outcomes.

    Coincides with `lifted_subgradient_set` whenever the stepwise breakpoints
    align with the outcome grid; otherwise the spectrum is first discretized
    onto the grid, which is exact for losses living on that space.
    """
    if isinstance(m, StepwiseSpectral):
        weights = grid_spectrum(m, M)  # nondecreasing since the spectrum is
        levels: list[float] = []
        counts: list[int] = []
        for w in M * weights:
            if levels and w == levels[-1]:
                counts[-1] += 1
            else:
                levels.append(float(w))
                counts.append(1)
        return S.TransportationPolytope(
            np.array(levels), np.array(counts, dtype=float) / M, np.full(M, 1.0 / M)
        )
    if isinstance(m, Mix):
        return S.MinkowskiMix(
            m.weights, tuple(law_restricted_set(c, M) for c in m.components)
        )
    return subgradient_set_for_probs(m, np.full(M, 1.0 / M))


def _check_lift_compatible(m: ReferenceMeasure, M: int) -> None:
    if isinstance(m, StepwiseSpectral):
        for b in m.breakpoints:
            if (b * M).denominator != 1:
                raise IncompatibleM(
                    f"breakpoint {b} does not fall on the grid of {M} uniform outcomes"
                )
    if isinstance(m, Mix):
        for c in m.components:
            _check_lift_compatible(c, M)


# -- spectral constructors ----------------------------------------------------


def cvar_as_spectral(alpha, denominator_hint: int | None = None) -> StepwiseSpectral:
    """CVaR as a two-step spectrum: zero below alpha, 1/(1-alpha) above.

    The zero first level is the limiting stepwise form and is permitted here
    and in `mix_to_spectral` only.
    """
    alpha = as_ratio(alpha, denominator_hint)
    if alpha == 0:
        return StepwiseSpectral((1.0,), (Fraction(0), Fraction(1)))
    return StepwiseSpectral(
        (0.0, 1.0 / float(1 - alpha)), (Fraction(0), alpha, Fraction(1))
    )


def mix_to_spectral(lam: float, alpha, denominator_hint: int | None = None) -> StepwiseSpectral:
    """Spectrum of lam * Expectation + (1 - lam) * CVaR(alpha)."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterOutOfRange("mixing weight must lie in [0, 1]")
    alpha = as_ratio(alpha, denominator_hint)
    if lam == 1.0:
        return StepwiseSpectral((1.0,), (Fraction(0), Fraction(1)))
    if lam == 0.0:
        return cvar_as_spectral(alpha)
    if alpha == 0:
        # lam*E + (1-lam)*CVaR_0 = E
        return StepwiseSpectral((1.0,), (Fraction(0), Fraction(1)))
    return StepwiseSpectral(
        (lam, lam + (1.0 - lam) / float(1 - alpha)),
        (Fraction(0), alpha, Fraction(1)),
    )


# -- config-file literals ------------------------------------------------------


def measure_to_literal(m: ReferenceMeasure) -> dict:
    if isinstance(m, MaxLoss):
        return {"max_loss": {}}
    if isinstance(m, Expectation):
        return {"expectation": {}}
    if isinstance(m, MeanAbsDev):
        return {"mad": {"gamma": m.gamma}}
    if isinstance(m, MeanUpperSemidev):
        return {"semideviation": {"gamma": m.gamma}}
    if isinstance(m, CVaR):
        return {"cvar": {"alpha": str(m.alpha)}}
    if isinstance(m, StepwiseSpectral):
        return {
            "spectral": {
                "levels": list(m.levels),
                "breakpoints": [str(b) for b in m.breakpoints],
            }
        }
    if isinstance(m, Entropic):
        return {"entropic": {"s": m.s}}
    if isinstance(m, Mix):
        return {
            "mix": {
                "weights": list(m.weights),
                "components": [measure_to_literal(c) for c in m.components],
            }
        }
    raise UnsupportedMeasure(f"cannot serialize {type(m).__name__}")


def measure_from_literal(spec: dict) -> ReferenceMeasure:
    """Parse the config-file measure syntax, e.g. {"cvar": {"alpha": "9/10"}}."""
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError("a measure literal is a one-key mapping")
    kind, args = next(iter(spec.items()))
    if kind == "max_loss":
        return MaxLoss()
    if kind == "expectation":
        return Expectation()
    if kind == "mad":
        return MeanAbsDev(float(args["gamma"]))
    if kind == "semideviation":
        return MeanUpperSemidev(float(args["gamma"]))
    if kind == "cvar":
        return CVaR(as_ratio(args["alpha"]))
    if kind == "spectral":
        return StepwiseSpectral(
            tuple(float(v) for v in args["levels"]),
            tuple(as_ratio(b) for b in args["breakpoints"]),
        )
    if kind == "spectral_mix":
        return mix_to_spectral(float(args["lambda"]), as_ratio(args["alpha"]))
    if kind == "entropic":
        return Entropic(float(args["s"]))
    if kind == "mix":
        return Mix(
            tuple(float(w) for w in args["weights"]),
            tuple(measure_from_literal(c) for c in args["components"]),
        )
    raise ValueError(f"unknown measure kind {kind!r}")

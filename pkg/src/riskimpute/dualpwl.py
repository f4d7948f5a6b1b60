"""Piecewise-linear-conjugate risk functions: the imputation solution format.

A function here is determined by support vertices X_j with values delta_j and
a convex set C of feasible dual vectors; its value at a loss Z is

    sup { y'Z - max_j (y'X_j - delta_j) : y >= 0, y in C }.

Two storage forms exist.  The general form keeps raw vertex vectors and one
fixed-dimension set C.  The law-invariant form keeps vertex distributions and
inherits its dual sets from a reference measure, so it can be evaluated over
any rational-probability distribution without constructing the common uniform
outcome space.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import backend
from . import riskmeasures as rm
from . import sets as S
from .backend import ProgramBuilder, Status
from .errors import DimensionMismatch, IncompatibleM, SolverFailure, TooLarge
from .probspace import (
    DiscreteDistribution,
    RandomLoss,
    dirac,
    distribution_of,
    replicate,
)

__all__ = [
    "DualPwlRiskFunction",
    "evaluate_general",
    "evaluate_law_invariant",
    "evaluate_reduced",
    "risk_value",
    "CachedEvaluator",
    "conjugate_at",
    "brute_force_law_eval",
    "from_measure",
    "to_payload",
    "from_payload",
    "save",
    "load",
]

_ZERO_DELTA_TOL = 1e-9


@dataclass(frozen=True)
class DualPwlRiskFunction:
    deltas: np.ndarray
    translation_invariant: bool
    law_invariant: bool
    vertex_losses: tuple[np.ndarray, ...] | None = None
    set_: S.SubgradientSet | None = None
    vertex_dists: tuple[DiscreteDistribution, ...] | None = None
    set_family: rm.ReferenceMeasure | None = None

    def __post_init__(self):
        deltas = np.atleast_1d(np.asarray(self.deltas, dtype=float))
        deltas.setflags(write=False)
        object.__setattr__(self, "deltas", deltas)
        if deltas.size < 1 or not np.all(np.isfinite(deltas)):
            raise ValueError("need at least one vertex with a finite value")
        if self.law_invariant:
            if self.vertex_dists is None or self.set_family is None:
                raise ValueError("law-invariant form needs vertex distributions and a set family")
            if len(self.vertex_dists) != deltas.size:
                raise DimensionMismatch("one delta per vertex is required")
            for d, dl in zip(self.vertex_dists, deltas):
                if d.size == 1 and d.support[0] == 0.0 and abs(dl) > _ZERO_DELTA_TOL:
                    raise ValueError("the zero-loss vertex must carry value 0")
        else:
            if self.vertex_losses is None or self.set_ is None:
                raise ValueError("general form needs vertex vectors and a subgradient set")
            if len(self.vertex_losses) != deltas.size:
                raise DimensionMismatch("one delta per vertex is required")
            frozen = []
            for x in self.vertex_losses:
                x = np.atleast_1d(np.asarray(x, dtype=float))
                if x.size != self.set_.dim:
                    raise DimensionMismatch("vertex dimension must match the set's dimension")
                x.setflags(write=False)
                frozen.append(x)
            object.__setattr__(self, "vertex_losses", tuple(frozen))
            for x, dl in zip(self.vertex_losses, deltas):
                if not x.any() and abs(dl) > _ZERO_DELTA_TOL:
                    raise ValueError("the zero-loss vertex must carry value 0")

    @property
    def n_vertices(self) -> int:
        return int(self.deltas.size)

    def vertex_vectors(self, M: int) -> list[np.ndarray]:
        """Law-invariant vertices as loss vectors over M uniform outcomes."""
        out = []
        for d in self.vertex_dists:
            out.append(replicate(d.support, d, M))
        return out


def from_measure(
    m: rm.ReferenceMeasure,
    probs: np.ndarray | None = None,
    *,
    law_invariant: bool = True,
) -> DualPwlRiskFunction:
    """Wrap a reference measure: single zero vertex with value 0, the measure's set.

    With `law_invariant`, the result evaluates over arbitrary distributions;
    otherwise `probs` fixes the outcome space and the set is materialized there.
    """
    ti = True  # every supported reference measure is translation invariant
    if law_invariant:
        return DualPwlRiskFunction(
            deltas=np.zeros(1),
            translation_invariant=ti,
            law_invariant=True,
            vertex_dists=(dirac(0.0),),
            set_family=m,
        )
    if probs is None:
        raise ValueError("the general form needs the outcome probabilities")
    probs = np.atleast_1d(np.asarray(probs, dtype=float))
    return DualPwlRiskFunction(
        deltas=np.zeros(1),
        translation_invariant=ti,
        law_invariant=False,
        vertex_losses=(np.zeros(probs.size),),
        set_=rm.subgradient_set_for_probs(m, probs),
    )


# -- program factories (objectives are set by the callers) --------------------


def general_evaluation_program(f: DualPwlRiskFunction) -> tuple[ProgramBuilder, np.ndarray, int]:
    """max y'Z - t  s.t.  y'X_j - t <= delta_j,  y in R+ ^ C (+ 1'y = 1 when TI)."""
    M = f.set_.dim
    pb = ProgramBuilder(sense="max")
    y = pb.add_vars("y", M)
    t = pb.add_var("t")
    backend.embed_set(pb, y, f.set_)
    if f.translation_invariant and not S.sums_to_one(f.set_):
        pb.add_eq(y, np.ones(M), 1.0)
    for x, dl in zip(f.vertex_losses, f.deltas):
        pb.add_le(np.concatenate([y, [t]]), np.concatenate([x, [-1.0]]), float(dl))
    return pb, y, t


def law_invariant_evaluation_program(
    f: DualPwlRiskFunction, M: int
) -> tuple[ProgramBuilder, np.ndarray, int]:
    """Birkhoff-dualized evaluation over M uniform outcomes.

    The permutation supremum over each vertex is collapsed to linear rows with
    auxiliary vectors v_i, w_i: the (a, b) rows read X_i[a] p_b <= v_i[a] + w_i[b].
    """
    c_sigma = rm.law_restricted_set(f.set_family, M)
    pb = ProgramBuilder(sense="max")
    p = pb.add_vars("p", M)
    t = pb.add_var("t")
    backend.embed_set(pb, p, c_sigma)
    if f.translation_invariant and not S.sums_to_one(c_sigma):
        pb.add_eq(p, np.ones(M), 1.0)
    ones = np.ones(M)
    for i, (x, dl) in enumerate(zip(f.vertex_vectors(M), f.deltas)):
        v = pb.add_vars(f"v{i}", M)
        w = pb.add_vars(f"w{i}", M)
        pb.add_le(np.concatenate([v, w, [t]]), np.concatenate([ones, ones, [-1.0]]), float(dl))
        for a in range(M):
            if x[a] == 0.0:
                for b in range(M):
                    pb.add_le([v[a], w[b]], [-1.0, -1.0], 0.0)
            else:
                for b in range(M):
                    pb.add_le([p[b], v[a], w[b]], [x[a], -1.0, -1.0], 0.0)
    return pb, p, t


def reduced_evaluation_program(
    f: DualPwlRiskFunction, probs: tuple[Fraction, ...]
) -> tuple[ProgramBuilder, np.ndarray, int]:
    """Support-dimension evaluation program for an argument over `probs` atoms.

    The replication structure of the implicit uniform lift shows up only
    through the probability-ratio coefficients on the v variables.
    """
    tau0 = len(probs)
    c0 = rm.subgradient_set_for_probs(f.set_family, np.array([float(q) for q in probs]))
    pb = ProgramBuilder(sense="max")
    p = pb.add_vars("p", tau0)
    t = pb.add_var("t")
    backend.embed_set(pb, p, c0)
    if f.translation_invariant and not S.sums_to_one(c0):
        pb.add_eq(p, np.ones(tau0), 1.0)
    for j, (d, dl) in enumerate(zip(f.vertex_dists, f.deltas)):
        _vertex_transport_rows(pb, p, t, probs, d.support, d.probs, float(dl), tag=str(j))
    return pb, p, t


def _vertex_transport_rows(pb, p, t, arg_probs, s_vals, s_probs, delta, tag):
    """Rows tying the argument's dual vector p to one vertex (values, masses)."""
    tau_j = len(s_probs)
    tau0 = len(arg_probs)
    v = pb.add_vars(f"v{tag}", tau_j)
    w = pb.add_vars(f"w{tag}", tau0)
    pb.add_le(
        np.concatenate([v, w, [t]]),
        np.concatenate([np.ones(tau_j), np.ones(tau0), [-1.0]]),
        delta,
    )
    for m in range(tau_j):
        sm = float(s_vals[m])
        for n in range(tau0):
            ratio = float(arg_probs[n] / s_probs[m])
            if sm == 0.0:
                pb.add_le([v[m], w[n]], [-ratio, -1.0], 0.0)
            else:
                pb.add_le([p[n], v[m], w[n]], [sm, -ratio, -1.0], 0.0)


# -- evaluators ---------------------------------------------------------------


def _optimum(pb: ProgramBuilder) -> float:
    report = backend.solve(pb)
    if report.status is Status.UNBOUNDED:
        raise SolverFailure(
            "evaluation program is unbounded: the subgradient set is not "
            "bounded relative to the vertex system (malformed function)"
        )
    if not report.ok:
        raise SolverFailure(f"evaluation ended with status {report.status.value}")
    return report.objective


def evaluate_general(f: DualPwlRiskFunction, z: RandomLoss | np.ndarray) -> float:
    """Value of a general-form function at a loss vector on its own space."""
    if f.law_invariant:
        raise ValueError("general evaluation needs the general (vector-vertex) form")
    values = z.values if isinstance(z, RandomLoss) else np.atleast_1d(np.asarray(z, dtype=float))
    if values.size != f.set_.dim:
        raise DimensionMismatch("loss dimension must match the function's space")
    pb, y, t = general_evaluation_program(f)
    pb.add_objective_terms(np.concatenate([y, [t]]), np.concatenate([values, [-1.0]]))
    return _optimum(pb)


def evaluate_law_invariant(f: DualPwlRiskFunction, z: RandomLoss) -> float:
    """Value at a loss over a uniform space, via the permutation-collapsed program."""
    if not f.law_invariant:
        raise ValueError("law-invariant evaluation needs the law-invariant form")
    if not z.space.is_uniform:
        raise IncompatibleM("law-invariant evaluation expects a uniform outcome space")
    M = z.size
    pb, p, t = law_invariant_evaluation_program(f, M)
    pb.add_objective_terms(np.concatenate([p, [t]]), np.concatenate([z.values, [-1.0]]))
    return _optimum(pb)


def evaluate_reduced(f: DualPwlRiskFunction, d: DiscreteDistribution) -> float:
    """Value at a distribution, entirely in support dimensions."""
    if not f.law_invariant:
        raise ValueError("reduced evaluation needs the law-invariant form")
    pb, p, t = reduced_evaluation_program(f, d.probs)
    pb.add_objective_terms(np.concatenate([p, [t]]), np.concatenate([d.support, [-1.0]]))
    return _optimum(pb)


def _lift_compatible(f: DualPwlRiskFunction, M: int) -> bool:
    return all((q * M).denominator == 1 for d in f.vertex_dists for q in d.probs)


def risk_value(f: DualPwlRiskFunction, z) -> float:
    """Evaluate at a RandomLoss or DiscreteDistribution, routing by form.

    Law-invariant functions evaluate losses through their distribution unless
    the loss lives on a compatible uniform space, where the lifted program is
    equivalent (and exercised directly).
    """
    if not f.law_invariant:
        return evaluate_general(f, z)
    if isinstance(z, DiscreteDistribution):
        return evaluate_reduced(f, z)
    if z.space.is_uniform and _lift_compatible(f, z.size):
        return evaluate_law_invariant(f, z)
    return evaluate_reduced(f, distribution_of(z))


def conjugate_at(f: DualPwlRiskFunction, y: np.ndarray) -> float:
    """Conjugate value max_j y'X_j - delta_j on R+ ^ C, +inf outside."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y < 0):
        return math.inf
    if f.law_invariant:
        M = y.size
        if not _lift_compatible(f, M):
            raise IncompatibleM("conjugate argument dimension is incompatible with the vertices")
        c = rm.law_restricted_set(f.set_family, M)
        if not backend.membership(c, y):
            return math.inf
        ys = np.sort(y)
        # max over permuted vertices: comonotone pairing of sorted vectors
        return max(
            float(ys @ np.sort(x)) - float(dl)
            for x, dl in zip(f.vertex_vectors(M), f.deltas)
        )
    if y.size != f.set_.dim:
        raise DimensionMismatch("conjugate argument dimension must match the set")
    if not backend.membership(f.set_, y):
        return math.inf
    return max(float(y @ x) - float(dl) for x, dl in zip(f.vertex_losses, f.deltas))


def brute_force_law_eval(f: DualPwlRiskFunction, z: RandomLoss) -> float:
    """Oracle: enumerate all M! vertex permutations explicitly in one program.

    Exact but factorial; guarded to M <= 8.
    """
    if not f.law_invariant:
        raise ValueError("the permutation oracle needs the law-invariant form")
    M = z.size
    if M > 8:
        raise TooLarge("permutation enumeration is limited to 8 outcomes")
    if not z.space.is_uniform:
        raise IncompatibleM("the permutation oracle expects a uniform outcome space")
    c_sigma = rm.law_restricted_set(f.set_family, M)
    pb = ProgramBuilder(sense="max")
    p = pb.add_vars("p", M)
    t = pb.add_var("t")
    backend.embed_set(pb, p, c_sigma)
    if f.translation_invariant and not S.sums_to_one(c_sigma):
        pb.add_eq(p, np.ones(M), 1.0)
    for x, dl in zip(f.vertex_vectors(M), f.deltas):
        seen = set()
        for perm in itertools.permutations(range(M)):
            xp = tuple(x[list(perm)])
            if xp in seen:
                continue
            seen.add(xp)
            pb.add_le(np.concatenate([p, [t]]), np.concatenate([np.array(xp), [-1.0]]), float(dl))
    pb.add_objective_terms(np.concatenate([p, [t]]), np.concatenate([z.values, [-1.0]]))
    return _optimum(pb)


class CachedEvaluator:
    """Re-solves one evaluation program with many objectives (grid sweeps).

    The constraint matrices depend only on the function (and, in the
    law-invariant case, on the argument's atom masses), so they are extracted
    once and each evaluation is a bare solver call.  Ties between argument
    values are harmless: the support-dimension program never needs distinct
    atoms.
    """

    def __init__(self, f: DualPwlRiskFunction, probs: tuple[Fraction, ...] | None = None):
        if f.law_invariant:
            if probs is None:
                raise ValueError("law-invariant evaluation needs the atom masses")
            pb, p_idx, t_idx = reduced_evaluation_program(f, tuple(probs))
        else:
            pb, p_idx, t_idx = general_evaluation_program(f)
        self._A_ub, self._b_ub = pb._le.matrix(pb.nvar)
        self._A_eq, self._b_eq = pb._eq.matrix(pb.nvar)
        self._bounds = pb.bounds()
        self._nvar = pb.nvar
        self._p_idx = p_idx
        self._t_idx = t_idx

    def value(self, values) -> float:
        from scipy.optimize import linprog

        c = np.zeros(self._nvar)
        c[self._p_idx] = -np.asarray(values, dtype=float)
        c[self._t_idx] = 1.0
        res = linprog(
            c,
            A_ub=self._A_ub if self._b_ub.size else None,
            b_ub=self._b_ub if self._b_ub.size else None,
            A_eq=self._A_eq if self._b_eq.size else None,
            b_eq=self._b_eq if self._b_eq.size else None,
            bounds=self._bounds,
            method="highs",
        )
        if res.status != 0:
            raise SolverFailure(f"cached evaluation failed with status {res.status}")
        return float(-res.fun)

    def values(self, value_rows, chunk: int = 512) -> np.ndarray:
        """Evaluate many arguments with one block-diagonal solve per chunk.

        The blocks share no variables, so each optimizes independently and the
        per-block objective at the joint optimum is the block's own optimum.
        """
        from scipy import sparse
        from scipy.optimize import linprog

        rows = [np.asarray(v, dtype=float) for v in value_rows]
        out = np.empty(len(rows))
        for lo in range(0, len(rows), chunk):
            batch = rows[lo : lo + chunk]
            k = len(batch)
            A_ub = sparse.block_diag([self._A_ub] * k, format="csr") if self._b_ub.size else None
            b_ub = np.tile(self._b_ub, k) if self._b_ub.size else None
            A_eq = sparse.block_diag([self._A_eq] * k, format="csr") if self._b_eq.size else None
            b_eq = np.tile(self._b_eq, k) if self._b_eq.size else None
            c = np.zeros(self._nvar * k)
            for i, v in enumerate(batch):
                c[self._p_idx + i * self._nvar] = -v
                c[self._t_idx + i * self._nvar] = 1.0
            res = linprog(
                c,
                A_ub=A_ub,
                b_ub=b_ub,
                A_eq=A_eq,
                b_eq=b_eq,
                bounds=self._bounds * k,
                method="highs",
            )
            if res.status != 0:
                raise SolverFailure(f"batched evaluation failed with status {res.status}")
            x = np.asarray(res.x)
            for i in range(k):
                block = x[i * self._nvar : (i + 1) * self._nvar]
                ci = c[i * self._nvar : (i + 1) * self._nvar]
                out[lo + i] = float(-(ci @ block))
        return out


# -- serialization -------------------------------------------------------------


def _set_to_payload(c: S.SubgradientSet) -> dict:
    if isinstance(c, S.FullSimplex):
        return {"full_simplex": {"dim": c.dim}}
    if isinstance(c, S.Singleton):
        return {"singleton": {"point": list(c.point)}}
    if isinstance(c, S.CVaRBox):
        return {"cvar_box": {"alpha": c.alpha, "probs": list(c.probs)}}
    if isinstance(c, S.MADSet):
        return {"mad_set": {"gamma": c.gamma, "probs": list(c.probs)}}
    if isinstance(c, S.SemidevSOC):
        return {"semidev_soc": {"gamma": c.gamma, "probs": list(c.probs)}}
    if isinstance(c, S.TransportationPolytope):
        return {
            "transportation": {
                "levels": list(c.levels),
                "level_masses": list(c.level_masses),
                "probs": list(c.probs),
            }
        }
    if isinstance(c, S.MinkowskiMix):
        return {
            "minkowski_mix": {
                "weights": list(c.weights),
                "components": [_set_to_payload(x) for x in c.components],
            }
        }
    if isinstance(c, S.Polyhedron):
        return {
            "polyhedron": {
                "A": c.A.tolist(),
                "b": c.b.tolist(),
                "E": c.E.tolist(),
                "f": c.f.tolist(),
            }
        }
    raise TypeError(f"cannot serialize {type(c).__name__}")


def _set_from_payload(payload: dict) -> S.SubgradientSet:
    kind, args = next(iter(payload.items()))
    if kind == "full_simplex":
        return S.FullSimplex(int(args["dim"]))
    if kind == "singleton":
        return S.Singleton(np.array(args["point"]))
    if kind == "cvar_box":
        return S.CVaRBox(float(args["alpha"]), np.array(args["probs"]))
    if kind == "mad_set":
        return S.MADSet(float(args["gamma"]), np.array(args["probs"]))
    if kind == "semidev_soc":
        return S.SemidevSOC(float(args["gamma"]), np.array(args["probs"]))
    if kind == "transportation":
        return S.TransportationPolytope(
            np.array(args["levels"]), np.array(args["level_masses"]), np.array(args["probs"])
        )
    if kind == "minkowski_mix":
        return S.MinkowskiMix(
            tuple(args["weights"]), tuple(_set_from_payload(x) for x in args["components"])
        )
    if kind == "polyhedron":
        return S.Polyhedron(
            np.array(args["A"]), np.array(args["b"]), np.array(args["E"]), np.array(args["f"])
        )
    raise ValueError(f"unknown set kind {kind!r}")


def to_payload(f: DualPwlRiskFunction) -> dict:
    payload = {
        "deltas": [float(v) for v in f.deltas],
        "translation_invariant": f.translation_invariant,
        "law_invariant": f.law_invariant,
    }
    if f.law_invariant:
        payload["vertices"] = [d.to_literal() for d in f.vertex_dists]
        payload["set_family"] = rm.measure_to_literal(f.set_family)
    else:
        payload["vertices"] = [list(x) for x in f.vertex_losses]
        payload["set"] = _set_to_payload(f.set_)
    return payload


def from_payload(payload: dict) -> DualPwlRiskFunction:
    deltas = np.array(payload["deltas"], dtype=float)
    ti = bool(payload["translation_invariant"])
    if payload["law_invariant"]:
        return DualPwlRiskFunction(
            deltas=deltas,
            translation_invariant=ti,
            law_invariant=True,
            vertex_dists=tuple(
                DiscreteDistribution.from_literal(v) for v in payload["vertices"]
            ),
            set_family=rm.measure_from_literal(payload["set_family"]),
        )
    return DualPwlRiskFunction(
        deltas=deltas,
        translation_invariant=ti,
        law_invariant=False,
        vertex_losses=tuple(np.array(v, dtype=float) for v in payload["vertices"]),
        set_=_set_from_payload(payload["set"]),
    )


def save(f: DualPwlRiskFunction, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_payload(f), fh, indent=2)
        fh.write("\n")


def load(path) -> DualPwlRiskFunction:
    with open(path) as fh:
        return from_payload(json.load(fh))

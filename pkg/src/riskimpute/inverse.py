"""Imputation of risk functions from observed decisions and preferences.

Four candidate families are supported: convex risk functions, convex risk
measures (adds translation invariance), and their law-invariant counterparts.
Each solver minimizes the sup-norm deviation from a reference measure subject
to: the vertex-value system that characterizes piecewise-linear-conjugate
functions, optimality of every observed decision (embedded through LP duality
of the forward problem), and elicited pairwise preferences.

Ties among optimal vertex values are broken by a second solve minimizing their
sum at the optimal deviation, so results are deterministic.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import backend
from . import dualpwl as dp
from . import riskmeasures as rm
from . import sets as S
from .backend import ProgramBuilder, Status
from .errors import (
    DimensionMismatch,
    IncompatibleM,
    InfeasibleInstance,
    SolverFailure,
)
from .forward import ForwardProblem, dualize_oracle_constraint, loss_of
from .probspace import (
    DiscreteDistribution,
    RandomLoss,
    dirac,
    distribution_of,
    replicate,
)

__all__ = [
    "Family",
    "PreferencePair",
    "InverseInstance",
    "ImputedResult",
    "InfeasibilityReport",
    "build_vertex_set",
    "solve_general",
    "solve_law_invariant",
    "solve_reduced",
    "impute",
    "diagnose_infeasibility",
]


class Family(enum.Enum):
    CVX = "cvx"
    CVX_MEASURE = "cvx_measure"
    LAW_INV_CVX = "law_inv_cvx"
    LAW_INV_CVX_MEASURE = "law_inv_cvx_measure"

    @property
    def translation_invariant(self) -> bool:
        return self in (Family.CVX_MEASURE, Family.LAW_INV_CVX_MEASURE)

    @property
    def law_invariant(self) -> bool:
        return self in (Family.LAW_INV_CVX, Family.LAW_INV_CVX_MEASURE)


@dataclass(frozen=True)
class PreferencePair:
    """Statement that `lower` is weakly preferred (no riskier) than `upper`."""

    lower: DiscreteDistribution | RandomLoss
    upper: DiscreteDistribution | RandomLoss


@dataclass(frozen=True)
class InverseInstance:
    observations: tuple[tuple[ForwardProblem, np.ndarray], ...]
    reference: rm.ReferenceMeasure
    preferences: tuple[PreferencePair, ...] = ()
    family: Family = Family.LAW_INV_CVX_MEASURE
    feas_tol: float = 1e-8
    dedup: bool = True  # merge exactly-equal vertices (by distribution when law invariant)

    def __post_init__(self):
        obs = tuple((p, np.atleast_1d(np.asarray(x, dtype=float))) for p, x in self.observations)
        object.__setattr__(self, "observations", obs)
        object.__setattr__(self, "preferences", tuple(self.preferences))
        if len(obs) + len(self.preferences) < 1:
            raise ValueError("need at least one observation or preference pair")
        for d, (problem, x) in enumerate(obs):
            if x.size != problem.n_assets:
                raise DimensionMismatch(f"observation {d} has the wrong number of weights")
            if not problem.check_feasible(x, self.feas_tol):
                raise ValueError(
                    f"observed decision {d} is infeasible beyond {self.feas_tol}; "
                    "observations are never projected"
                )


@dataclass(frozen=True)
class ImputedResult:
    function: dp.DualPwlRiskFunction
    deviation: float
    deltas: np.ndarray
    reference_values: np.ndarray
    diagnostics: dict

    def __post_init__(self):
        if self.deviation < -1e-12:
            raise ValueError("deviation must be nonnegative")
        band = float(np.max(np.abs(self.deltas - self.reference_values)))
        if band > self.deviation + 1e-8:
            raise ValueError("vertex values escape the deviation band")


@dataclass(frozen=True)
class InfeasibilityReport:
    total_violation: float
    preference_violations: tuple[tuple[int, float], ...]
    observation_violations: tuple[tuple[int, float], ...]

    @property
    def empty(self) -> bool:
        return not self.preference_violations and not self.observation_violations


# -- vertex assembly -----------------------------------------------------------


@dataclass
class _Vertex:
    values: np.ndarray          # atom values; scenario-level for observations
    probs: tuple[Fraction, ...]
    dist: DiscreteDistribution  # canonical (merged) distribution
    vector: np.ndarray | None   # loss vector on the shared space, general path
    obs_ids: list[int] = field(default_factory=list)

    @property
    def is_zero(self) -> bool:
        return not self.values.any()


@dataclass
class VertexSet:
    vertices: list[_Vertex]
    ref_values: np.ndarray
    pref_pairs: list[tuple[int, int]]   # (index of L_k, index of U_k)
    obs_vertex: list[int]               # vertex index of each observation
    zero_index: int | None


def _pref_sides(pair: PreferencePair):
    return (pair.lower, pair.upper)


def build_vertex_set(inst: InverseInstance) -> VertexSet:
    """Collect candidate vertices: observed losses, the zero vertex, then L/U.

    Exact duplicates are merged (by vector in the general families, by
    distribution in the law-invariant ones) with index remapping, and the zero
    vertex's value is pinned to 0 downstream.
    """
    law = inst.family.law_invariant
    entries: list[_Vertex] = []

    def lookup(vec, dist) -> int | None:
        if not inst.dedup:
            return None
        for k, v in enumerate(entries):
            if law:
                if v.dist == dist:
                    return k
            elif v.vector is not None and vec is not None and v.vector.size == vec.size:
                if np.array_equal(v.vector, vec):
                    return k
        return None

    def push(values, probs, dist, vec, obs_id=None) -> int:
        k = lookup(vec, dist)
        if k is None:
            entries.append(_Vertex(np.asarray(values, dtype=float), tuple(probs), dist, vec))
            k = len(entries) - 1
        if obs_id is not None:
            entries[k].obs_ids.append(obs_id)
        return k

    obs_vertex = []
    for d, (problem, x) in enumerate(inst.observations):
        z = loss_of(problem, x)
        dist = distribution_of(z)
        obs_vertex.append(push(z.values, problem.probs, dist, z.values, obs_id=d))

    zero_dim = entries[0].vector.size if entries and entries[0].vector is not None else None
    if law:
        zero_index = push(np.zeros(1), (Fraction(1),), dirac(0.0), None)
    else:
        if zero_dim is None:
            zero_dim = _general_space_dim(inst)
        zvec = np.zeros(zero_dim)
        zero_index = push(zvec, _space_probs(inst), dirac(0.0), zvec)

    pref_pairs = []
    for pair in inst.preferences:
        ids = []
        for side in _pref_sides(pair):
            if isinstance(side, RandomLoss):
                dist = distribution_of(side)
                ids.append(push(side.values, side.space.weights, dist, side.values))
            else:
                if not law:
                    raise TypeError(
                        "general families compare losses as vectors; "
                        "pass RandomLoss preference sides"
                    )
                ids.append(push(side.support, side.probs, side, None))
        pref_pairs.append((ids[0], ids[1]))

    ref_values = np.array([rm.evaluate(inst.reference, v.dist) for v in entries])
    return VertexSet(entries, ref_values, pref_pairs, obs_vertex, zero_index)


def _general_space_dim(inst: InverseInstance) -> int:
    for pair in inst.preferences:
        for side in _pref_sides(pair):
            if isinstance(side, RandomLoss):
                return side.size
    raise ValueError("cannot infer the outcome space without observations or loss vectors")


def _space_probs(inst: InverseInstance) -> tuple[Fraction, ...]:
    if inst.observations:
        return inst.observations[0][0].probs
    for pair in inst.preferences:
        for side in _pref_sides(pair):
            if isinstance(side, RandomLoss):
                return side.space.weights
    raise ValueError("cannot infer outcome probabilities")


def _shared_space_checks(inst: InverseInstance, law: bool) -> tuple[Fraction, ...]:
    probs = _space_probs(inst)
    for d, (problem, _) in enumerate(inst.observations):
        if problem.probs != probs:
            raise DimensionMismatch("all observations must share one outcome space")
    for pair in inst.preferences:
        for side in _pref_sides(pair):
            if isinstance(side, RandomLoss) and side.space.weights != probs:
                raise DimensionMismatch("preference losses must live on the shared space")
    return probs


# -- shared program assembly -----------------------------------------------------


@dataclass
class _Assembled:
    pb: ProgramBuilder
    u: int
    delta: np.ndarray
    pref_slacks: np.ndarray | None
    obs_slacks: np.ndarray | None


def _band_rows(pb, u, delta, ref_values):
    for j, r in enumerate(ref_values):
        pb.add_le([delta[j], u], [1.0, -1.0], float(r))
        pb.add_le([delta[j], u], [-1.0, -1.0], -float(r))


def _pref_rows(pb, delta, pref_pairs, elastic):
    slacks = None
    if elastic and pref_pairs:
        slacks = pb.add_vars("pref_slack", len(pref_pairs), lb=0.0)
    for k, (i, j) in enumerate(pref_pairs):
        if i == j:
            continue  # merged sides make the relation vacuous
        idx, val = [delta[i], delta[j]], [1.0, -1.0]
        if slacks is not None:
            idx.append(int(slacks[k]))
            val.append(-1.0)
        pb.add_le(idx, val, 0.0)
    return slacks


def _assemble_general(
    inst: InverseInstance, vs: VertexSet, elastic: bool = False
) -> _Assembled:
    probs = _shared_space_checks(inst, law=False)
    probs_arr = np.array([float(q) for q in probs])
    M = len(probs)
    cset = rm.subgradient_set_for_probs(inst.reference, probs_arr)
    ti = inst.family.translation_invariant

    pb = ProgramBuilder(sense="min")
    u = pb.add_var("u", lb=0.0)
    delta = pb.add_vars("delta", len(vs.vertices))
    pb.fix(int(delta[vs.zero_index]), 0.0)
    _band_rows(pb, u, delta, vs.ref_values)

    X = [v.vector for v in vs.vertices]

    def vertex_block(j: int, tag: str) -> np.ndarray:
        y = pb.add_vars(f"y{tag}", M)
        backend.embed_set(pb, y, cset)
        if ti and not S.sums_to_one(cset):
            pb.add_eq(y, np.ones(M), 1.0)
        for i in range(len(vs.vertices)):
            if i == j:
                continue
            # y'(X_i - X_j) <= delta_i - delta_j
            pb.add_le(
                np.concatenate([y, [delta[i], delta[j]]]),
                np.concatenate([X[i] - X[j], [-1.0, 1.0]]),
                0.0,
            )
        return y

    primary: dict[int, np.ndarray] = {}
    for j in range(len(vs.vertices)):
        primary[j] = vertex_block(j, str(j))

    obs_slacks = pb.add_vars("obs_slack", len(inst.observations), lb=0.0) if (
        elastic and inst.observations
    ) else None
    for d, (problem, _) in enumerate(inst.observations):
        j = vs.obs_vertex[d]
        y = primary[j] if vs.vertices[j].obs_ids[0] == d else vertex_block(j, f"{j}obs{d}")
        lhs_idx, lhs_val = list(y), list(X[j])
        if obs_slacks is not None:
            lhs_idx.append(int(obs_slacks[d]))
            lhs_val.append(-1.0)
        dualize_oracle_constraint(problem, pb, y, lhs_idx, lhs_val, tag=f"d{d}")

    pref_slacks = _pref_rows(pb, delta, vs.pref_pairs, elastic)
    return _Assembled(pb, u, delta, pref_slacks, obs_slacks)


def _assemble_reduced(
    inst: InverseInstance,
    vs: VertexSet,
    atoms: list[tuple[np.ndarray, tuple[Fraction, ...]]],
    csets: list[S.SubgradientSet],
    elastic: bool = False,
) -> _Assembled:
    """Support-dimension program shared by the law-invariant solvers.

    `atoms[j]` is the (values, masses) pair of vertex j; the lifted variant
    passes full uniform vectors, the reduced variant passes merged supports
    (scenario-level for observations).  Probability-ratio coefficients carry
    the replication structure.
    """
    ti = inst.family.translation_invariant
    pb = ProgramBuilder(sense="min")
    u = pb.add_var("u", lb=0.0)
    delta = pb.add_vars("delta", len(vs.vertices))
    pb.fix(int(delta[vs.zero_index]), 0.0)
    _band_rows(pb, u, delta, vs.ref_values)

    nJ = len(vs.vertices)

    def vertex_block(j: int, tag: str, override=None) -> np.ndarray:
        # `override` supplies (values, masses, set) when an observation must
        # keep its own scenario arrangement instead of the vertex's atoms.
        if override is None:
            s_j, p_j = atoms[j]
            cset = csets[j]
        else:
            s_j, p_j, cset = override
        y = pb.add_vars(f"y{tag}", len(p_j))
        backend.embed_set(pb, y, cset)
        if ti and not S.sums_to_one(cset):
            pb.add_eq(y, np.ones(len(p_j)), 1.0)
        for i in range(nJ):
            if i == j:
                continue
            s_i, p_i = atoms[i]
            v = pb.add_vars(f"v{tag}_{i}", len(p_i))
            w = pb.add_vars(f"w{tag}_{i}", len(p_j))
            # 1'v + 1'w - y'S_j <= delta_i - delta_j
            pb.add_le(
                np.concatenate([v, w, y, [delta[i], delta[j]]]),
                np.concatenate([np.ones(v.size), np.ones(w.size), -s_j, [-1.0, 1.0]]),
                0.0,
            )
            # S_i[m] y[n] <= (p_j[n]/p_i[m]) v[m] + w[n]
            for m in range(len(p_i)):
                sm = float(s_i[m])
                for n in range(len(p_j)):
                    ratio = float(p_j[n] / p_i[m])
                    if sm == 0.0:
                        pb.add_le([v[m], w[n]], [-ratio, -1.0], 0.0)
                    else:
                        pb.add_le([y[n], v[m], w[n]], [sm, -ratio, -1.0], 0.0)
        return y

    primary: dict[int, np.ndarray] = {}
    for j in range(nJ):
        primary[j] = vertex_block(j, str(j))

    obs_slacks = pb.add_vars("obs_slack", len(inst.observations), lb=0.0) if (
        elastic and inst.observations
    ) else None
    for d, (problem, x) in enumerate(inst.observations):
        j = vs.obs_vertex[d]
        if vs.vertices[j].obs_ids[0] == d:
            y = primary[j]
            s_d = atoms[j][0]
        else:
            z = loss_of(problem, x)
            s_d = z.values
            cset = rm.subgradient_set_for_probs(
                inst.reference, np.array([float(q) for q in problem.probs])
            )
            y = vertex_block(j, f"{j}obs{d}", override=(s_d, problem.probs, cset))
        if y.size != problem.n_atoms:
            raise DimensionMismatch(
                "observation vertex atoms must stay in scenario form for the "
                "forward-optimality constraint"
            )
        lhs_idx, lhs_val = list(y), list(s_d)
        if obs_slacks is not None:
            lhs_idx.append(int(obs_slacks[d]))
            lhs_val.append(-1.0)
        dualize_oracle_constraint(problem, pb, y, lhs_idx, lhs_val, tag=f"d{d}")

    pref_slacks = _pref_rows(pb, delta, vs.pref_pairs, elastic)
    return _Assembled(pb, u, delta, pref_slacks, obs_slacks)


# -- two-stage optimization ------------------------------------------------------


def _two_stage(build, vs: VertexSet) -> tuple[float, np.ndarray, dict]:
    asm = build()
    asm.pb.add_objective_terms([asm.u], [1.0])
    first = backend.solve(asm.pb)
    if first.status is Status.INFEASIBLE:
        raise InfeasibleInstance(
            "no candidate risk function is consistent with the observations "
            "and preferences; see diagnose_infeasibility"
        )
    if not first.ok:
        raise SolverFailure(f"imputation ended with status {first.status.value}")
    u_star = max(first.objective, 0.0)

    asm2 = build()
    asm2.pb._ub[asm2.u] = u_star  # cap at the stage-1 optimum; its solution stays feasible
    asm2.pb.add_objective_terms(asm2.delta, np.ones(asm2.delta.size))
    second = backend.solve(asm2.pb)
    if not second.ok:
        # Keep the stage-1 values: the tie-break is best effort.
        deltas = first.x[asm.delta]
        report = first
    else:
        deltas = second.x[asm2.delta]
        report = second
    diagnostics = {
        "stage1_status": first.status.value,
        "stage2_status": report.status.value,
        "residual": report.residual,
    }
    return u_star, np.asarray(deltas, dtype=float), diagnostics


def _active_constraints(vs: VertexSet, deltas: np.ndarray, ref_values: np.ndarray, u_star: float):
    band = [int(j) for j in range(deltas.size) if abs(abs(deltas[j] - ref_values[j]) - u_star) <= 1e-7]
    prefs = [
        k
        for k, (i, j) in enumerate(vs.pref_pairs)
        if i != j and abs(deltas[i] - deltas[j]) <= 1e-7
    ]
    return {"band_vertices": band, "tight_preferences": prefs}


def _snap_zero(deltas: np.ndarray, zero_index: int | None) -> np.ndarray:
    out = np.array(deltas, dtype=float)
    if zero_index is not None:
        out[zero_index] = 0.0
    return out


# -- the four solvers --------------------------------------------------------------


def solve_general(inst: InverseInstance) -> ImputedResult:
    """Families without law invariance: vertices and duals on the shared space."""
    if inst.family.law_invariant:
        raise ValueError("solve_general serves the cvx/cvx_measure families")
    vs = build_vertex_set(inst)
    u_star, deltas, diag = _two_stage(lambda: _assemble_general(inst, vs), vs)
    deltas = _snap_zero(deltas, vs.zero_index)
    probs = np.array([float(q) for q in _space_probs(inst)])
    function = dp.DualPwlRiskFunction(
        deltas=deltas,
        translation_invariant=inst.family.translation_invariant,
        law_invariant=False,
        vertex_losses=tuple(v.vector for v in vs.vertices),
        set_=rm.subgradient_set_for_probs(inst.reference, probs),
    )
    diag.update(_active_constraints(vs, deltas, vs.ref_values, u_star))
    return ImputedResult(function, u_star, deltas, vs.ref_values, diag)


def _law_instance_data(inst: InverseInstance, lifted: bool):
    vs = build_vertex_set(inst)
    if lifted:
        probs = _shared_space_checks(inst, law=True)
        M = len(probs)
        if any(p != Fraction(1, M) for p in probs):
            raise IncompatibleM("the lifted law-invariant solver expects a uniform space")
        c_sigma = rm.law_restricted_set(inst.reference, M)
        atoms = []
        uniform = tuple(Fraction(1, M) for _ in range(M))
        for v in vs.vertices:
            vec = v.vector if v.vector is not None else replicate(v.dist.support, v.dist, M)
            atoms.append((np.asarray(vec, dtype=float), uniform))
        csets = [c_sigma] * len(vs.vertices)
    else:
        atoms = [(v.values, v.probs) for v in vs.vertices]
        csets = [
            rm.subgradient_set_for_probs(inst.reference, np.array([float(q) for q in v.probs]))
            for v in vs.vertices
        ]
    return vs, atoms, csets


def _law_result(inst: InverseInstance, vs: VertexSet, u_star, deltas, diag) -> ImputedResult:
    deltas = _snap_zero(deltas, vs.zero_index)
    function = dp.DualPwlRiskFunction(
        deltas=deltas,
        translation_invariant=inst.family.translation_invariant,
        law_invariant=True,
        vertex_dists=tuple(v.dist for v in vs.vertices),
        set_family=inst.reference,
    )
    diag.update(_active_constraints(vs, deltas, vs.ref_values, u_star))
    return ImputedResult(function, u_star, deltas, vs.ref_values, diag)


def solve_law_invariant(inst: InverseInstance) -> ImputedResult:
    """Law-invariant families over a common uniform space (explicit lift)."""
    if not inst.family.law_invariant:
        raise ValueError("solve_law_invariant serves the law-invariant families")
    vs, atoms, csets = _law_instance_data(inst, lifted=True)
    u_star, deltas, diag = _two_stage(
        lambda: _assemble_reduced(inst, vs, atoms, csets), vs
    )
    return _law_result(inst, vs, u_star, deltas, diag)


def solve_reduced(inst: InverseInstance) -> ImputedResult:
    """Law-invariant families in support dimensions: no uniform lift is built.

    Observation vertices keep one atom per scenario so the forward-optimality
    constraint can couple the dual vector to the feasible set.
    """
    if not inst.family.law_invariant:
        raise ValueError("solve_reduced serves the law-invariant families")
    vs, atoms, csets = _law_instance_data(inst, lifted=False)
    u_star, deltas, diag = _two_stage(
        lambda: _assemble_reduced(inst, vs, atoms, csets), vs
    )
    return _law_result(inst, vs, u_star, deltas, diag)


def impute(inst: InverseInstance) -> ImputedResult:
    """Route an instance to its family's solver."""
    if inst.family.law_invariant:
        return solve_reduced(inst)
    return solve_general(inst)


def diagnose_infeasibility(inst: InverseInstance) -> InfeasibilityReport:
    """Minimal-total-violation elastic re-solve after an infeasible imputation.

    Preference and forward-optimality constraints get nonnegative slacks; the
    report lists the binding subset with its violation sizes.
    """
    tol = 1e-7
    if inst.family.law_invariant:
        vs, atoms, csets = _law_instance_data(inst, lifted=False)
        asm = _assemble_reduced(inst, vs, atoms, csets, elastic=True)
    else:
        vs = build_vertex_set(inst)
        asm = _assemble_general(inst, vs, elastic=True)
    terms_idx: list[int] = []
    if asm.pref_slacks is not None:
        terms_idx.extend(int(i) for i in asm.pref_slacks)
    if asm.obs_slacks is not None:
        terms_idx.extend(int(i) for i in asm.obs_slacks)
    if terms_idx:
        asm.pb.add_objective_terms(terms_idx, np.ones(len(terms_idx)))
    report = backend.solve(asm.pb)
    if not report.ok:
        raise SolverFailure(f"elastic diagnosis ended with status {report.status.value}")
    prefs = []
    if asm.pref_slacks is not None:
        for k, idx in enumerate(asm.pref_slacks):
            amount = float(report.x[idx])
            if amount > tol:
                prefs.append((k, amount))
    obs = []
    if asm.obs_slacks is not None:
        for d, idx in enumerate(asm.obs_slacks):
            amount = float(report.x[idx])
            if amount > tol:
                obs.append((d, amount))
    total = float(sum(a for _, a in prefs) + sum(a for _, a in obs))
    return InfeasibilityReport(total, tuple(prefs), tuple(obs))

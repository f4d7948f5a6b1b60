"""Forward risk minimization: affine losses over polyhedral feasible sets.

The loss of a decision x is the vector W x over the outcome atoms.  Minimizing
a supremum-representable risk function over x is a min-max problem; the inner
maximization over dual vectors is replaced by its LP (or second-order-cone)
dual, giving one joint minimization.  The entropic objective is smooth and is
minimized by projected gradient instead.
"""

from __future__ import annotations

import math

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from . import backend
from . import dualpwl as dp
from . import riskmeasures as rm
from .backend import ProgramBuilder, Status
from .errors import DimensionMismatch, SolverFailure, UnsupportedMeasure
from .probspace import OutcomeSpace, RandomLoss, ScenarioMap

__all__ = [
    "SimplexSet",
    "PolytopeSet",
    "ForwardProblem",
    "ForwardSolution",
    "loss_of",
    "linear_oracle",
    "dualize_oracle_constraint",
    "solve_forward",
    "solve_forward_entropic",
]


@dataclass(frozen=True)
class SimplexSet:
    """{x | 1'x = 1, x >= 0}: long-only full-investment portfolios."""

    n: int


@dataclass(frozen=True)
class PolytopeSet:
    """{x | A x <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if A.shape[0] != b.size:
            raise DimensionMismatch("A and b must have matching row counts")

    @property
    def n(self) -> int:
        return self.A.shape[1]


FeasibleSet = Union[SimplexSet, PolytopeSet]


def _check_polytope(feasible: PolytopeSet) -> None:
    # Two solves: emptiness, then boundedness.  The recession cone {Ar <= 0}
    # is trivial iff rank(A) = n and some strictly positive combination of the
    # rows vanishes (then Ar <= 0 forces Ar = 0, hence r = 0).
    pb = ProgramBuilder(sense="min")
    x = pb.add_vars("x", feasible.n)
    for row, rhs in zip(feasible.A, feasible.b):
        pb.add_le(x, row, float(rhs))
    if backend.solve(pb).status is Status.INFEASIBLE:
        raise ValueError("feasible set is empty")

    if np.linalg.matrix_rank(feasible.A) < feasible.n:
        raise ValueError("feasible set is unbounded")
    pb = ProgramBuilder(sense="min")
    mu = pb.add_vars("mu", feasible.A.shape[0], lb=1.0)
    for i in range(feasible.n):
        pb.add_eq(mu, feasible.A[:, i], 0.0)
    if backend.solve(pb).status is not Status.OPTIMAL:
        raise ValueError("feasible set is unbounded")


@dataclass(frozen=True)
class ForwardProblem:
    """Loss matrix W (atoms x assets) with Z(x) = W x, over rational atom masses."""

    W: np.ndarray
    probs: tuple[Fraction, ...]
    feasible: FeasibleSet

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        W.setflags(write=False)
        object.__setattr__(self, "W", W)
        probs = tuple(Fraction(p) if not isinstance(p, Fraction) else p for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not np.all(np.isfinite(W)):
            raise ValueError("loss matrix must be finite")
        if W.shape[0] != len(probs):
            raise DimensionMismatch("one probability per loss row is required")
        if W.shape[1] != self.feasible.n:
            raise DimensionMismatch("loss matrix and feasible set disagree on the asset count")
        if sum(probs) != 1 or any(p <= 0 for p in probs):
            raise ValueError("atom masses must be positive and sum to exactly 1")
        if isinstance(self.feasible, PolytopeSet):
            _check_polytope(self.feasible)

    @classmethod
    def portfolio(cls, returns: np.ndarray, probs=None) -> "ForwardProblem":
        """Long-only portfolio with losses = negated returns; duplicate days merged."""
        sm = ScenarioMap.from_rows(np.asarray(returns, dtype=float), probs)
        return cls(-sm.scenarios, sm.probs, SimplexSet(sm.scenarios.shape[1]))

    @property
    def n_assets(self) -> int:
        return self.W.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.W.shape[0]

    def space(self) -> OutcomeSpace:
        return OutcomeSpace(self.probs)

    def probs_array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    def check_feasible(self, x: np.ndarray, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if isinstance(self.feasible, SimplexSet):
            return bool(abs(x.sum() - 1.0) <= tol and np.all(x >= -tol))
        return bool(np.all(self.feasible.A @ x - self.feasible.b <= tol))


@dataclass(frozen=True)
class ForwardSolution:
    x: np.ndarray
    value: float
    diagnostics: dict

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


def loss_of(p: ForwardProblem, x: np.ndarray) -> RandomLoss:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != p.n_assets:
        raise DimensionMismatch(f"expected {p.n_assets} weights, got {x.size}")
    return RandomLoss(p.W @ x, p.space())


def linear_oracle(p: ForwardProblem, y: np.ndarray) -> tuple[float, np.ndarray]:
    """min_x y'(W x) over the feasible set: value and a minimizer."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size != p.n_atoms:
        raise DimensionMismatch("oracle direction must have one entry per atom")
    c = p.W.T @ y
    if isinstance(p.feasible, SimplexSet):
        i = int(np.argmin(c))
        x = np.zeros(p.n_assets)
        x[i] = 1.0
        return float(c[i]), x
    pb = ProgramBuilder(sense="min")
    x = pb.add_vars("x", p.n_assets)
    for row, rhs in zip(p.feasible.A, p.feasible.b):
        pb.add_le(x, row, float(rhs))
    pb.add_objective_terms(x, c)
    report = backend.solve(pb)
    if not report.ok:
        raise SolverFailure(f"linear oracle ended with status {report.status.value}")
    return report.objective, report.x[x]


def dualize_oracle_constraint(
    p: ForwardProblem,
    pb: ProgramBuilder,
    y: np.ndarray,
    lhs_indices,
    lhs_values,
    lhs_const: float = 0.0,
    tag: str = "",
) -> None:
    """Emit linear rows equivalent to  lhs <= min_x y'(W x)  with y a variable block.

    For a simplex feasible set the minimum is attained at a unit vector, so one
    row per asset suffices.  For a general polytope, strong LP duality supplies
    multipliers mu <= 0 with A'mu = W'y and lhs <= b'mu.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    lhs_indices = np.atleast_1d(np.asarray(lhs_indices, dtype=np.int64))
    lhs_values = np.atleast_1d(np.asarray(lhs_values, dtype=float))
    if isinstance(p.feasible, SimplexSet):
        for i in range(p.n_assets):
            pb.add_le(
                np.concatenate([lhs_indices, y]),
                np.concatenate([lhs_values, -p.W[:, i]]),
                -lhs_const,
            )
        return
    A, b = p.feasible.A, p.feasible.b
    mu = pb.add_vars(f"mu{tag}", A.shape[0], ub=0.0)
    for i in range(p.n_assets):
        pb.add_eq(
            np.concatenate([mu, y]),
            np.concatenate([A[:, i], -p.W[:, i]]),
            0.0,
        )
    pb.add_le(
        np.concatenate([lhs_indices, mu]),
        np.concatenate([lhs_values, -b]),
        -lhs_const,
    )


# -- min-max collapse ----------------------------------------------------------


def _as_dual_pwl(p: ForwardProblem, r) -> dp.DualPwlRiskFunction:
    if isinstance(r, dp.DualPwlRiskFunction):
        return r
    if isinstance(r, rm.Entropic):
        raise UnsupportedMeasure("use solve_forward_entropic for the smooth entropic objective")
    return dp.from_measure(r, law_invariant=True)


def _inner_program(p: ForwardProblem, f: dp.DualPwlRiskFunction):
    if f.law_invariant:
        return dp.reduced_evaluation_program(f, p.probs)
    if f.set_.dim != p.n_atoms:
        raise DimensionMismatch("function and problem live on different outcome spaces")
    return dp.general_evaluation_program(f)


def solve_forward(p: ForwardProblem, r) -> ForwardSolution:
    """Global minimizer of rho(W x) over the feasible set, as a single program.

    `r` may be a reference measure or an imputed risk function.  The inner
    evaluation maximum (in the dual vector y, for fixed x) is replaced by its
    dual minimization, leaving one joint minimization over x and multipliers.
    The entropic measure is routed to its dedicated smooth solver.
    """
    if isinstance(r, rm.Entropic):
        return solve_forward_entropic(p, r.s)
    f = _as_dual_pwl(p, r)
    inner, y_idx, t_idx = _inner_program(p, f)
    sf = backend.standard_form(inner)

    outer = ProgramBuilder(sense="min")
    x = outer.add_vars("x", p.n_assets)
    lam = outer.add_vars("lam", sf.g.size, lb=0.0)
    nu = outer.add_vars("nu", sf.e.size)
    soc_duals = []
    for bi, block in enumerate(sf.soc_blocks):
        u = outer.add_vars(f"u{bi}", block.size)
        outer.add_soc(int(u[0]), u[1:])
        soc_duals.append(u)

    # Stationarity rows: G' lam + E' nu - sum_i Sel_i' u_i = c0 + Cx x,
    # where the objective of the inner program is (W x) on the y block, -1 on t.
    Gc = sf.G.tocsc()
    Ec = sf.E.tocsc()
    soc_of_var: dict[int, list[tuple[int, int]]] = {}
    for bi, block in enumerate(sf.soc_blocks):
        for pos, j in enumerate(block):
            soc_of_var.setdefault(int(j), []).append((bi, pos))
    w_row_of = {int(j): a for a, j in enumerate(y_idx)}

    for j in range(sf.nvar):
        idx: list[int] = []
        val: list[float] = []
        lo, hi = Gc.indptr[j], Gc.indptr[j + 1]
        idx.extend(lam[Gc.indices[lo:hi]])
        val.extend(Gc.data[lo:hi])
        lo, hi = Ec.indptr[j], Ec.indptr[j + 1]
        idx.extend(nu[Ec.indices[lo:hi]])
        val.extend(Ec.data[lo:hi])
        for bi, pos in soc_of_var.get(j, ()):
            idx.append(int(soc_duals[bi][pos]))
            val.append(-1.0)
        rhs = -1.0 if j == t_idx else 0.0
        if j in w_row_of:
            idx.extend(x)
            val.extend(-p.W[w_row_of[j], :])
        outer.add_eq(idx, val, rhs)

    if isinstance(p.feasible, SimplexSet):
        outer.require_nonneg(x)
        outer.add_eq(x, np.ones(p.n_assets), 1.0)
    else:
        for row, rhs in zip(p.feasible.A, p.feasible.b):
            outer.add_le(x, row, float(rhs))

    if sf.g.size:
        outer.add_objective_terms(lam, sf.g)
    if sf.e.size:
        outer.add_objective_terms(nu, sf.e)

    report = backend.solve(outer)
    if not report.ok:
        raise SolverFailure(f"forward solve ended with status {report.status.value}")
    return ForwardSolution(
        x=report.x[x],
        value=report.objective,
        diagnostics={"status": report.status.value, "residual": report.residual},
    )


# -- entropic objective ----------------------------------------------------------


def project_to_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x | 1'x = 1, x >= 0}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, v.size + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _entropic_value_grad(W: np.ndarray, g: np.ndarray, s: float, x: np.ndarray):
    a = s * (W @ x)
    shift = float(np.max(a))
    e = g * np.exp(a - shift)
    total = float(e.sum())
    value = (shift + np.log(total)) / s
    grad = W.T @ (e / total)
    return value, grad


def solve_forward_entropic(
    p: ForwardProblem, s: float, tol: float = 1e-10, max_iter: int = 100_000
) -> ForwardSolution:
    """Minimize (1/s) log E[exp(s W x)] over the simplex by projected gradient.

    Backtracking line search with a unit-step optimality residual; restarts
    from every simplex vertex plus the barycenter guard against flat regions.
    """
    if not isinstance(p.feasible, SimplexSet):
        raise UnsupportedMeasure("the entropic solver is defined for the simplex feasible set")
    if s <= 0:
        raise ValueError("entropic parameter must be positive")
    W = p.W
    g = p.probs_array()
    n = p.n_assets

    starts = [np.eye(n)[i] for i in range(n)] + [np.full(n, 1.0 / n)]
    best_x = None
    best_val = np.inf
    hit_cap = False
    for x0 in starts:
        x, value, converged = _apg(W, g, s, x0, tol, max_iter)
        if not converged:
            hit_cap = True
        if value < best_val - 1e-15:
            best_val = value
            best_x = x
    return ForwardSolution(
        x=best_x,
        value=best_val,
        diagnostics={"max_iterations_hit": hit_cap, "starts": len(starts), "tol": tol},
    )


def _apg(W, g, s, x0, tol, max_iter):
    """Projected gradient in two phases.

    Phase 1 is accelerated (momentum with function-value restart) under a
    backtracking line search; Armijo comparisons hit double-precision
    resolution near an interior optimum, so phase 2 switches to plain
    projected steps at the constant step 1/L (L from the log-sum-exp Hessian
    bound s*sigma_max(W)^2), which contract the optimality residual to the
    floating-point floor without value comparisons.
    """
    coarse_tol = max(tol, 1e-7)
    x = project_to_simplex(np.asarray(x0, dtype=float))
    value, grad = _entropic_value_grad(W, g, s, x)
    x_prev = x.copy()
    theta_prev = 1.0
    step = 1.0
    spent = 0
    for _ in range(max_iter):
        spent += 1
        residual = float(np.linalg.norm(x - project_to_simplex(x - grad)))
        if residual <= coarse_tol:
            break
        theta = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta_prev * theta_prev))
        beta = (theta_prev - 1.0) / theta
        y = x + beta * (x - x_prev)
        y_val, y_grad = _entropic_value_grad(W, g, s, y)
        stalled = False
        while True:
            cand = project_to_simplex(y - step * y_grad)
            diff = cand - y
            cand_val, cand_grad = _entropic_value_grad(W, g, s, cand)
            if cand_val <= y_val + y_grad @ diff + (diff @ diff) / (2.0 * step) + 1e-18:
                break
            step *= 0.5
            if step < 1e-18:
                stalled = True
                break
        if not stalled and cand_val > value:
            # momentum overshot: restart from a plain projected step at x
            theta = 1.0
            while True:
                cand = project_to_simplex(x - step * grad)
                diff = cand - x
                cand_val, cand_grad = _entropic_value_grad(W, g, s, cand)
                if cand_val <= value + grad @ diff + (diff @ diff) / (2.0 * step) + 1e-18:
                    break
                step *= 0.5
                if step < 1e-18:
                    stalled = True
                    break
        if stalled:
            break
        x_prev = x
        x, value, grad = cand, cand_val, cand_grad
        theta_prev = theta
        step = min(step * 1.3, 1e8)

    fixed = 1.0 / (s * np.linalg.norm(W, 2) ** 2 + 1e-30)
    for _ in range(max(max_iter - spent, 1000)):
        _, grad = _entropic_value_grad(W, g, s, x)
        residual = float(np.linalg.norm(x - project_to_simplex(x - grad)))
        if residual <= tol:
            value, _ = _entropic_value_grad(W, g, s, x)
            return x, value, True
        nxt = project_to_simplex(x - fixed * grad)
        if np.array_equal(nxt, x):
            break  # floating-point floor reached
        x = nxt
    value, grad = _entropic_value_grad(W, g, s, x)
    residual = float(np.linalg.norm(x - project_to_simplex(x - grad)))
    return x, value, residual <= tol

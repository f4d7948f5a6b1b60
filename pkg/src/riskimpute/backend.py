"""Minimal convex-program layer: linear programs plus second-order-cone rows.

Programs are assembled row by row in insertion order and handed to HiGHS
(via scipy) when purely linear, or to Clarabel when a cone is present.  Both
solvers are deterministic, so identical construction order yields identical
reports.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import sets as S
from .errors import UnsupportedSet

__all__ = ["Status", "SolveReport", "ProgramBuilder", "solve", "embed_set", "StandardForm"]

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_TROUBLE = "numerical_trouble"


@dataclass(frozen=True)
class SolveReport:
    status: Status
    objective: float
    x: np.ndarray | None
    residual: float
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class _Rows:
    indices: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rhs: list = field(default_factory=list)

    def add(self, idx, val, b):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        val = np.atleast_1d(np.asarray(val, dtype=float))
        if idx.size != val.size:
            raise ValueError("row indices and coefficients must have equal length")
        if not np.all(np.isfinite(val)) or not np.isfinite(b):
            raise ValueError("constraint coefficients must be finite")
        self.indices.append(idx)
        self.values.append(val)
        self.rhs.append(float(b))

    def __len__(self):
        return len(self.rhs)

    def matrix(self, nvar: int) -> tuple[sparse.csr_matrix, np.ndarray]:
        if not self.rhs:
            return sparse.csr_matrix((0, nvar)), np.zeros(0)
        rows = np.concatenate(
            [np.full(ix.size, i, dtype=np.int64) for i, ix in enumerate(self.indices)]
        )
        cols = np.concatenate(self.indices)
        data = np.concatenate(self.values)
        A = sparse.coo_matrix((data, (rows, cols)), shape=(len(self.rhs), nvar)).tocsr()
        return A, np.asarray(self.rhs)


class ProgramBuilder:
    """Accumulates variables, linear rows, cone memberships, and an objective.

    Senses: "max" or "min".  All constraints must reference declared variables;
    rows are kept in insertion order for reproducibility.
    """

    def __init__(self, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.sense = sense
        self._names: list[str] = []
        self._lb: list[float | None] = []
        self._ub: list[float | None] = []
        self._le = _Rows()
        self._eq = _Rows()
        self._soc: list[np.ndarray] = []  # each: [t_index, v_1, ..., v_k]
        self._obj_idx: list[int] = []
        self._obj_val: list[float] = []

    # -- variables ---------------------------------------------------------

    @property
    def nvar(self) -> int:
        return len(self._names)

    def add_var(self, name: str, lb: float | None = None, ub: float | None = None) -> int:
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        return len(self._names) - 1

    def add_vars(self, name: str, n: int, lb: float | None = None, ub: float | None = None) -> np.ndarray:
        start = len(self._names)
        for k in range(n):
            self._names.append(f"{name}[{k}]")
            self._lb.append(lb)
            self._ub.append(ub)
        return np.arange(start, start + n, dtype=np.int64)

    def require_nonneg(self, indices) -> None:
        for j in np.atleast_1d(np.asarray(indices, dtype=np.int64)):
            lb = self._lb[j]
            self._lb[j] = 0.0 if lb is None else max(lb, 0.0)

    def fix(self, index: int, value: float) -> None:
        self._lb[index] = float(value)
        self._ub[index] = float(value)

    def _check(self, indices):
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        if idx.size and (idx.min() < 0 or idx.max() >= self.nvar):
            raise ValueError("constraint references an undeclared variable")
        return idx

    # -- constraints ---------------------------------------------------------

    def add_le(self, indices, values, rhs: float) -> None:
        self._le.add(self._check(indices), values, rhs)

    def add_eq(self, indices, values, rhs: float) -> None:
        self._eq.add(self._check(indices), values, rhs)

    def add_soc(self, t_index: int, vec_indices) -> None:
        """Membership ||x[vec]||_2 <= x[t]."""
        vec = self._check(vec_indices)
        block = np.concatenate([[int(t_index)], vec]).astype(np.int64)
        self._soc.append(block)

    @property
    def has_soc(self) -> bool:
        return bool(self._soc)

    # -- objective -----------------------------------------------------------

    def add_objective_terms(self, indices, values) -> None:
        idx = self._check(indices)
        val = np.atleast_1d(np.asarray(values, dtype=float))
        self._obj_idx.extend(int(i) for i in idx)
        self._obj_val.extend(float(v) for v in val)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.nvar)
        for i, v in zip(self._obj_idx, self._obj_val):
            c[i] += v
        return c

    # -- export --------------------------------------------------------------

    def bounds(self) -> list[tuple[float | None, float | None]]:
        return list(zip(self._lb, self._ub))

    def dump_lp(self) -> str:
        """Program as CPLEX LP-format text, for cross-checking with other solvers."""
        if self.has_soc:
            raise UnsupportedSet("LP-format dump is only defined for purely linear programs")
        lines = ["\\ riskimpute program dump"]
        lines.append("Maximize" if self.sense == "max" else "Minimize")
        c = self.objective_vector()
        terms = [f"{c[j]:+.17g} x{j}" for j in range(self.nvar) if c[j] != 0.0] or ["0 x0"]
        lines.append(" obj: " + " ".join(terms))
        lines.append("Subject To")
        for tag, rows, op in (("c", self._le, "<="), ("e", self._eq, "=")):
            for i, (idx, val, rhs) in enumerate(zip(rows.indices, rows.values, rows.rhs)):
                body = " ".join(f"{v:+.17g} x{j}" for j, v in zip(idx, val))
                lines.append(f" {tag}{i}: {body} {op} {rhs:.17g}")
        lines.append("Bounds")
        for j, (lb, ub) in enumerate(zip(self._lb, self._ub)):
            if lb is None and ub is None:
                lines.append(f" x{j} free")
            elif lb is not None and ub is not None:
                lines.append(f" {lb:.17g} <= x{j} <= {ub:.17g}")
            elif lb is not None:
                lines.append(f" x{j} >= {lb:.17g}")
            else:
                lines.append(f" -inf <= x{j} <= {ub:.17g}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class StandardForm:
    """Inequality/equality rows with variable bounds folded in: G x <= g, E x = e.

    All variables are free in this form; `soc_blocks` lists index blocks
    [t, v...] with the membership ||x[v]|| <= x[t].  Used to derive LP/conic
    duals when a min-max program is collapsed to a single solve.
    """

    G: sparse.csr_matrix
    g: np.ndarray
    E: sparse.csr_matrix
    e: np.ndarray
    soc_blocks: tuple[np.ndarray, ...]
    nvar: int


def standard_form(pb: ProgramBuilder) -> StandardForm:
    G, g = pb._le.matrix(pb.nvar)
    E, e = pb._eq.matrix(pb.nvar)
    extra_rows = []
    extra_rhs = []
    for j, (lb, ub) in enumerate(zip(pb._lb, pb._ub)):
        if lb is not None:
            extra_rows.append((j, -1.0))
            extra_rhs.append(-lb)
        if ub is not None:
            extra_rows.append((j, 1.0))
            extra_rhs.append(ub)
    if extra_rows:
        data = np.array([v for _, v in extra_rows])
        cols = np.array([j for j, _ in extra_rows], dtype=np.int64)
        rows = np.arange(len(extra_rows), dtype=np.int64)
        B = sparse.coo_matrix((data, (rows, cols)), shape=(len(extra_rows), pb.nvar)).tocsr()
        G = sparse.vstack([G, B]).tocsr()
        g = np.concatenate([g, np.asarray(extra_rhs)])
    return StandardForm(G, g, E, e, tuple(pb._soc), pb.nvar)


def _residual(pb: ProgramBuilder, x: np.ndarray) -> float:
    res = 0.0
    A, b = pb._le.matrix(pb.nvar)
    if b.size:
        res = max(res, float(np.max(A @ x - b, initial=0.0)))
    A, b = pb._eq.matrix(pb.nvar)
    if b.size:
        res = max(res, float(np.max(np.abs(A @ x - b), initial=0.0)))
    for j, (lb, ub) in enumerate(zip(pb._lb, pb._ub)):
        if lb is not None:
            res = max(res, lb - x[j])
        if ub is not None:
            res = max(res, x[j] - ub)
    for block in pb._soc:
        t, vec = x[block[0]], x[block[1:]]
        res = max(res, float(np.linalg.norm(vec) - t))
    return max(res, 0.0)


def _solve_lp(pb: ProgramBuilder, feas_tol: float) -> SolveReport:
    c = pb.objective_vector()
    sign = -1.0 if pb.sense == "max" else 1.0
    A_ub, b_ub = pb._le.matrix(pb.nvar)
    A_eq, b_eq = pb._eq.matrix(pb.nvar)
    res = linprog(
        sign * c,
        A_ub=A_ub if b_ub.size else None,
        b_ub=b_ub if b_ub.size else None,
        A_eq=A_eq if b_eq.size else None,
        b_eq=b_eq if b_eq.size else None,
        bounds=pb.bounds(),
        method="highs",
        options=dict(_HIGHS_OPTIONS),
    )
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        objective = float(c @ x)
        residual = _residual(pb, x)
        status = Status.OPTIMAL if residual <= feas_tol else Status.NUMERICAL_TROUBLE
        return SolveReport(status, objective, x, residual, res.message)
    if res.status == 2:
        return SolveReport(Status.INFEASIBLE, np.nan, None, np.inf, res.message)
    if res.status == 3:
        return SolveReport(Status.UNBOUNDED, np.nan, None, np.inf, res.message)
    return SolveReport(Status.NUMERICAL_TROUBLE, np.nan, None, np.inf, res.message)


def _solve_conic(pb: ProgramBuilder, feas_tol: float) -> SolveReport:
    import clarabel

    n = pb.nvar
    c = pb.objective_vector()
    sign = -1.0 if pb.sense == "max" else 1.0

    blocks = []
    rhs_parts = []
    cones = []
    E, e = pb._eq.matrix(n)
    if e.size:
        blocks.append(E)
        rhs_parts.append(e)
        cones.append(clarabel.ZeroConeT(e.size))
    G, g = pb._le.matrix(n)
    bound_rows = []
    bound_rhs = []
    for j, (lb, ub) in enumerate(zip(pb._lb, pb._ub)):
        if lb is not None:
            bound_rows.append((j, -1.0))
            bound_rhs.append(-lb)
        if ub is not None:
            bound_rows.append((j, 1.0))
            bound_rhs.append(ub)
    if bound_rows:
        data = np.array([v for _, v in bound_rows])
        cols = np.array([j for j, _ in bound_rows], dtype=np.int64)
        rows = np.arange(len(bound_rows), dtype=np.int64)
        B = sparse.coo_matrix((data, (rows, cols)), shape=(len(bound_rows), n)).tocsr()
        G = sparse.vstack([G, B]).tocsr()
        g = np.concatenate([g, np.asarray(bound_rhs)])
    if g.size:
        blocks.append(G)
        rhs_parts.append(g)
        cones.append(clarabel.NonnegativeConeT(g.size))
    for block in pb._soc:
        k = block.size
        sel = sparse.coo_matrix(
            (-np.ones(k), (np.arange(k), block)), shape=(k, n)
        ).tocsr()
        blocks.append(sel)
        rhs_parts.append(np.zeros(k))
        cones.append(clarabel.SecondOrderConeT(k))

    A = sparse.vstack(blocks).tocsc() if blocks else sparse.csc_matrix((0, n))
    b = np.concatenate(rhs_parts) if rhs_parts else np.zeros(0)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver = clarabel.DefaultSolver(sparse.csc_matrix((n, n)), sign * c, A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status == "Solved":
        x = np.asarray(sol.x, dtype=float)
        objective = float(c @ x)
        residual = _residual(pb, x)
        ok = residual <= feas_tol
        return SolveReport(Status.OPTIMAL if ok else Status.NUMERICAL_TROUBLE, objective, x, residual, status)
    if status == "PrimalInfeasible":
        return SolveReport(Status.INFEASIBLE, np.nan, None, np.inf, status)
    if status == "DualInfeasible":
        return SolveReport(Status.UNBOUNDED, np.nan, None, np.inf, status)
    return SolveReport(Status.NUMERICAL_TROUBLE, np.nan, None, np.inf, status)


def solve(pb: ProgramBuilder, feas_tol: float = 1e-8) -> SolveReport:
    """Solve the assembled program; never raises on solver outcomes.

    NumericalTrouble is a report status, not an exception; malformed programs
    fail earlier, at construction.
    """
    if pb.has_soc:
        return _solve_conic(pb, feas_tol)
    return _solve_lp(pb, feas_tol)


# -- constraint emission for structured dual sets ---------------------------


def embed_set(pb: ProgramBuilder, y: np.ndarray, c: S.SubgradientSet) -> None:
    """Write the constraints of R+ \\cap C onto the variable block `y`.

    Auxiliary variables are created as needed (one fresh block per call), so a
    set may be embedded several times in one program.
    """
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.size != c.dim:
        raise ValueError(f"variable block has size {y.size}, set lives in dimension {c.dim}")
    pb.require_nonneg(y)
    tag = f"emb{len(pb._names)}"

    if isinstance(c, S.FullSimplex):
        pb.add_eq(y, np.ones(y.size), 1.0)
    elif isinstance(c, S.Singleton):
        for j, v in zip(y, c.point):
            pb.fix(int(j), float(v))
    elif isinstance(c, S.CVaRBox):
        cap = c.probs / (1.0 - c.alpha)
        for j, u in zip(y, cap):
            pb.add_le([j], [1.0], float(u))
        pb.add_eq(y, np.ones(y.size), 1.0)
    elif isinstance(c, S.MADSet):
        h = pb.add_vars(f"{tag}.h", c.dim, lb=-1.0, ub=1.0)
        _deviation_rows(pb, y, h, c.gamma, c.probs)
    elif isinstance(c, S.SemidevSOC):
        h = pb.add_vars(f"{tag}.h", c.dim, lb=0.0)
        _deviation_rows(pb, y, h, c.gamma, c.probs)
        r = pb.add_vars(f"{tag}.r", c.dim)
        for rj, hj, p in zip(r, h, c.probs):
            pb.add_eq([rj, hj], [1.0, -float(np.sqrt(p))], 0.0)
        one = pb.add_var(f"{tag}.one", lb=1.0, ub=1.0)
        pb.add_soc(one, r)
    elif isinstance(c, S.TransportationPolytope):
        tau, K = c.probs.size, c.levels.size
        Q = pb.add_vars(f"{tag}.Q", tau * K, lb=0.0).reshape(tau, K)
        for o in range(tau):
            pb.add_eq(
                np.concatenate([[y[o]], Q[o]]),
                np.concatenate([[1.0], -c.levels]),
                0.0,
            )
            pb.add_eq(Q[o], np.ones(K), float(c.probs[o]))
        for k in range(K):
            pb.add_eq(Q[:, k], np.ones(tau), float(c.level_masses[k]))
    elif isinstance(c, S.MinkowskiMix):
        parts = []
        for ci, comp in enumerate(c.components):
            q = pb.add_vars(f"{tag}.q{ci}", comp.dim)
            embed_set(pb, q, comp)
            parts.append(q)
        for o in range(c.dim):
            idx = np.concatenate([[y[o]], [q[o] for q in parts]])
            val = np.concatenate([[1.0], [-w for w in c.weights]])
            pb.add_eq(idx, val, 0.0)
    elif isinstance(c, S.Polyhedron):
        for row, rhs in zip(c.A, c.b):
            nz = np.nonzero(row)[0]
            pb.add_le(y[nz], row[nz], float(rhs))
        for row, rhs in zip(c.E, c.f):
            nz = np.nonzero(row)[0]
            pb.add_eq(y[nz], row[nz], float(rhs))
    else:
        raise UnsupportedSet(f"no constraint description for {type(c).__name__}")


def _deviation_rows(pb: ProgramBuilder, y, h, gamma: float, probs: np.ndarray) -> None:
    # y_o = p_o (1 + gamma (h_o - p'h))
    tau = probs.size
    for o in range(tau):
        idx = np.concatenate([[y[o]], h])
        val = np.zeros(1 + tau)
        val[0] = 1.0
        val[1:] = gamma * float(probs[o]) * probs
        val[1 + o] -= gamma * float(probs[o])
        pb.add_eq(idx, val, float(probs[o]))


def membership(c: S.SubgradientSet, y_value: np.ndarray, feas_tol: float = 1e-8) -> bool:
    """Feasibility check: is `y_value` in R+ \\cap C?"""
    y_value = np.atleast_1d(np.asarray(y_value, dtype=float))
    if y_value.size != c.dim:
        return False
    if np.any(y_value < -feas_tol):
        return False
    pb = ProgramBuilder(sense="min")
    q = pb.add_vars("q", c.dim)
    embed_set(pb, q, c)
    for j, v in zip(q, y_value):
        pb.fix(int(j), float(v))
    report = solve(pb, feas_tol=feas_tol)
    return report.status is Status.OPTIMAL

"""Bounded-variable primal simplex for small dense linear programs.

Problems are stated as::

    minimize/maximize  c @ x
    subject to         row_lo <= A @ x <= row_hi
                       var_lo <=     x <= var_hi

Internally every row gets a slack ``s = A @ x`` bounded by the row limits, the
system is equilibrated (row then column scaling), and a two-phase revised
simplex runs with explicit artificial variables.  Two pivot rules are
available: ``"dantzig"`` (largest reduced cost, switching to Bland after a run
of degenerate steps) and ``"bland"`` (smallest index, cycle-free).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_DUAL_TOL = 1e-11
_PIVOT_TOL = 1e-10
_PHASE1_TOL = 1e-12
_MAX_ITER = 20_000
_DEGENERATE_RUN = 50


class LpProblemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LpProblem:
    A: np.ndarray
    row_lo: np.ndarray
    row_hi: np.ndarray
    var_lo: np.ndarray
    var_hi: np.ndarray
    var_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m, n = A.shape
        arrays = {
            "row_lo": np.broadcast_to(np.asarray(self.row_lo, float), (m,)).copy(),
            "row_hi": np.broadcast_to(np.asarray(self.row_hi, float), (m,)).copy(),
            "var_lo": np.broadcast_to(np.asarray(self.var_lo, float), (n,)).copy(),
            "var_hi": np.broadcast_to(np.asarray(self.var_hi, float), (n,)).copy(),
        }
        if not np.all(np.isfinite(A)):
            raise LpProblemError("constraint coefficients must be finite")
        for lo, hi in (("row_lo", "row_hi"), ("var_lo", "var_hi")):
            bad = np.flatnonzero(arrays[lo] > arrays[hi])
            if bad.size:
                raise LpProblemError(f"{lo} > {hi} at index {int(bad[0])}")
            if np.any(np.isnan(arrays[lo])) or np.any(np.isnan(arrays[hi])):
                raise LpProblemError(f"{lo}/{hi} contain NaN")
        A.flags.writeable = False
        object.__setattr__(self, "A", A)
        for name, value in arrays.items():
            value.flags.writeable = False
            object.__setattr__(self, name, value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def violations(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row and variable bound violations (positive where violated)."""
        act = self.A @ x
        row = np.maximum(self.row_lo - act, act - self.row_hi)
        var = np.maximum(self.var_lo - x, x - self.var_hi)
        return np.maximum(row, 0.0), np.maximum(var, 0.0)


@dataclass(frozen=True)
class LpResult:
    status: str
    value: float | None = None
    x: np.ndarray | None = None
    iterations: int = 0
    pivot_rule: str = "dantzig"
    row_activity: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _objective_vector(objective, n: int) -> np.ndarray:
    if isinstance(objective, (int, np.integer)):
        c = np.zeros(n)
        c[int(objective)] = 1.0
        return c
    c = np.asarray(objective, dtype=float)
    if c.shape != (n,):
        raise LpProblemError(f"objective has shape {c.shape}, expected ({n},)")
    return c


def _scales(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row max-norm scaling; returns row and column multipliers.

    Columns are left alone on purpose: decoy programs carry high-order columns
    with coefficients near 1e-13, and equilibrating those inflates the scaled
    bounds until the ratio and optimality tests lose their meaning.
    """
    rmax = np.abs(A).max(axis=1)
    r = np.ones(A.shape[0])
    r[rmax > 0] = 1.0 / rmax[rmax > 0]
    return r, np.ones(A.shape[1])


class _Simplex:
    def __init__(self, M, lo, hi, x, basis, rule):
        self.M = M
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = list(basis)
        self.rule = rule
        self.iterations = 0

    def run(self, cost: np.ndarray) -> str:
        M, lo, hi, x = self.M, self.lo, self.hi, self.x
        m, ntot = M.shape
        rule = self.rule
        degenerate_run = 0
        cscale = max(1.0, float(np.abs(cost).max()))
        while True:
            if self.iterations >= _MAX_ITER:
                raise RuntimeError("simplex iteration limit reached")
            basis = self.basis
            is_basic = np.zeros(ntot, bool)
            is_basic[basis] = True
            B = M[:, basis]
            nonbasic = ~is_basic
            rhs = -M[:, nonbasic] @ x[nonbasic]
            x[basis] = np.linalg.solve(B, rhs)
            y = np.linalg.solve(B.T, cost[basis])
            d = cost - M.T @ y
            d[is_basic] = 0.0
            tol = _DUAL_TOL * cscale
            can_up = nonbasic & (x < hi) & (d < -tol)
            can_down = nonbasic & (x > lo) & (d > tol)
            candidates = np.flatnonzero(can_up | can_down)
            if candidates.size == 0:
                return OPTIMAL
            active = rule if degenerate_run < _DEGENERATE_RUN else "bland"
            if active == "bland":
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(d[candidates]))])
            direction = 1.0 if can_up[j] else -1.0

            w = np.linalg.solve(B, M[:, j])
            delta = -direction * w  # change of x_B per unit step
            step = hi[j] - x[j] if direction > 0 else x[j] - lo[j]
            leave = -1
            best_piv = 0.0
            wmax = max(1.0, float(np.abs(w).max()))
            for i in range(m):
                di = delta[i]
                if abs(di) <= _PIVOT_TOL * wmax:
                    continue
                bi = basis[i]
                if di < 0:
                    if not np.isfinite(lo[bi]):
                        continue
                    t = (x[bi] - lo[bi]) / -di
                else:
                    if not np.isfinite(hi[bi]):
                        continue
                    t = (hi[bi] - x[bi]) / di
                t = max(t, 0.0)
                if t < step or (t == step and leave >= 0 and self._prefer(i, leave, abs(di), best_piv, active)):
                    step = t
                    leave = i
                    best_piv = abs(di)
            if not np.isfinite(step):
                return UNBOUNDED
            self.iterations += 1
            degenerate_run = degenerate_run + 1 if step == 0.0 else 0
            x[j] += direction * step
            x[basis] += delta * step
            if leave < 0:
                # entering variable reached its own bound; basis unchanged
                x[j] = hi[j] if direction > 0 else lo[j]
                continue
            out = basis[leave]
            x[out] = lo[out] if delta[leave] < 0 else hi[out]
            basis[leave] = j

    def _prefer(self, i, current, piv, best_piv, rule) -> bool:
        if rule == "bland":
            return self.basis[i] < self.basis[current]
        return piv > best_piv


def solve_lp(problem: LpProblem, objective, sense: str = "min",
             pivot_rule: str = "dantzig") -> LpResult:
    """Solve ``problem`` for a single-variable index or a linear objective."""
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")
    if pivot_rule not in ("dantzig", "bland"):
        raise ValueError(f"unknown pivot rule {pivot_rule!r}")
    A = problem.A
    m, n = A.shape
    c = _objective_vector(objective, n)
    if sense == "max":
        c = -c

    r, s = _scales(A)
    As = A * r[:, None] * s[None, :]
    ntot = n + m + m
    M = np.zeros((m, ntot))
    M[:, :n] = As
    M[:, n:n + m] = -np.eye(m)
    lo = np.concatenate([problem.var_lo / s, problem.row_lo * r, np.zeros(m)])
    hi = np.concatenate([problem.var_hi / s, problem.row_hi * r, np.full(m, np.inf)])
    cost = np.concatenate([c * s, np.zeros(2 * m)])

    x = np.zeros(ntot)
    finite_lo = np.isfinite(lo[:n + m])
    finite_hi = np.isfinite(hi[:n + m])
    start = np.where(finite_lo, lo[:n + m], np.where(finite_hi, hi[:n + m], 0.0))
    # slacks start at the feasible value closest to the current row activity
    activity = As @ start[:n]
    start[n:] = np.clip(activity, lo[n:n + m], hi[n:n + m])
    x[:n + m] = start
    residual = -(M[:, :n + m] @ x[:n + m])
    sign = np.where(residual >= 0, 1.0, -1.0)
    M[:, n + m:] = np.diag(sign)
    x[n + m:] = np.abs(residual)

    solver = _Simplex(M, lo, hi, x, range(n + m, ntot), pivot_rule)
    phase1 = np.concatenate([np.zeros(n + m), np.ones(m)])
    status = solver.run(phase1)
    scale = max(1.0, float(np.abs(start[n:]).max(initial=0.0)))
    if status != OPTIMAL or x[n + m:].sum() > _PHASE1_TOL * scale:
        log.debug("phase 1 ended with infeasibility %.3e", x[n + m:].sum())
        return LpResult(INFEASIBLE, iterations=solver.iterations, pivot_rule=pivot_rule)
    hi[n + m:] = 0.0
    x[n + m:] = np.minimum(x[n + m:], 0.0)
    status = solver.run(cost)
    if status != OPTIMAL:
        return LpResult(status, iterations=solver.iterations, pivot_rule=pivot_rule)
    xs = x[:n] * s
    # nonbasic variables sit exactly on bounds; clip basic round-off
    xs = np.clip(xs, problem.var_lo, problem.var_hi)
    value = float(_objective_vector(objective, n) @ xs)
    return LpResult(OPTIMAL, value, xs, solver.iterations, pivot_rule, A @ xs)

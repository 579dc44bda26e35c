"""Decoy-state bounds on the single-photon yield and phase error.

With Poisson sources every measured gain is a mixture of photon-number
yields::

    Q_kl e^(mu_k + nu_l)     = sum_ij mu_k^i nu_l^j / (i! j!) Y_ij
    E_kl Q_kl e^(mu_k + nu_l) = sum_ij mu_k^i nu_l^j / (i! j!) e_ij Y_ij

Only ``i, j < n_cut`` are kept as LP variables.  Dropped terms are
nonnegative and at most ``tail_kl = e^(mu_k+nu_l) - sum_{i,j<n_cut} coeff``
(every yield is <= 1), so the truncated sum lies in ``[LHS - tail, LHS]``.
Measured gains are widened by ``n_sigmas`` binomial standard deviations,
computed with at least one count so that an empty cell still gets a width.
The error rows use ``b_ij = e_ij Y_ij`` so both programs stay linear.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import N_INTENSITIES, Basis, ExperimentConfig
from .simplex import OPTIMAL, LpProblem, LpResult, solve_lp
from .tally import CellRates


class DecoyInputError(ValueError):
    pass


class DecoyInfeasibleError(RuntimeError):
    """The measured tables admit no photon-number model at this width."""


def poisson_tail_sum(mean: float, n_cut: int) -> float:
    """``sum_{i >= n_cut} mean^i / i!`` without cancellation."""
    if mean == 0.0:
        return 0.0
    term = mean ** n_cut / math.factorial(n_cut)
    total = 0.0
    i = n_cut
    while term > 0.0 and term > 1e-18 * total:
        total += term
        i += 1
        term *= mean / i
    return total


def coefficient_matrix(mu: np.ndarray, nu: np.ndarray, n_cut: int) -> np.ndarray:
    """Rows (k, l) in C order, columns (i, j) in C order."""
    i = np.arange(n_cut)
    fact = np.array([math.factorial(int(v)) for v in i], dtype=float)
    pa = mu[:, None] ** i[None, :] / fact  # 0**0 == 1 in numpy
    pb = nu[:, None] ** i[None, :] / fact
    return np.einsum("ki,lj->klij", pa, pb).reshape(len(mu) * len(nu), n_cut * n_cut)


def truncation_tails(mu: np.ndarray, nu: np.ndarray, n_cut: int) -> np.ndarray:
    out = np.empty(len(mu) * len(nu))
    for k, m in enumerate(mu):
        tm = poisson_tail_sum(float(m), n_cut)
        head_m = math.exp(m) - tm
        for l, n in enumerate(nu):
            tn = poisson_tail_sum(float(n), n_cut)
            out[k * len(nu) + l] = tm * math.exp(n) + head_m * tn
    return out


def var_index(i: int, j: int, n_cut: int) -> int:
    return i * n_cut + j


def _var_names(prefix: str, n_cut: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}{j}" if n_cut <= 10 else f"{prefix}[{i},{j}]"
                 for i in range(n_cut) for j in range(n_cut))


def _check_cells(rates: CellRates, basis: Basis):
    b = int(basis)
    for k in range(N_INTENSITIES):
        for l in range(N_INTENSITIES):
            if rates.empty[k, l, b]:
                raise DecoyInputError(f"missing cell (k={k}, l={l}, basis={basis.name}): nothing sent")


def lp_sigma(p, sent):
    """Binomial deviation of ``p`` with the rate floored at one count."""
    p = np.asarray(p, float)
    sent = np.asarray(sent, float)
    return np.sqrt(np.maximum(p, 1.0 / sent) * (1.0 - p) / sent)


def _build(lhs, sent, mu, nu, n_cut, n_sigmas, prefix) -> LpProblem:
    if n_cut < 2:
        raise DecoyInputError("photon cutoff must be >= 2")
    mu = np.asarray(mu, float)
    nu = np.asarray(nu, float)
    scale = np.exp(mu[:, None] + nu[None, :]).ravel()
    A = coefficient_matrix(mu, nu, n_cut)
    tails = truncation_tails(mu, nu, n_cut)
    lhs = np.asarray(lhs, float).ravel()
    sigma = lp_sigma(lhs, np.asarray(sent, float).ravel())
    lo = (lhs - n_sigmas * sigma) * scale - tails
    hi = (lhs + n_sigmas * sigma) * scale
    rows = tuple(f"k{k}l{l}" for k in range(len(mu)) for l in range(len(nu)))
    return LpProblem(A, lo, hi, np.zeros(n_cut * n_cut), np.ones(n_cut * n_cut),
                     _var_names(prefix, n_cut), rows)


def build_yield_constraints(rates: CellRates, basis: Basis, mu, nu, n_cut: int = 7,
                            n_sigmas: float = 3.0) -> LpProblem:
    """Gain rows over ``Y_ij`` for one basis."""
    _check_cells(rates, basis)
    b = int(basis)
    return _build(rates.Q[:, :, b], rates.sent[:, :, b], mu, nu, n_cut, n_sigmas, "Y")


def build_error_constraints(rates: CellRates, basis: Basis, mu, nu, n_cut: int = 7,
                            n_sigmas: float = 3.0) -> LpProblem:
    """Error-gain rows over ``b_ij = e_ij Y_ij`` for one basis."""
    _check_cells(rates, basis)
    b = int(basis)
    eq = rates.E[:, :, b] * rates.Q[:, :, b]
    return _build(eq, rates.sent[:, :, b], mu, nu, n_cut, n_sigmas, "b")


@dataclass(frozen=True)
class DecoyEstimate:
    y11_lower: float
    e11_upper: float
    y11_x_lower: float
    b11_x_upper: float
    statuses: dict[str, str]
    clamped: dict[str, bool] = field(default_factory=dict)
    diagnostics: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "y11_lower": self.y11_lower,
            "e11_upper": self.e11_upper,
            "y11_x_lower": self.y11_x_lower,
            "b11_x_upper": self.b11_x_upper,
            "statuses": dict(self.statuses),
            "clamped": dict(self.clamped),
            "diagnostics": {k: dict(v) for k, v in self.diagnostics.items()},
        }


def _diagnostics(problem: LpProblem, result: LpResult) -> dict[str, float]:
    act = result.row_activity
    slack = np.minimum(act - problem.row_lo, problem.row_hi - act)
    width = problem.row_hi - problem.row_lo
    return {
        "iterations": result.iterations,
        "min_row_slack": float(slack.min()),
        "active_rows": int(np.sum(slack <= 1e-9 * np.maximum(width, 1e-300))),
        "value": float(result.value),
    }


def _require(name: str, result: LpResult, n_sigmas: float, n_cut: int):
    if result.status != OPTIMAL:
        raise DecoyInfeasibleError(
            f"{name} LP is {result.status}: the measured gains are inconsistent with any "
            f"photon-number model at {n_sigmas:g} sigma and cutoff {n_cut}; "
            "try a wider fluctuation width or a larger photon cutoff")


def estimate(rates: CellRates, cfg: ExperimentConfig, *, n_sigmas: float | None = None,
             n_cut: int | None = None, pivot_rule: str = "dantzig") -> DecoyEstimate:
    """Lower-bound ``Y11`` (Z basis) and upper-bound ``e11`` (X basis).

    ``e11_upper = max b11 / min Y11`` with both programs built from X-basis
    data; the ratio is clamped to [0, 1] after solving and the clamp flagged.
    """
    n_sigmas = cfg.fluctuation_sigmas if n_sigmas is None else n_sigmas
    n_cut = cfg.photon_cutoff if n_cut is None else n_cut
    mu, nu = cfg.intensities_alice, cfg.intensities_bob
    target = var_index(1, 1, n_cut)

    problems = {
        "yield_z": build_yield_constraints(rates, Basis.Z, mu, nu, n_cut, n_sigmas),
        "yield_x": build_yield_constraints(rates, Basis.X, mu, nu, n_cut, n_sigmas),
        "error_x": build_error_constraints(rates, Basis.X, mu, nu, n_cut, n_sigmas),
    }
    senses = {"yield_z": "min", "yield_x": "min", "error_x": "max"}
    results = {name: solve_lp(p, target, senses[name], pivot_rule) for name, p in problems.items()}
    for name, result in results.items():
        _require(name, result, n_sigmas, n_cut)

    y11 = results["yield_z"].value
    y11_x = results["yield_x"].value
    b11 = results["error_x"].value
    clamped = {"y11_lower": False, "e11_upper": False}
    if y11 < 0.0 or y11 > 1.0:
        clamped["y11_lower"] = True
        y11 = min(max(y11, 0.0), 1.0)
    if y11_x > 0.0:
        e11 = b11 / y11_x
    else:
        e11 = math.inf if b11 > 0.0 else 0.0
    if not 0.0 <= e11 <= 1.0:
        clamped["e11_upper"] = True
        e11 = min(max(e11, 0.0), 1.0)
    return DecoyEstimate(
        y11_lower=y11, e11_upper=e11, y11_x_lower=y11_x, b11_x_upper=b11,
        statuses={name: r.status for name, r in results.items()},
        clamped=clamped,
        diagnostics={name: _diagnostics(problems[name], r) for name, r in results.items()},
    )

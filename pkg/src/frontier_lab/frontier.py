"""Equality-constrained minimum-variance frontiers.

The program ``min w' S w  s.t.  1'w = 1, mu_hat'w = R`` has a closed-form
KKT solution ``w = S^{-1} A (A' S^{-1} A)^{-1} b`` with ``A = [1 | mu_hat]``
and ``b = (1, R)``.  The covariance is factored once per sweep and every
target reuses the factorization; one iterative-refinement step keeps the
constraint residuals at rounding level.  Frontier variance is therefore an
exact quadratic in the target return, which the convexity diagnostics
verify.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateStructureError, InsufficientDataError
from .geometry import AlignmentFamily, SignalVector, SpdCovariance

DEFAULT_SPAN = (1.5, 1.5)


@dataclass(frozen=True)
class FrontierPoint:
    """One solved target: requested return, realized return, risk, weights."""

    target_return: float
    realized_return: float
    volatility: float
    weights: np.ndarray


@dataclass(frozen=True)
class Frontier:
    """Ordered frontier points plus the signals that produced/evaluated them."""

    points: tuple[FrontierPoint, ...]
    optimization_signal: SignalVector
    evaluation_signal: SignalVector
    skipped_targets: tuple[float, ...] = ()

    def targets(self) -> np.ndarray:
        return np.array([p.target_return for p in self.points])

    def realized_returns(self) -> np.ndarray:
        return np.array([p.realized_return for p in self.points])

    def volatilities(self) -> np.ndarray:
        return np.array([p.volatility for p in self.points])


class _KktSystem:
    """Factored two-constraint system shared by all targets of one sweep."""

    def __init__(self, mu_hat: np.ndarray, cov: SpdCovariance):
        n = cov.n
        if mu_hat.shape != (n,):
            raise DegenerateStructureError(
                f"signal of shape {mu_hat.shape} does not match covariance dim {n}"
            )
        spread = np.max(np.abs(mu_hat - mu_hat.mean()))
        if spread <= 1e-13 * max(1.0, np.max(np.abs(mu_hat))):
            raise DegenerateStructureError(
                "optimization signal is proportional to the all-ones vector; "
                "the two equality constraints are degenerate"
            )
        self.mu_hat = mu_hat
        self.sigma = cov.matrix
        self.chol = cho_factor(cov.matrix, lower=True)
        self.a = np.column_stack([np.ones(n), mu_hat])
        self.sinv_a = cho_solve(self.chol, self.a)
        self.gram = self.a.T @ self.sinv_a  # A' S^{-1} A, SPD 2x2

    def solve(self, target: float) -> np.ndarray:
        b = np.array([1.0, target])
        y = np.linalg.solve(self.gram, b)
        w = self.sinv_a @ y
        # One refinement step drives the constraint residual to rounding level.
        resid = b - self.a.T @ w
        w = w + self.sinv_a @ np.linalg.solve(self.gram, resid)
        return w


def min_variance_at_target(
    mu_hat: SignalVector,
    cov: SpdCovariance,
    target: float,
    mu_eval: SignalVector | None = None,
) -> FrontierPoint:
    """Minimum-variance weights hitting ``target`` under ``mu_hat``.

    ``mu_eval`` (default: the optimization signal itself) is the signal the
    realized return is measured against.

    Raises
    ------
    DegenerateStructureError
        If ``mu_hat`` is proportional to the all-ones vector.
    """
    system = _KktSystem(mu_hat.values, cov)
    return _point_from_weights(system, float(target), mu_eval or mu_hat)


def _point_from_weights(system: _KktSystem, target: float, mu_eval: SignalVector) -> FrontierPoint:
    w = system.solve(target)
    realized = float(mu_eval.values @ w)
    vol = float(np.sqrt(w @ system.sigma @ w))
    return FrontierPoint(target_return=target, realized_return=realized, volatility=vol, weights=w)


def sweep_frontier(
    mu_hat: SignalVector,
    cov: SpdCovariance,
    n_points: int = 50,
    span: tuple[float, float] = DEFAULT_SPAN,
    mu_eval: SignalVector | None = None,
) -> Frontier:
    """Frontier over evenly spaced targets in [min(mu_hat)*lo, max(mu_hat)*hi].

    The span multipliers are applied literally (a negative minimum extends
    the grid downward).  Targets whose solve yields non-finite weights are
    skipped and recorded in ``skipped_targets``; with an SPD covariance and
    a non-degenerate signal this does not happen, but the record keeps
    reports auditable.
    """
    if n_points < 3:
        raise InsufficientDataError(f"need at least 3 targets, got {n_points}")
    evaluation = mu_eval or mu_hat
    system = _KktSystem(mu_hat.values, cov)
    lo_mult, hi_mult = span
    lo = float(mu_hat.values.min()) * lo_mult
    hi = float(mu_hat.values.max()) * hi_mult
    targets = np.sort(np.linspace(lo, hi, n_points))
    points: list[FrontierPoint] = []
    skipped: list[float] = []
    for target in targets:
        point = _point_from_weights(system, float(target), evaluation)
        if np.all(np.isfinite(point.weights)) and np.isfinite(point.volatility):
            points.append(point)
        else:
            skipped.append(float(target))
    if not points:
        raise DegenerateStructureError("every target degenerated; frontier is empty")
    return Frontier(
        points=tuple(points),
        optimization_signal=mu_hat,
        evaluation_signal=evaluation,
        skipped_targets=tuple(skipped),
    )


def frontier_under_misalignment(
    mu: SignalVector,
    family: AlignmentFamily,
    cov: SpdCovariance,
    n_points: int = 50,
    span: tuple[float, float] = DEFAULT_SPAN,
) -> list[tuple[float, Frontier]]:
    """One frontier per rotation angle, optimized on mu(theta), scored on mu."""
    out: list[tuple[float, Frontier]] = []
    for theta in family.theta_grid:
        mu_theta = family.mu_tilde(theta)
        out.append((theta, sweep_frontier(mu_theta, cov, n_points, span, mu_eval=mu)))
    return out


@dataclass(frozen=True)
class ConvexityReport:
    """Diagnostics for smoothness/convexity of variance vs. target return."""

    min_second_divided_difference: float
    quadratic_fit_residual: float
    quadratic_r2: float
    leading_coefficient: float
    positive_realized_slope: bool

    def is_convex(self, tol: float = 1e-10) -> bool:
        return self.min_second_divided_difference >= -tol and self.leading_coefficient > 0.0


def convexity_report(front: Frontier) -> ConvexityReport:
    """Second-divided-difference and quadratic-fit diagnostics of a frontier.

    ``positive_realized_slope`` records whether realized return rises with
    the target along the sweep, i.e. whether the evaluation signal is
    positively aligned (in the budget-projected V^{-1} sense) with the
    optimization signal.
    """
    if len(front.points) < 3:
        raise InsufficientDataError(f"need at least 3 points, got {len(front.points)}")
    targets = front.targets()
    realized = front.realized_returns()
    var = front.volatilities() ** 2

    first = np.diff(var) / np.diff(targets)
    second = np.diff(first) / (targets[2:] - targets[:-2])
    min_sdd = float(second.min())

    coeffs = np.polyfit(targets, var, 2)
    fitted = np.polyval(coeffs, targets)
    resid = float(np.max(np.abs(fitted - var)))
    ss_res = float(np.sum((fitted - var) ** 2))
    ss_tot = float(np.sum((var - var.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot

    slope = np.polyfit(targets, realized, 1)[0]
    return ConvexityReport(
        min_second_divided_difference=min_sdd,
        quadratic_fit_residual=resid,
        quadratic_r2=float(r2),
        leading_coefficient=float(coeffs[0]),
        positive_realized_slope=bool(slope > 0.0),
    )

"""Closed-form omitted-variable-bias algebra.

Covers the confounder-bias formula for a single omitted factor, the
two-asset exposure distortion it induces, the structural-cancellation
slope, and the exact attenuation law for a noisy nearly-cancelling
confounder, together with its bounds, derivative, and non-inversion
condition.

Two normalization conventions for the confounder channel are supported
everywhere a denominator appears (see :func:`attenuated_slope`):

``"matched"``
    The channel is rescaled by its exact standard deviation
    ``sqrt(alpha**2 + sigma_eta**2 + sigma_zeta**2)``, so the structural
    loading acts on a unit-variance regressor.  This is the convention the
    simulation protocol uses and the one the golden tables pin; with
    ``sigma_eta**2 = 1 - alpha**2`` the denominator reduces to
    ``sqrt(1 + sigma_zeta**2)``.

``"stated"``
    The literal denominator ``sqrt(1 + sigma_eta**2 + sigma_zeta**2)``.
    It equals the matched one only when ``alpha**2 = 1``; it is kept so the
    textbook form of the law can be evaluated as written.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateStructureError, DomainError
from .stochastics import RngStream, normals_from

NORMALIZATIONS = ("matched", "stated")


@dataclass(frozen=True)
class ConfounderModel:
    """One asset's loadings in the omitted-confounder factor model.

    ``beta_n`` is the true loading on the observed factor, ``gamma_n`` the
    exposure to the omitted confounder, and ``delta`` the correlation
    between confounder and observed factor (both unit variance, so
    ``|delta| <= 1``).
    """

    beta_n: float
    gamma_n: float
    delta: float

    def __post_init__(self) -> None:
        if not abs(self.delta) <= 1.0:
            raise DomainError(f"delta must lie in [-1, 1], got {self.delta}")


@dataclass(frozen=True)
class TwoAssetStructure:
    """True 2x2 loading matrix [[g1, b1], [g2, b2]] and a target exposure.

    Column 0 holds the confounder loadings, column 1 the observed-factor
    loadings.  ``target_exposure`` defaults to (0, 1): no confounder
    exposure, unit factor exposure.
    """

    b_true: np.ndarray
    target_exposure: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        b = np.asarray(self.b_true, dtype=np.float64)
        if b.shape != (2, 2):
            raise DomainError(f"b_true must be 2x2, got shape {b.shape}")
        object.__setattr__(self, "b_true", b)
        object.__setattr__(self, "target_exposure", tuple(float(c) for c in self.target_exposure))


@dataclass(frozen=True)
class CancellationParams:
    """Parameters of the noisy-cancellation generative model.

    The observed feature is X ~ N(0,1); the latent channel is
    ``Z' = -alpha*X + eta + zeta`` with ``eta ~ N(0, sigma_eta**2)`` and
    ``zeta ~ N(0, sigma_zeta**2)`` independent of X; the outcome is
    ``Y = beta*X + gamma*Z_normalized + eps`` with
    ``eps ~ N(0, sigma_eps**2)``.
    """

    alpha: float
    beta: float
    gamma: float
    sigma_eta: float
    sigma_zeta: float
    sigma_eps: float = 1.0

    def __post_init__(self) -> None:
        for name in ("sigma_eta", "sigma_zeta", "sigma_eps"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be nonnegative, got {getattr(self, name)}")


def biased_loading(model: ConfounderModel) -> float:
    """Estimated loading when the confounder is omitted: beta + gamma*delta."""
    return model.beta_n + model.gamma_n * model.delta


def biased_loading_inflated_variance(model: ConfounderModel) -> float:
    """The (beta + gamma*delta) / (1 + delta**2) variant.

    Arises when the observed factor is (incorrectly) assigned variance
    1 + delta**2 instead of 1; retained so the normalization-comparison
    table can be reproduced side by side with :func:`biased_loading`.
    """
    return (model.beta_n + model.gamma_n * model.delta) / (1.0 + model.delta**2)


def misspecified_exposure(
    structure: TwoAssetStructure, delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Weights and realized exposure of the solve that uses biased loadings.

    The investor targets ``target_exposure`` using the biased loadings
    ``bhat_i = beta_i + gamma_i * delta``; the realized exposure is
    evaluated against the true loading matrix.  For the default target
    (0, 1) the closed forms are

    ``weights = (-1, 1) / (bhat_2 - bhat_1)`` and
    ``realized = (g2 - g1, b2 - b1) / (bhat_2 - bhat_1)``.

    Raises
    ------
    DegenerateStructureError
        If ``bhat_2 == bhat_1`` (weights unbounded).
    """
    if not abs(delta) <= 1.0:
        raise DomainError(f"delta must lie in [-1, 1], got {delta}")
    b = structure.b_true
    g1, b1 = b[0, 0], b[0, 1]
    g2, b2 = b[1, 0], b[1, 1]
    bhat1 = b1 + g1 * delta
    bhat2 = b2 + g2 * delta
    denom = bhat2 - bhat1
    scale = max(abs(bhat1), abs(bhat2), 1.0)
    if abs(denom) <= 1e-14 * scale:
        raise DegenerateStructureError(
            f"biased loadings coincide (bhat1 = bhat2 = {bhat1}); weights are unbounded"
        )
    c0, c1 = structure.target_exposure
    if (c0, c1) == (0.0, 1.0):
        weights = np.array([-1.0 / denom, 1.0 / denom])
        realized = np.array([(g2 - g1) / denom, (b2 - b1) / denom])
    else:
        # General 2x2 solve: rows are (budget-neutrality, estimated loading).
        weights = np.array([(bhat2 * c0 - c1) / denom, (c1 - bhat1 * c0) / denom])
        realized = b.T @ weights
    return weights, realized


def _denominator_sq(params: CancellationParams, normalization: str, sigma_zeta: float) -> float:
    if normalization == "matched":
        base = params.alpha**2 + params.sigma_eta**2
    elif normalization == "stated":
        base = 1.0 + params.sigma_eta**2
    else:
        raise DomainError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    d = base + sigma_zeta**2
    if d <= 0.0:
        raise DomainError("confounder channel has zero variance; normalization undefined")
    return d


def attenuated_slope(params: CancellationParams, normalization: str = "matched") -> float:
    """Population OLS slope of Y on X when the noisy channel is omitted.

    ``beta - alpha*gamma / sqrt(D + sigma_zeta**2)`` where ``D`` depends on
    the normalization convention (module docstring).  Strictly increasing
    in ``sigma_zeta`` whenever ``alpha*gamma > 0`` and converging to
    ``beta`` as the noise grows.
    """
    d = _denominator_sq(params, normalization, params.sigma_zeta)
    return params.beta - params.alpha * params.gamma / math.sqrt(d)


def attenuation_derivative(params: CancellationParams, normalization: str = "matched") -> float:
    """d(slope)/d(sigma_zeta): alpha*gamma*sigma_zeta / (D + sigma_zeta**2)**1.5."""
    d = _denominator_sq(params, normalization, params.sigma_zeta)
    return params.alpha * params.gamma * params.sigma_zeta / d**1.5


def attenuation_bounds(
    params: CancellationParams, normalization: str = "matched"
) -> tuple[float, float]:
    """Sharp (lower, upper) envelope of the slope over all sigma_zeta >= 0.

    For ``alpha*gamma >= 0`` this is ``(beta - alpha*gamma/sqrt(D0), beta)``
    with the lower end attained at ``sigma_zeta = 0``; for negative
    ``alpha*gamma`` the inequalities reverse.
    """
    d0 = _denominator_sq(params, normalization, 0.0)
    pull = params.alpha * params.gamma / math.sqrt(d0)
    lo, hi = params.beta - pull, params.beta
    return (lo, hi) if lo <= hi else (hi, lo)


def non_inversion_check(params: CancellationParams, normalization: str = "matched") -> bool:
    """True iff the slope keeps the sign of beta for every sigma_zeta >= 0.

    For ``beta > 0`` the condition is ``alpha*gamma <= beta * sqrt(D0)``;
    the mirrored condition applies for ``beta < 0``.  ``beta == 0`` only
    avoids inversion when the confounding pull vanishes.
    """
    d0 = _denominator_sq(params, normalization, 0.0)
    pull = params.alpha * params.gamma
    if params.beta > 0.0:
        return pull <= params.beta * math.sqrt(d0)
    if params.beta < 0.0:
        return pull >= params.beta * math.sqrt(d0)
    return pull == 0.0


def cancellation_slope(beta: float, alpha: float, gamma: float) -> float:
    """Noise-free structural-cancellation slope: beta - alpha*gamma.

    Keeps the sign of beta whenever ``0 < alpha*gamma < beta`` (attenuation
    without inversion); inversion requires ``alpha*gamma > beta``.
    """
    return beta - alpha * gamma


def simulate_attenuation_draws(
    params: CancellationParams,
    stream: RngStream,
    n: int,
    normalization: str = "matched",
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(x, y)`` from the noisy-cancellation model for one MC cell.

    Channels 0..3 of ``stream`` supply X, eta, zeta, eps in that order, so
    the draw is a pure function of the stream.  Under ``"matched"`` the
    channel is divided by its exact standard deviation, so the regression
    of y on x estimates :func:`attenuated_slope` with the same convention.
    """
    if n < 1:
        raise DomainError(f"n must be positive, got {n}")
    x = normals_from(stream.generator(0), n)
    eta = params.sigma_eta * normals_from(stream.generator(1), n)
    zeta = params.sigma_zeta * normals_from(stream.generator(2), n)
    z_raw = -params.alpha * x + eta + zeta
    z_norm = z_raw / math.sqrt(_denominator_sq(params, normalization, params.sigma_zeta))
    eps = params.sigma_eps * normals_from(stream.generator(3), n)
    y = params.beta * x + params.gamma * z_norm + eps
    return x, y

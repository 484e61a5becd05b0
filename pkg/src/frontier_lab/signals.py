"""Signal generation and estimation for the misspecification experiments.

Houses the confounded data-generating processes (linear cancellation and
the nonlinear tanh/sin model), a from-scratch logistic fitter (IRLS), the
probability-to-weight map, signed power transforms, and sign-agreement
summaries between true and surrogate weight vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import rankdata

from .errors import DomainError, InsufficientDataError, ShapeError, SingularityError
from .geometry import SignalVector
from .stochastics import RngStream, SamplePanel, normals_from, open_uniforms

SEPARATION_CAP = 1e3
RIDGE_JITTER = 1e-10


@dataclass(frozen=True)
class NonlinearDgpConfig:
    """Configuration of the nonlinear confounded return model.

    The latent confounder is ``Z = alpha_weights . X[:k] + noise_scale*N(0,1)``
    and per-asset success probabilities are ``expit(tanh(X_j) + 0.5 sin(Z))``;
    returns scale the centered probabilities and add observation noise.
    """

    n_obs: int = 1000
    n_assets: int = 5
    alpha_weights: tuple[float, ...] = (0.7, 0.3)
    noise_scale: float = 1.0
    return_scale: float = 2.0
    return_noise: float = 0.05

    def __post_init__(self) -> None:
        if self.n_obs < 10:
            raise DomainError(f"n_obs must be at least 10, got {self.n_obs}")
        if self.n_assets < 1:
            raise DomainError(f"n_assets must be positive, got {self.n_assets}")
        if len(self.alpha_weights) > self.n_assets:
            raise DomainError("more confounder weights than features")
        if self.noise_scale < 0 or self.return_noise < 0:
            raise DomainError("noise scales must be nonnegative")


@dataclass(frozen=True)
class LogisticModel:
    """Fitted logistic regression (intercept kept separate)."""

    coefficients: np.ndarray
    intercept: float
    converged: bool
    n_iterations: int

    def predict_prob(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        return expit(self.intercept + features @ self.coefficients)


@dataclass(frozen=True)
class WeightPair:
    """Matched true/surrogate weight vectors, both in [-1, 1]."""

    omega_true: np.ndarray
    omega_pred: np.ndarray

    def __post_init__(self) -> None:
        wt = np.asarray(self.omega_true, dtype=np.float64).ravel()
        wp = np.asarray(self.omega_pred, dtype=np.float64).ravel()
        if wt.shape != wp.shape:
            raise ShapeError(f"weight vectors differ in length: {wt.size} vs {wp.size}")
        if wt.size == 0:
            raise InsufficientDataError("weight vectors are empty")
        for name, w in (("omega_true", wt), ("omega_pred", wp)):
            if np.any(np.abs(w) > 1.0 + 1e-12):
                raise DomainError(f"{name} has entries outside [-1, 1]")
        object.__setattr__(self, "omega_true", wt)
        object.__setattr__(self, "omega_pred", wp)


def generate_cancellation_dataset(
    stream: RngStream,
    n: int,
    alpha: float,
    b_x: float = 1.0,
    b_z: float = 0.25,
) -> tuple[SamplePanel, np.ndarray]:
    """Linear cancellation data: confounder ``Z' = -alpha*X + eta``.

    ``eta ~ N(0, 1 - alpha**2)`` keeps Var(Z') = 1, so ``|alpha| < 1`` is
    required.  Outcomes are Bernoulli of ``expit(b_x*X + b_z*Z')``; the
    panel columns are ("x", "z_prime", "y") and the true probabilities are
    returned alongside.
    """
    if not abs(alpha) < 1.0:
        raise DomainError(f"|alpha| must be < 1 so the eta variance stays positive, got {alpha}")
    if n < 2:
        raise InsufficientDataError(f"need n >= 2 observations, got {n}")
    x = normals_from(stream.generator(0), n)
    eta = np.sqrt(1.0 - alpha**2) * normals_from(stream.generator(1), n)
    z_prime = -alpha * x + eta
    p_true = expit(b_x * x + b_z * z_prime)
    y = (open_uniforms(stream.generator(2), n) < p_true).astype(np.float64)
    panel = SamplePanel(values=np.column_stack([x, z_prime, y]), column_names=("x", "z_prime", "y"))
    return panel, p_true


def generate_nonlinear_dataset(
    config: NonlinearDgpConfig, stream: RngStream
) -> tuple[SamplePanel, np.ndarray, np.ndarray, SamplePanel]:
    """Nonlinear confounded draws: (features, outcomes, p_true, returns).

    Features are i.i.d. standard normal; outcomes are Bernoulli of the
    per-asset probabilities; returns are
    ``return_scale * (2*p_true - 1) + return_noise * N(0,1)``.
    """
    n, k = config.n_obs, config.n_assets
    x = normals_from(stream.generator(0), n * k).reshape(n, k)
    weights = np.asarray(config.alpha_weights, dtype=np.float64)
    z = x[:, : weights.size] @ weights + config.noise_scale * normals_from(stream.generator(1), n)
    logit_true = np.tanh(x) + 0.5 * np.sin(z)[:, None]
    p_true = expit(logit_true)
    outcomes = (
        open_uniforms(stream.generator(2), n * k).reshape(n, k) < p_true
    ).astype(np.float64)
    returns = config.return_scale * (2.0 * p_true - 1.0) + config.return_noise * normals_from(
        stream.generator(3), n * k
    ).reshape(n, k)
    feature_names = tuple(f"x_{j}" for j in range(k))
    asset_names = tuple(f"asset_{j}" for j in range(k))
    features = SamplePanel(values=x, column_names=feature_names)
    return features, outcomes, p_true, SamplePanel(values=returns, column_names=asset_names)


def fit_logistic(
    features,
    outcomes,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> LogisticModel:
    """Maximum-likelihood logistic fit by iteratively reweighted least squares.

    An intercept is always included.  Convergence requires the score norm
    scaled by n to fall below ``tol``.  Runs that push any coefficient past
    ``SEPARATION_CAP`` are stopped with a separation warning and the capped
    model; singular weighted systems get one ridge-jittered retry.

    Raises
    ------
    DomainError
        If outcomes are not all 0/1.
    InsufficientDataError
        If there are fewer observations than parameters.
    SingularityError
        If the weighted system stays singular after jittering.
    """
    x = features.values if isinstance(features, SamplePanel) else np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(outcomes, dtype=np.float64).ravel()
    if y.size != x.shape[0]:
        raise ShapeError(f"{y.size} outcomes for {x.shape[0]} feature rows")
    if np.any((y != 0.0) & (y != 1.0)):
        raise DomainError("outcomes must be 0/1")
    n, k = x.shape
    if n < k + 1:
        raise InsufficientDataError(f"need at least {k + 1} observations for {k} features, got {n}")

    design = np.column_stack([np.ones(n), x])
    params = np.zeros(k + 1)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = expit(design @ params)
        score = design.T @ (y - p)
        if np.linalg.norm(score) / n <= tol:
            converged = True
            break
        w = p * (1.0 - p)
        hessian = (design * w[:, None]).T @ design
        try:
            step = np.linalg.solve(hessian, score)
        except np.linalg.LinAlgError:
            hessian = hessian + RIDGE_JITTER * np.eye(k + 1)
            try:
                step = np.linalg.solve(hessian, score)
            except np.linalg.LinAlgError as exc:
                raise SingularityError("weighted least-squares system is singular") from exc
        params = params + step
        if np.max(np.abs(params)) > SEPARATION_CAP:
            params = np.clip(params, -SEPARATION_CAP, SEPARATION_CAP)
            warnings.warn(
                "logistic fit appears separated; coefficients capped at "
                f"{SEPARATION_CAP:g}",
                RuntimeWarning,
                stacklevel=2,
            )
            break
    return LogisticModel(
        coefficients=params[1:],
        intercept=float(params[0]),
        converged=converged,
        n_iterations=iterations,
    )


def fitted_probabilities(
    features, outcomes: np.ndarray, max_iter: int = 100, tol: float = 1e-8
) -> tuple[np.ndarray, list[LogisticModel]]:
    """Per-asset misspecified logistic fits on the shared feature block."""
    x = features.values if isinstance(features, SamplePanel) else np.asarray(features, dtype=np.float64)
    outcomes = np.asarray(outcomes, dtype=np.float64)
    models = [fit_logistic(x, outcomes[:, j], max_iter=max_iter, tol=tol) for j in range(outcomes.shape[1])]
    probs = np.column_stack([m.predict_prob(x) for m in models])
    return probs, models


def drawn_beta_probabilities(
    features, stream: RngStream, loc: float = 1.0, scale: float = 0.5
) -> tuple[np.ndarray, np.ndarray]:
    """Surrogate probabilities from fixed random per-asset coefficients.

    Coefficients are drawn N(loc, scale) with shape (assets, features) and
    applied without fitting; the draw comes from channel 0 of ``stream``.
    """
    x = features.values if isinstance(features, SamplePanel) else np.asarray(features, dtype=np.float64)
    n_assets = x.shape[1]
    betas = loc + scale * normals_from(stream.generator(0), n_assets * n_assets).reshape(
        n_assets, n_assets
    )
    return expit(x @ betas.T), betas


def prob_to_weight(p) -> np.ndarray:
    """Affine map 2p - 1 from probabilities to [-1, 1] weights."""
    p = np.asarray(p, dtype=np.float64)
    if p.size and (np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0)):
        raise DomainError("probabilities must lie in [0, 1]")
    return 2.0 * p - 1.0


def power_transform(mu: SignalVector, p: float) -> SignalVector:
    """Signed power map sign(mu) * |mu|**p; rank-preserving for any p > 0.

    The output is unnormalized; callers that need a scale-comparable
    surrogate should match norms (see ``geometry.match_vm_norm``).
    """
    if p <= 0.0:
        raise DomainError(f"exponent must be positive, got {p}")
    values = np.sign(mu.values) * np.abs(mu.values) ** p
    return SignalVector(values=values, label=f"{mu.label}|pow={p:g}")


def spearman_rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman correlation with an exact fast path.

    When the (tie-averaged) rank vectors coincide the result is exactly 1.0
    rather than a value a few ulps below it, so order-preservation checks
    can assert equality.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise InsufficientDataError("need at least 2 values for a rank correlation")
    ra, rb = rankdata(a), rankdata(b)
    if np.array_equal(ra, rb):
        return 1.0
    if np.array_equal(ra, rb.max() + rb.min() - rb):  # exact order reversal
        return -1.0
    if ra.std() == 0.0 or rb.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(ra, rb)[0, 1])


def sign_agreement(pair: WeightPair) -> tuple[float, float]:
    """(sign-agreement rate, Pearson correlation) of a weight pair.

    Exact zeros agree only with exact zeros.  If either vector has zero
    variance the correlation is reported as NaN; the rate is always
    defined.
    """
    wt, wp = pair.omega_true, pair.omega_pred
    rate = float(np.mean(np.sign(wt) == np.sign(wp)))
    st, sp = wt.std(), wp.std()
    if st == 0.0 or sp == 0.0 or wt.size < 2:
        return rate, float("nan")
    corr = float(np.corrcoef(wt, wp)[0, 1])
    return rate, corr

"""Inverse-covariance geometry for signals and tangency portfolios.

All inner products here are taken in the bilinear form induced by the
inverse covariance, ``<u, v> = u' V^{-1} v``, which is the natural metric
for mean-variance analysis: the tangency direction for a signal is
``V^{-1} mu``, its Sharpe ratio is the signal's norm in this metric, and a
surrogate signal earns the true norm scaled by its cosine to the truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError, ShapeError, SingularityError
from .stochastics import RngStream, normals_from, uniforms_from

DEFAULT_EIGEN_FLOOR = 1e-8
_INVERSE_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class SignalVector:
    """An expected-return (or surrogate) vector with a provenance label."""

    values: np.ndarray
    label: str = "signal"

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ShapeError(f"signal must be a vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError(f"signal {self.label!r} contains non-finite entries")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, SignalVector) else np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class SpdCovariance:
    """Symmetric positive-definite covariance with its cached inverse.

    Built through an eigendecomposition with eigenvalues floored at
    ``eigen_floor``; matrix and inverse share the same eigenbasis, and the
    product ``V @ V^{-1}`` is validated against the identity at
    construction (1e-8 max-norm).
    """

    matrix: np.ndarray
    inverse: np.ndarray
    eigen_floor: float = DEFAULT_EIGEN_FLOOR

    def __post_init__(self) -> None:
        v = self.matrix
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeError(f"covariance must be square, got shape {v.shape}")
        if not np.array_equal(v, v.T):
            raise DomainError("covariance must be exactly symmetric")
        residual = np.max(np.abs(v @ self.inverse - np.eye(v.shape[0])))
        if residual > _INVERSE_RESIDUAL_TOL:
            raise SingularityError(
                f"inverse validation failed: max |V V^-1 - I| = {residual:.3e}"
            )

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, raw: np.ndarray, eigen_floor: float = DEFAULT_EIGEN_FLOOR) -> "SpdCovariance":
        """Symmetrize, floor the spectrum, and build matrix + inverse together."""
        if eigen_floor <= 0.0:
            raise DomainError(f"eigen_floor must be positive, got {eigen_floor}")
        raw = np.asarray(raw, dtype=np.float64)
        sym = 0.5 * (raw + raw.T)
        eigvals, eigvecs = np.linalg.eigh(sym)
        eigvals = np.maximum(eigvals, eigen_floor)
        matrix = (eigvecs * eigvals) @ eigvecs.T
        inverse = (eigvecs * (1.0 / eigvals)) @ eigvecs.T
        matrix = 0.5 * (matrix + matrix.T)
        inverse = 0.5 * (inverse + inverse.T)
        return cls(matrix=matrix, inverse=inverse, eigen_floor=eigen_floor)


def make_spd_cov(
    stream: RngStream,
    n: int,
    n_factors: int = 3,
    idio_scale: float = 0.2,
    eigen_floor: float = DEFAULT_EIGEN_FLOOR,
) -> SpdCovariance:
    """Random factor-structure covariance: F diag(L) F' + D.

    F is n x n_factors standard normal (channel 0), the factor variances L
    are Uniform(0.6, 1.4) (channel 1), and the idiosyncratic diagonal D is
    Uniform(idio_scale, 2*idio_scale) (channel 2).
    """
    if n < 2:
        raise DomainError(f"need n >= 2 assets, got {n}")
    if n_factors < 1:
        raise DomainError(f"need n_factors >= 1, got {n_factors}")
    if idio_scale <= 0.0:
        raise DomainError(f"idio_scale must be positive, got {idio_scale}")
    f = normals_from(stream.generator(0), n * n_factors).reshape(n, n_factors)
    lam = uniforms_from(stream.generator(1), 0.6, 1.4, n_factors)
    diag = uniforms_from(stream.generator(2), idio_scale, 2.0 * idio_scale, n)
    raw = (f * lam) @ f.T + np.diag(diag)
    return SpdCovariance.from_matrix(raw, eigen_floor=eigen_floor)


def vm_inner(u, v, cov: SpdCovariance) -> float:
    """Bilinear form u' V^{-1} v."""
    uv, vv = _values(u), _values(v)
    if uv.shape != vv.shape or uv.shape != (cov.n,):
        raise ShapeError(
            f"vectors of shape {uv.shape} and {vv.shape} do not match covariance dim {cov.n}"
        )
    return float(uv @ cov.inverse @ vv)


def vm_norm(u, cov: SpdCovariance) -> float:
    """Norm induced by the V^{-1} inner product."""
    return math.sqrt(max(vm_inner(u, u, cov), 0.0))


def cosine_alignment(mu, mu_tilde, cov: SpdCovariance) -> float:
    """Cosine of the angle between two signals in the V^{-1} metric.

    Clamped to [-1, 1] so downstream arccos-style consumers are safe.

    Raises
    ------
    DomainError
        If either signal is the zero vector.
    """
    nu_mu = vm_norm(mu, cov)
    nu_t = vm_norm(mu_tilde, cov)
    if nu_mu == 0.0 or nu_t == 0.0:
        raise DomainError("cosine alignment is undefined for a zero signal")
    rho = vm_inner(mu, mu_tilde, cov) / (nu_mu * nu_t)
    return min(1.0, max(-1.0, rho))


def tangency_direction(signal, cov: SpdCovariance) -> np.ndarray:
    """Unnormalized maximum-Sharpe weight direction V^{-1} mu."""
    v = _values(signal)
    if v.shape != (cov.n,):
        raise ShapeError(f"signal of shape {v.shape} does not match covariance dim {cov.n}")
    return cov.inverse @ v


def sharpe_of_weights(w, mu, cov: SpdCovariance) -> tuple[float, float, float]:
    """(mean, volatility, Sharpe) of weight vector ``w`` under signal ``mu``.

    mean = mu' w, vol = sqrt(w' V w), sharpe = mean / vol.  The Sharpe ratio
    is invariant under positive rescaling of ``w``.
    """
    wv, muv = _values(w), _values(mu)
    if wv.shape != (cov.n,) or muv.shape != (cov.n,):
        raise ShapeError("weights/signal dimension mismatch with covariance")
    mean = float(muv @ wv)
    var = float(wv @ cov.matrix @ wv)
    if var <= 0.0:
        raise SingularityError("zero-variance portfolio under an SPD covariance")
    vol = math.sqrt(var)
    return mean, vol, mean / vol


def epsilon_scaled_signal(mu: SignalVector, epsilon: float) -> SignalVector:
    """Scale a signal by ``epsilon``, keeping the provenance label."""
    return SignalVector(values=epsilon * mu.values, label=f"{mu.label}*eps={epsilon:g}")


def match_vm_norm(signal, reference, cov: SpdCovariance, label: str | None = None) -> SignalVector:
    """Rescale ``signal`` so its V^{-1} norm matches ``reference``'s.

    Uses the guarded ratio ``ref_norm / (sig_norm + 1e-12)`` so an exactly
    zero signal maps to zero rather than raising.
    """
    sig = _values(signal)
    scale = vm_norm(reference, cov) / (vm_norm(signal, cov) + 1e-12)
    base = signal.label if isinstance(signal, SignalVector) else "signal"
    return SignalVector(values=sig * scale, label=label or f"{base}|norm-matched")


@dataclass(frozen=True)
class AlignmentFamily:
    """A rotation family mu(theta) = cos(theta) mu + sin(theta) nu.

    ``nu`` is V^{-1}-orthogonal to ``mu`` with matched V^{-1} norm, so the
    family sweeps alignment cos(theta) at constant norm.
    """

    mu: SignalVector
    nu: SignalVector
    theta_grid: tuple[float, ...]

    def mu_tilde(self, theta: float) -> SignalVector:
        values = math.cos(theta) * self.mu.values + math.sin(theta) * self.nu.values
        return SignalVector(values=values, label=f"{self.mu.label}|theta={theta:.6g}")


def build_alignment_family(
    mu: SignalVector,
    cov: SpdCovariance,
    stream: RngStream,
    theta_grid: Sequence[float],
    max_retries: int = 8,
) -> AlignmentFamily:
    """Construct the orthogonal companion direction and wrap the family.

    A random draw is orthogonalized against ``mu`` in the V^{-1} inner
    product (two projection passes, so the residual inner product sits at
    rounding level) and rescaled to ``mu``'s norm.  Draws whose residual
    norm falls below 1e-10 of ``mu``'s are rejected and retried on the next
    channel.

    Raises
    ------
    DomainError
        If the space is one-dimensional (no orthogonal complement) or all
        retries degenerate.
    """
    if cov.n < 2:
        raise DomainError("no orthogonal complement exists in dimension 1")
    mu_norm = vm_norm(mu, cov)
    if mu_norm == 0.0:
        raise DomainError("cannot build an alignment family around a zero signal")
    mu_sq = mu_norm * mu_norm
    for attempt in range(max_retries):
        candidate = normals_from(stream.generator(attempt), cov.n)
        resid = candidate - (vm_inner(candidate, mu, cov) / mu_sq) * mu.values
        resid = resid - (vm_inner(resid, mu, cov) / mu_sq) * mu.values
        resid_norm = vm_norm(resid, cov)
        if resid_norm > 1e-10 * mu_norm:
            nu_values = resid * (mu_norm / resid_norm)
            nu = SignalVector(values=nu_values, label=f"{mu.label}|orthogonal")
            return AlignmentFamily(mu=mu, nu=nu, theta_grid=tuple(float(t) for t in theta_grid))
    raise DomainError(f"failed to draw a non-degenerate orthogonal direction in {max_retries} tries")

"""Deterministic random streams and the shared moment/regression estimators.

Every sampler here is a pure function of an :class:`RngStream`: calling it
twice with the same stream returns the same values, and distinct
``stream_id``/``channel`` pairs never overlap.  The generator is Philox4x64
(counter-based) keyed by ``(seed, stream_id)``; sub-channels offset the
128-bit counter block so parallel work can be partitioned without any
dependence on scheduling order.

Normal draws use the inverse-CDF transform: a 53-bit open uniform
``(k + 0.5) / 2**53`` mapped through ``scipy.special.ndtri``.  This transform
is part of the reproducibility contract and is pinned by golden tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, InsufficientDataError, ShapeError, SingularityError

_U53 = float(2**53)


@dataclass(frozen=True)
class RngStream:
    """A named position in the global Philox key space.

    Parameters
    ----------
    seed : int
        Master seed (64-bit unsigned).
    stream_id : int
        Sub-stream selector (64-bit unsigned).  Streams with distinct ids
        are statistically independent; parallel Monte Carlo must vary
        ``stream_id`` (or ``channel``), never split one stream.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) < 2**64):
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {v!r}")

    def generator(self, channel: int = 0) -> np.random.Generator:
        """Fresh Philox generator for this stream.

        ``channel`` selects a disjoint 2**128-draw counter block, so several
        variables can be drawn from one stream without interleaving.
        """
        if not (0 <= int(channel) < 2**64):
            raise DomainError(f"channel must be a 64-bit unsigned integer, got {channel!r}")
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        counter = np.array([0, 0, channel, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))

    def substream(self, stream_id: int) -> "RngStream":
        """Same seed, different sub-stream."""
        return RngStream(self.seed, stream_id)


def open_uniforms(gen: np.random.Generator, n: int) -> np.ndarray:
    """n uniforms on the open interval (0, 1) with 53-bit resolution."""
    if n == 0:
        return np.empty(0)
    return (gen.integers(0, 2**53, size=n).astype(np.float64) + 0.5) / _U53


def normals_from(gen: np.random.Generator, n: int) -> np.ndarray:
    """n standard normals via the inverse-CDF transform of `open_uniforms`."""
    return ndtri(open_uniforms(gen, n))


def uniforms_from(gen: np.random.Generator, lo: float, hi: float, n: int) -> np.ndarray:
    """n uniforms on [lo, hi) built from the same 53-bit open uniforms."""
    return lo + (hi - lo) * open_uniforms(gen, n)


def standard_normal(stream: RngStream, n: int, channel: int = 0) -> np.ndarray:
    """Draw ``n`` i.i.d. N(0,1) values from ``stream``.

    Pure in ``(stream, channel, n)``: repeated calls reproduce the same
    vector bit for bit.  ``n = 0`` returns an empty vector.
    """
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    return normals_from(stream.generator(channel), n)


def bernoulli_from_prob(stream: RngStream, p: np.ndarray, channel: int = 0) -> np.ndarray:
    """Independent Bernoulli(p_i) draws as an int array of 0/1.

    Raises
    ------
    DomainError
        If any probability lies outside [0, 1].
    """
    p = np.asarray(p, dtype=np.float64)
    if p.size and (np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0)):
        raise DomainError("all probabilities must lie in [0, 1]")
    u = open_uniforms(stream.generator(channel), p.size)
    return (u < p.ravel()).astype(np.int64).reshape(p.shape)


@dataclass(frozen=True)
class SamplePanel:
    """An observations-by-variables matrix with named columns.

    Invariants: all entries finite, column count matches ``column_names``.
    """

    values: np.ndarray
    column_names: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"panel values must be 2-D, got shape {values.shape}")
        if values.shape[1] != len(self.column_names):
            raise ShapeError(
                f"{values.shape[1]} columns but {len(self.column_names)} names"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("panel contains non-finite entries")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.column_names.index(name)]


@dataclass(frozen=True)
class OlsFit:
    """Simple-regression fit of y on x (centered-covariance ratio)."""

    slope: float
    intercept: float
    n_obs: int


def ols_simple(y: Sequence[float], x: Sequence[float]) -> OlsFit:
    """Ordinary least squares of ``y`` on a single regressor ``x``.

    slope = sample Cov(x, y) / Var(x), intercept = mean(y) - slope * mean(x).

    Raises
    ------
    SingularityError
        If the regressor has (numerically) zero sample variance.
    InsufficientDataError
        If fewer than two observations are given.
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise ShapeError(f"y and x must be equal-length vectors, got {y.shape} vs {x.shape}")
    n = y.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {n}")
    x_mean = x.mean()
    xc = x - x_mean
    denom = float(xc @ xc)
    # Constant regressors can leave O(eps) residue after centering; treat
    # anything at rounding scale as singular.
    tiny = n * (16.0 * np.finfo(np.float64).eps * (1.0 + abs(x_mean))) ** 2
    if denom <= tiny:
        raise SingularityError("regressor has zero sample variance")
    slope = float(xc @ (y - y.mean())) / denom
    intercept = float(y.mean() - slope * x_mean)
    return OlsFit(slope=slope, intercept=intercept, n_obs=n)


def empirical_moments(panel: SamplePanel) -> tuple[np.ndarray, np.ndarray]:
    """Column means and the unbiased (n-1 denominator) sample covariance.

    The covariance is symmetrized by construction, so ``cov == cov.T``
    holds exactly.
    """
    values = panel.values
    n = values.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 rows for moments, got {n}")
    means = values.mean(axis=0)
    centered = values - means
    cov = (centered.T @ centered) / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return means, cov

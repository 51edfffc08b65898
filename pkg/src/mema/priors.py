"""Prior distribution library.

Each prior is a small frozen dataclass with a normalized log density
(values outside the support return ``-inf``, never raise) and a sampler.
Matrix-variate priors (inverse Wishart) take and return full matrices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, multigammaln

from .errors import DomainError

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Normal:
    mean: float = 0.0
    variance: float = 1.0

    def __post_init__(self):
        if not self.variance > 0:
            raise DomainError("Normal variance must be > 0")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        out = -0.5 * (_LOG_2PI + math.log(self.variance)) - (x - self.mean) ** 2 / (
            2.0 * self.variance
        )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.normal(self.mean, math.sqrt(self.variance), size=size)


@dataclass(frozen=True)
class HalfCauchy:
    location: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError("HalfCauchy scale must be > 0")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.location) / self.scale
        out = np.where(
            x >= self.location,
            math.log(2.0 / (math.pi * self.scale)) - np.log1p(z * z),
            -np.inf,
        )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return self.location + self.scale * np.abs(rng.standard_cauchy(size=size))


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise DomainError("Uniform requires lo < hi")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(
            (x >= self.lo) & (x <= self.hi), -math.log(self.hi - self.lo), -np.inf
        )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size=size)


@dataclass(frozen=True)
class Exponential:
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("Exponential rate must be > 0")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= 0, math.log(self.rate) - self.rate * x, -np.inf)
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self.rate, size=size)


@dataclass(frozen=True)
class InvGamma:
    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise DomainError("InvGamma shape and scale must be > 0")

    def log_density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(
                x > 0,
                self.shape * math.log(self.scale)
                - gammaln(self.shape)
                - (self.shape + 1.0) * np.log(np.where(x > 0, x, 1.0))
                - self.scale / np.where(x > 0, x, 1.0),
                -np.inf,
            )
        return float(out) if out.ndim == 0 else out

    def sample(self, rng, size=None):
        return self.scale / rng.gamma(self.shape, 1.0, size=size)


@dataclass(frozen=True)
class InvWishart:
    """Inverse Wishart on Q x Q covariance matrices.

    ``scale_matrix`` is the Q x Q scale, ``df`` the degrees of freedom
    (must exceed Q - 1).
    """

    scale_matrix: tuple
    df: float

    def __post_init__(self):
        psi = np.asarray(self.scale_matrix, dtype=float)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1]:
            raise DomainError("scale_matrix must be square")
        if not self.df > psi.shape[0] - 1:
            raise DomainError("InvWishart df must exceed dimension - 1")
        object.__setattr__(self, "scale_matrix", tuple(map(tuple, psi)))

    @property
    def dim(self) -> int:
        return len(self.scale_matrix)

    def log_density(self, x):
        psi = np.asarray(self.scale_matrix, dtype=float)
        q = self.dim
        x = np.asarray(x, dtype=float)
        try:
            chol = np.linalg.cholesky(x)
        except np.linalg.LinAlgError:
            return -math.inf
        logdet_x = 2.0 * float(np.sum(np.log(np.diag(chol))))
        sign, logdet_psi = np.linalg.slogdet(psi)
        if sign <= 0:
            return -math.inf
        inv_x = np.linalg.inv(x)
        return float(
            0.5 * self.df * logdet_psi
            - 0.5 * self.df * q * math.log(2.0)
            - multigammaln(0.5 * self.df, q)
            - 0.5 * (self.df + q + 1.0) * logdet_x
            - 0.5 * np.trace(psi @ inv_x)
        )

    def sample(self, rng, size=None):
        if size is not None:
            return np.stack([self.sample(rng) for _ in range(int(size))])
        psi = np.asarray(self.scale_matrix, dtype=float)
        q = self.dim
        # Bartlett decomposition of the Wishart draw for psi^-1
        inv_psi = np.linalg.inv(psi)
        lower = np.linalg.cholesky(inv_psi)
        a = np.zeros((q, q))
        for i in range(q):
            a[i, i] = math.sqrt(rng.chisquare(self.df - i))
            for j in range(i):
                a[i, j] = rng.standard_normal()
        w = lower @ a
        wishart = w @ w.T
        return np.linalg.inv(wishart)


PRIOR_TAGS = {
    "normal": Normal,
    "half_cauchy": HalfCauchy,
    "uniform": Uniform,
    "exponential": Exponential,
    "inv_gamma": InvGamma,
    "inv_wishart": InvWishart,
}

PriorSpec = Normal | HalfCauchy | Uniform | Exponential | InvGamma | InvWishart


def log_density(prior, value):
    """Log density of ``prior`` at ``value`` (``-inf`` out of support)."""
    return prior.log_density(value)


def sample_prior(prior, rng, size=None):
    """Draw from ``prior`` using generator ``rng``."""
    return prior.sample(rng, size=size)


def prior_from_json(obj) -> PriorSpec:
    """Build a prior from ``{"dist": tag, ...params}``."""
    if not isinstance(obj, dict) or "dist" not in obj:
        raise DomainError(f"prior spec must be a dict with a 'dist' tag: {obj!r}")
    kwargs = dict(obj)
    tag = kwargs.pop("dist")
    if tag not in PRIOR_TAGS:
        raise DomainError(f"unknown prior tag {tag!r}")
    return PRIOR_TAGS[tag](**kwargs)


def prior_to_json(prior) -> dict:
    """Inverse of :func:`prior_from_json`."""
    for tag, cls in PRIOR_TAGS.items():
        if isinstance(prior, cls):
            out = {"dist": tag}
            out.update(
                {k: v for k, v in prior.__dict__.items()}
            )
            return out
    raise DomainError(f"not a prior: {prior!r}")

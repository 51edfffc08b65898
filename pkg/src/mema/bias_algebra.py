"""Closed-form attenuation algebra for error-corrupted regression slopes.

Classical additive noise in a continuous exposure multiplies the
regression slope by an attenuation factor ``gamma = (1 + phi^2 /
lambda^2)^(-1)``, where ``phi`` is the noise standard deviation and
``lambda`` the true exposure standard deviation.  The functions here
compute that factor, the sampling distribution of the corrupted
least-squares estimates, and the quantities a meta-analysis mistakenly
targets when the corruption is ignored: the attenuated overall slope
``theta*``, the distorted heterogeneity ``tau*^2``, and the shifted
intercept mean/variance ``xi*`` and ``omega*^2``.

Plug-in convention: expectations over the study population are the
empirical means of the supplied per-study values; cross-study variances
use the ``K - 1`` divisor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyInput, LengthMismatch, SingleStudyVariance
from .study_data import StudyMoments


@dataclass(frozen=True)
class ErrorSpec:
    """Measurement-error magnitude for one study.

    Either or both of ``phi`` (noise s.d.) and ``gamma`` (attenuation
    factor) may be populated; when both are present they must be linked
    through a common exposure s.d., i.e. ``gamma = (1 + phi^2 /
    lambda^2)^(-1)``.
    """

    phi: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        if self.phi is not None and self.phi < 0:
            raise DomainError("phi must be nonnegative")
        if self.gamma is not None and not 0 < self.gamma <= 1:
            raise DomainError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class NaiveTargets:
    """What an uncorrected meta-analysis estimates under corruption.

    ``tau_star`` and ``omega_star`` are standard deviations (square
    roots of the mistargeted variances).
    """

    theta_star: float
    tau_star: float
    xi_star: float | None = None
    omega_star: float | None = None


def attenuation_factor(lambda_: float, phi: float) -> float:
    """Multiplicative slope bias ``(1 + phi^2 / lambda^2)^(-1)``."""
    if not lambda_ > 0:
        raise DomainError(f"lambda must be > 0, got {lambda_}")
    if phi < 0:
        raise DomainError(f"phi must be >= 0, got {phi}")
    return 1.0 / (1.0 + (phi / lambda_) ** 2)


def attenuated_sampling_moments(
    moments: StudyMoments,
    alpha: float,
    beta: float,
    gamma: float,
    n: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Sampling mean and covariance of corrupted least-squares estimates.

    For a study with true intercept/slope ``(alpha, beta)``, clean
    moments ``(sigma, lambda, mu)`` and attenuation ``gamma``, the
    least-squares pair fitted to the noisy exposure has mean

    ``( alpha + (1 - gamma) * beta * mu ,  gamma * beta )``

    and the usual least-squares covariance evaluated at the corrupted
    moments ``sigma*^2 = sigma^2 + (1-gamma) beta^2 lambda^2``,
    ``lambda*^2 = lambda^2 / gamma`` and ``mu* = mu``.

    Returns
    -------
    (mean, cov) : ndarray shapes (2,), (2, 2)
        Ordered as (intercept, slope).
    """
    if not 0 < gamma <= 1:
        raise DomainError(f"gamma must lie in (0, 1], got {gamma}")
    if n < 3:
        raise DomainError(f"n must be >= 3, got {n}")
    sigma2_star = moments.sigma**2 + (1.0 - gamma) * beta**2 * moments.lambda_**2
    lambda2_star = moments.lambda_**2 / gamma
    mu_star = moments.mu
    mean = np.array([alpha + (1.0 - gamma) * beta * moments.mu, gamma * beta])
    star = StudyMoments(
        sigma=math.sqrt(sigma2_star), lambda_=math.sqrt(lambda2_star), mu=mu_star
    )
    from .study_data import sampling_covariance

    return mean, sampling_covariance(star, n)


def _as_gammas(gammas) -> np.ndarray:
    g = np.asarray(list(gammas), dtype=float)
    if g.size == 0:
        raise EmptyInput("gammas must be nonempty")
    if np.any((g <= 0) | (g > 1)):
        raise DomainError("all gammas must lie in (0, 1]")
    return g


def naive_theta(gammas, theta: float) -> float:
    """Slope an uncorrected analysis targets: ``mean(gamma) * theta``."""
    return float(_as_gammas(gammas).mean() * theta)


def naive_tau2(gammas, theta: float, tau: float) -> float:
    """Slope-heterogeneity variance an uncorrected analysis targets.

    Computed as ``E(gamma^2) * tau^2 + Var(gamma) * theta^2`` with the
    plug-in second moment ``mean(gamma^2)`` and the sample variance
    (``K - 1`` divisor) of the attenuation factors.
    """
    if tau < 0:
        raise DomainError("tau must be >= 0")
    g = _as_gammas(gammas)
    e_g2 = float(np.mean(g**2))
    var_g = float(np.var(g, ddof=1)) if g.size > 1 else 0.0
    return e_g2 * tau**2 + var_g * theta**2


def naive_xi_omega(alphas_betas_mus, gammas) -> tuple[float, float]:
    """Intercept mean and variance an uncorrected analysis targets.

    Parameters
    ----------
    alphas_betas_mus : iterable of (alpha, beta, mu)
        Per-study true intercept, slope and exposure mean.
    gammas : iterable of float
        Per-study attenuation factors, same length.

    Returns
    -------
    (xi_star, omega2_star)
        ``xi* = mean(alpha + (1-gamma) beta mu)`` and ``omega*^2`` the
        sample variance (``K - 1`` divisor) of the same quantity.
    """
    tuples = [tuple(map(float, t)) for t in alphas_betas_mus]
    g = _as_gammas(gammas)
    if len(tuples) != g.size:
        raise LengthMismatch(
            f"{len(tuples)} study tuples but {g.size} attenuation factors"
        )
    if len(tuples) < 2:
        raise SingleStudyVariance("omega*^2 needs at least two studies")
    a = np.array([t[0] for t in tuples])
    b = np.array([t[1] for t in tuples])
    m = np.array([t[2] for t in tuples])
    shifted = a + (1.0 - g) * b * m
    return float(shifted.mean()), float(np.var(shifted, ddof=1))


def naive_targets(alphas_betas_mus, gammas, theta: float, tau: float) -> NaiveTargets:
    """Bundle all four mistargeted quantities for a set of studies."""
    xi_star, omega2_star = naive_xi_omega(alphas_betas_mus, gammas)
    return NaiveTargets(
        theta_star=naive_theta(gammas, theta),
        tau_star=math.sqrt(naive_tau2(gammas, theta, tau)),
        xi_star=xi_star,
        omega_star=math.sqrt(omega2_star),
    )

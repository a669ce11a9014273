"""Model parameters and derived constants for the mixed fractional model.

The observation is X(t) = theta*t + sigma*B1(t) + B2(t) with two independent
fractional Brownian motions of Hurst indices 1/2 < h1 < h2 < 1.  Everything
downstream (kernels, solver, estimator) consumes the constants computed here,
so the drift-normalization convention is fixed in exactly one place:
``drift_norm`` (see :func:`derive_constants`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .errors import DomainError
from .numerics import beta_fn, gamma_fn

__all__ = [
    "HurstPair",
    "ModelParams",
    "DerivedConstants",
    "derive_constants",
]


@dataclass(frozen=True)
class HurstPair:
    """An ordered pair of Hurst indices with 1/2 < h1 < h2 < 1."""

    h1: float
    h2: float

    def __post_init__(self) -> None:
        if not self.h1 > 0.5:
            raise DomainError(f"require h1 > 1/2, got h1={self.h1}")
        if not self.h2 > self.h1:
            raise DomainError(f"require h2 > h1, got h1={self.h1}, h2={self.h2}")
        if not self.h2 < 1.0:
            raise DomainError(f"require h2 < 1, got h2={self.h2}")

    @property
    def solver_admissible(self) -> bool:
        """True when the index gap exceeds 1/4, the solvability condition
        for the second-kind equation (square-integrable kernel)."""
        return self.h2 - self.h1 > 0.25

    def require_solver_admissible(self) -> None:
        if not self.solver_admissible:
            raise DomainError(
                f"require h2 - h1 > 1/4 for the integral-equation route, "
                f"got gap {self.h2 - self.h1:.6g}"
            )


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set: Hurst pair, noise scale, drift, horizon."""

    hurst: HurstPair
    sigma: float = 1.0
    theta: float = 0.0
    horizon_T: float = 1.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise DomainError(f"require sigma > 0, got {self.sigma}")
        if not self.horizon_T > 0:
            raise DomainError(f"require horizon_T > 0, got {self.horizon_T}")


def _alpha(h: float) -> float:
    # covariance-density constant: d^2/dtds of the fBm covariance off-diagonal
    return h * (2.0 * h - 1.0)


def _beta(h: float) -> float:
    return float((_alpha(h) / beta_fn(h - 0.5, 2.0 - 2.0 * h)) ** 0.5)


def _gamma_martingale(h: float) -> float:
    """Normalization of the fundamental martingale built from weight
    s^(1/2-h): its variance at time t is gamma^2 t^(2-2h)/(2-2h).

    Equal to beta_h * B(h-1/2, 3/2-h); validated against a brute-force
    double integral of the weighted fBm covariance in the test suite.
    """
    return _beta(h) * float(beta_fn(h - 0.5, 1.5 - h))


@dataclass(frozen=True)
class DerivedConstants:
    """All closed-form constants derived from a parameter set.

    Fields
    ------
    alpha_h1, alpha_h2 : float
        h(2h-1) for each index.
    beta_h1, beta_h2 : float
        Volterra-kernel normalizations (alpha_h / B(h-1/2, 2-2h))^(1/2).
    gamma_h1 : float
        Fundamental-martingale normalization for h1 (see note below).
    epsilon_h1 : float
        gamma_h1^2/(2-2h1); variance of the h1-martingale at t=1.
    script_b : float
        B(3/2-h1, 3/2-h1); the drift shape constant of the transformed
        observation.
    delta_paper : float
        (2-2h1)*script_b/(sigma*gamma_h1); retained for reporting.
    drift_norm : float
        (2-2h1)*script_b/(sigma*gamma_h1^2) = delta_paper/gamma_h1; the
        normalization that makes the estimator unbiased.
    lambda_of_T, mu_of_T : callable
        T -> T^(2h2-2h1)/(sigma^2 gamma^2) and T -> T^(2h2-2h1); the
        coupling constant of the second-kind equation and the raw scale
        factor used in the large-T analysis.

    Note
    ----
    gamma_h1 uses beta_h * B(h-1/2, 3/2-h), which reproduces the
    brute-force martingale variance exactly.  An alternative closed form
    in circulation, (2h(3/2-h)Gamma(3/2-h)^3 Gamma(h+1/2)/Gamma(3-2h))^(1/2),
    exceeds it by the factor ((3/2-h)/(2-2h))^(1/2) and fails the variance
    oracle, so it is not used.
    """

    hurst: HurstPair
    sigma: float
    alpha_h1: float
    alpha_h2: float
    beta_h1: float
    beta_h2: float
    gamma_h1: float
    epsilon_h1: float
    script_b: float
    delta_paper: float
    drift_norm: float
    lambda_of_T: Callable[[float], float] = field(repr=False)
    mu_of_T: Callable[[float], float] = field(repr=False)

    def as_dict(self) -> dict:
        """Scalar fields only, for JSON dumps."""
        return {
            "h1": self.hurst.h1,
            "h2": self.hurst.h2,
            "sigma": self.sigma,
            "alpha_h1": self.alpha_h1,
            "alpha_h2": self.alpha_h2,
            "beta_h1": self.beta_h1,
            "beta_h2": self.beta_h2,
            "gamma_h1": self.gamma_h1,
            "epsilon_h1": self.epsilon_h1,
            "script_b": self.script_b,
            "delta_paper": self.delta_paper,
            "drift_norm": self.drift_norm,
        }


def derive_constants(params: ModelParams) -> DerivedConstants:
    """Populate every derived constant for a validated parameter set.

    Parameters
    ----------
    params : ModelParams
        Validated parameters (HurstPair enforces the index ordering).

    Returns
    -------
    DerivedConstants

    Raises
    ------
    DomainError
        If the Hurst pair violates an ordering inequality; the message
        names the inequality that failed (raised at HurstPair
        construction, re-checked here for defensive use).
    """
    hp = params.hurst
    h1, h2 = hp.h1, hp.h2
    sigma = params.sigma

    gamma1 = _gamma_martingale(h1)
    gamma1_sq = gamma1 * gamma1
    script_b = float(beta_fn(1.5 - h1, 1.5 - h1))
    delta = (2.0 - 2.0 * h1) * script_b / (sigma * gamma1)
    drift_norm = delta / gamma1

    gap = 2.0 * (h2 - h1)
    sig2g2 = sigma * sigma * gamma1_sq

    return DerivedConstants(
        hurst=hp,
        sigma=sigma,
        alpha_h1=_alpha(h1),
        alpha_h2=_alpha(h2),
        beta_h1=_beta(h1),
        beta_h2=_beta(h2),
        gamma_h1=gamma1,
        epsilon_h1=gamma1_sq / (2.0 - 2.0 * h1),
        script_b=script_b,
        delta_paper=delta,
        drift_norm=drift_norm,
        lambda_of_T=lambda T: float(T) ** gap / sig2g2,
        mu_of_T=lambda T: float(T) ** gap,
    )

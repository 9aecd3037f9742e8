"""Analytic Gaussian-mixture flow standing in for a one-step generative model.

Each condition ("src" / "tar") owns an isotropic Gaussian mixture over data
space. Noising the mixture along the schedule keeps every marginal a mixture
of Gaussians, so posterior means, probability-flow velocities and all model
heads are available in closed form. The model exposes the same observable
surface a distilled text-to-image backbone would: a single head selected by
``output_kind`` whose residual between conditions, scaled by the matching
time-only coefficient, reproduces the velocity residual exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePosteriorError, DomainError, IllConditionedMapError
from .schedules import (
    CONSISTENCY,
    DATA_X0,
    NOISE_EPS,
    PARAMETERIZATION_KINDS,
    SCORE,
    V_PRED,
    VELOCITY,
    Schedule,
    evaluate,
)

SRC = "src"
TAR = "tar"


@dataclass
class GaussianMixtureCondition:
    """Isotropic Gaussian mixture: weights (K,), means (K, d), scales (K,)."""

    weights: np.ndarray
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.scales = np.atleast_1d(np.asarray(self.scales, dtype=float))
        k = self.weights.shape[0]
        if self.means.shape[0] != k or self.scales.shape[0] != k:
            raise DomainError("weights, means and scales must share the component axis")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise DomainError("weights must be positive and finite")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise DomainError("weights must sum to 1 within 1e-12")
        if not np.all(np.isfinite(self.means)):
            raise DomainError("means must be finite")
        if not np.all(np.isfinite(self.scales)) or np.any(self.scales <= 0):
            raise DomainError("scales must be positive and finite")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class BackboneModel:
    """Schedule plus a source and a target mixture, with one observable head."""

    schedule: Schedule
    source: GaussianMixtureCondition
    target: GaussianMixtureCondition
    output_kind: str = VELOCITY

    def __post_init__(self):
        if self.source.dim != self.target.dim:
            raise DomainError("source and target mixtures must share the dimension")
        if self.output_kind not in PARAMETERIZATION_KINDS:
            raise DomainError(f"unknown output kind {self.output_kind!r}")

    @property
    def dim(self) -> int:
        return self.source.dim

    def condition(self, which: str) -> GaussianMixtureCondition:
        if which == SRC:
            return self.source
        if which == TAR:
            return self.target
        raise DomainError(f"condition must be 'src' or 'tar', got {which!r}")


def marginal_moments(
    cond: GaussianMixtureCondition, component: int, schedule: Schedule, t: float
) -> tuple[np.ndarray, float]:
    """Noised mean and isotropic variance of one mixture component."""
    if not (0 <= component < cond.n_components):
        raise DomainError(f"component {component} out of range")
    a, s = evaluate(schedule, t)
    var = a * a * float(cond.scales[component]) ** 2 + s * s
    return a * cond.means[component], var


def _log_responsibilities(
    cond: GaussianMixtureCondition, z: np.ndarray, alpha: float, sigma: float
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior component log-weights and variances, computed in log space."""
    d = cond.dim
    variances = alpha * alpha * cond.scales**2 + sigma * sigma
    diff = z[None, :] - alpha * cond.means
    sq = np.einsum("kd,kd->k", diff, diff)
    log_kernel = -0.5 * (sq / variances + d * np.log(2.0 * math.pi * variances))
    log_mass = np.log(cond.weights) + log_kernel
    peak = float(np.max(log_mass))
    # max-subtraction keeps far-tail queries finite; only a non-finite peak
    # (every component at -inf, where a linear-space computation would already
    # have returned 0/0 = NaN) is genuinely degenerate
    if not math.isfinite(peak):
        raise DegeneratePosteriorError(
            "posterior mass underflowed for every mixture component"
        )
    shifted = np.exp(log_mass - peak)
    return shifted / shifted.sum(), variances


def posterior_x0(model: BackboneModel, z: np.ndarray, t: float, cond: str) -> np.ndarray:
    """Posterior mean of the clean state given the noised query z at time t."""
    z = np.asarray(z, dtype=float)
    mixture = model.condition(cond)
    a, s = evaluate(model.schedule, t)
    if s == 0.0:
        return z / a
    resp, variances = _log_responsibilities(mixture, z, a, s)
    pull = (a * mixture.scales**2) / variances
    component_means = mixture.means + pull[:, None] * (z[None, :] - a * mixture.means)
    return resp @ component_means


def posterior_eps(model: BackboneModel, z: np.ndarray, t: float, cond: str) -> np.ndarray:
    """Posterior mean of the path noise; zero by convention when sigma = 0."""
    z = np.asarray(z, dtype=float)
    a, s = evaluate(model.schedule, t)
    if s == 0.0:
        return np.zeros_like(z)
    return (z - a * posterior_x0(model, z, t, cond)) / s


def velocity(model: BackboneModel, z: np.ndarray, t: float, cond: str) -> np.ndarray:
    """Generation-direction marginal flow drift at (z, t) under one condition.

    Equals -(alpha_dot * E[x0|z] + sigma_dot * E[eps|z]): the drift that moves
    the state toward the clean data of the chosen condition.
    """
    z = np.asarray(z, dtype=float)
    sched = model.schedule
    _, s = evaluate(sched, t)
    x0 = posterior_x0(model, z, t, cond)
    if s == 0.0:
        return -sched.alpha_dot(t) * x0
    eps = (z - sched.alpha(t) * x0) / s
    return -(sched.alpha_dot(t) * x0 + sched.sigma_dot(t) * eps)


def observable(model: BackboneModel, z: np.ndarray, t: float, cond: str) -> np.ndarray:
    """The model head selected by ``output_kind``, all from one posterior.

    x0 head: E[x0|z];  eps head: (z - alpha x0) / sigma;
    v head: alpha eps - sigma x0;  score head: -eps / sigma;
    velocity head: the ``velocity`` drift. The eps, v and score heads require
    sigma(t) at or above the schedule floor.
    """
    kind = model.output_kind
    if kind == VELOCITY:
        return velocity(model, z, t, cond)
    z = np.asarray(z, dtype=float)
    a, s = evaluate(model.schedule, t)
    x0 = posterior_x0(model, z, t, cond)
    if kind in (DATA_X0, CONSISTENCY):
        return x0
    if s < model.schedule.alpha_floor:
        raise IllConditionedMapError(
            f"sigma(t) = {s:.3e} below floor for the {kind} head", time=t
        )
    eps = (z - a * x0) / s
    if kind == NOISE_EPS:
        return eps
    if kind == V_PRED:
        return a * eps - s * x0
    if kind == SCORE:
        return -eps / s
    raise AssertionError("unreachable")


def delta_drift(model: BackboneModel, z: np.ndarray, t: float) -> np.ndarray:
    """Velocity residual between target and source conditions at (z, t)."""
    return velocity(model, z, t, TAR) - velocity(model, z, t, SRC)


def log_marginal_density(
    model: BackboneModel, z: np.ndarray, t: float, cond: str
) -> float:
    """Log density of the noised mixture marginal (diagnostic helper)."""
    z = np.asarray(z, dtype=float)
    mixture = model.condition(cond)
    a, s = evaluate(model.schedule, t)
    d = mixture.dim
    variances = a * a * mixture.scales**2 + s * s
    diff = z[None, :] - a * mixture.means
    sq = np.einsum("kd,kd->k", diff, diff)
    log_kernel = -0.5 * (sq / variances + d * np.log(2.0 * math.pi * variances))
    log_mass = np.log(mixture.weights) + log_kernel
    peak = float(np.max(log_mass))
    return peak + math.log(float(np.sum(np.exp(log_mass - peak))))


def sample_condition(
    cond: GaussianMixtureCondition, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` points from the mixture using the supplied generator."""
    comps = rng.choice(cond.n_components, size=count, p=cond.weights)
    eps = rng.standard_normal((count, cond.dim))
    return cond.means[comps] + cond.scales[comps, None] * eps

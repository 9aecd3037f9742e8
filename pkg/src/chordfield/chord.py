"""The chord control-field estimator and causal kernel smoothing.

The two-point chord estimate blends the proxy field at the query time t and
at the earlier time t - delta:

    u_hat = (t * R(t - delta) + delta * R(t)) / (t + delta)

It is the closed-form minimizer of a convex window objective (a quadratic
prior of weight t around the previous estimate plus an integral misfit over
the window) after collapsing the window integral to its endpoint and the
prior to the earlier field query. Being a convex combination, it never
exceeds the energy of its inputs; the same holds for any non-negative,
unit-mass causal smoothing kernel applied along the time axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass
class ChordParams:
    """Hyperparameters of the one-step transport.

    t                 main query time in (0, 1]
    delta             window width >= 0 with t - delta >= 0
    step_scale        Euler step scale (> 0)
    t_c               refinement time in (0, 1)
    n                 noise draws per estimate (>= 1)
    use_prox          apply the denoising refinement after the step
    share_noise_across_times
                      reuse one noise draw for both query times (default);
                      switch off to decouple the pair for ablations
    prox_shared_noise reuse transport draw 0 for the refinement instead of an
                      independent sub-stream
    """

    t: float = 0.90
    delta: float = 0.15
    step_scale: float = 1.00
    t_c: float = 0.30
    n: int = 1
    use_prox: bool = True
    share_noise_across_times: bool = True
    prox_shared_noise: bool = False

    def __post_init__(self):
        vals = (self.t, self.delta, self.step_scale, self.t_c)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("chord parameters must be finite")
        if not (0.0 < self.t <= 1.0):
            raise DomainError("t must lie in (0, 1]")
        if self.delta < 0.0 or self.t - self.delta < 0.0:
            raise DomainError("delta must satisfy 0 <= delta <= t")
        if self.step_scale <= 0.0:
            raise DomainError("step_scale must be positive")
        if not (0.0 < self.t_c < 1.0):
            raise DomainError("t_c must lie in (0, 1)")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be an integer >= 1")
        self.n = int(self.n)


def chord_field(
    r_prev: np.ndarray, r_curr: np.ndarray, t: float, delta: float
) -> np.ndarray:
    """Convex combination (t * r_prev + delta * r_curr) / (t + delta).

    r_prev is the field at the earlier time t - delta, r_curr at t. With
    delta = 0 both queries coincide and the estimator reduces bit-exactly to
    the naive field r_prev.
    """
    r_prev = np.asarray(r_prev, dtype=float)
    r_curr = np.asarray(r_curr, dtype=float)
    if r_prev.shape != r_curr.shape:
        raise DomainError("field samples must share a dimension")
    if t + delta <= 0.0:
        raise DomainError("t + delta must be positive")
    if delta == 0.0:
        return r_prev.copy()
    return (t * r_prev + delta * r_curr) / (t + delta)


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    gaps = np.diff(times)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return w


def _validate_window(window_samples, t: float, delta: float):
    if delta > 0.0 and len(window_samples) < 2:
        raise DomainError("a positive window needs at least two samples")
    times = np.array([float(ts) for ts, _ in window_samples])
    if times.size:
        if np.any(np.diff(times) <= 0):
            raise DomainError("window sample times must be strictly ascending")
        lo, hi = t - delta - 1e-12, t + 1e-12
        if times[0] < lo or times[-1] > hi:
            raise DomainError("window sample times must lie in [t - delta, t]")
    vectors = np.array([np.asarray(v, dtype=float) for _, v in window_samples])
    return times, vectors


def surrogate_objective(
    u: np.ndarray,
    u_prev: np.ndarray,
    window_samples: list[tuple[float, np.ndarray]],
    t: float,
    delta: float,
) -> float:
    """Discrete window objective: prior misfit plus trapezoid field misfit.

        t * ||u - u_prev||^2  +  integral over [t - delta, t] of ||u - R||^2

    with the integral taken by the composite trapezoid rule over the supplied
    samples. With delta = 0 the integral term is empty.
    """
    u = np.asarray(u, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    value = t * float(np.sum((u - u_prev) ** 2))
    if delta == 0.0:
        return value
    times, vectors = _validate_window(window_samples, t, delta)
    weights = _trapezoid_weights(times)
    for w, r in zip(weights, vectors):
        value += w * float(np.sum((u - r) ** 2))
    return value


def window_minimizer(
    u_prev: np.ndarray,
    window_samples: list[tuple[float, np.ndarray]],
    t: float,
    delta: float,
) -> np.ndarray:
    """Unique minimizer of the discrete window objective.

    Solves the normal equation of the quadratic exactly:

        u* = (t * u_prev + sum_j w_j R_j) / (t + sum_j w_j)

    where w_j are the trapezoid weights of the sample grid.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    if delta == 0.0:
        return u_prev.copy()
    times, vectors = _validate_window(window_samples, t, delta)
    weights = _trapezoid_weights(times)
    total = float(weights.sum())
    return (t * u_prev + weights @ vectors) / (t + total)


@dataclass
class SmoothingKernel:
    """Non-negative causal kernel on the lag grid {0, ds, ..., (m-1) ds}.

    ``weights[i]`` is the kernel density at lag i * grid_step (index 0 is the
    current sample, larger indices reach further into the past). Unit mass
    means sum(weights) * grid_step == 1.
    """

    weights: np.ndarray
    grid_step: float

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise DomainError("kernel weights must be a non-empty vector")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise DomainError("kernel weights must be non-negative and finite")
        if not (self.grid_step > 0):
            raise DomainError("grid_step must be positive")
        mass = float(self.weights.sum() * self.grid_step)
        if abs(mass - 1.0) > 1e-9:
            raise DomainError(f"kernel mass {mass} is not 1 within 1e-9")

    @property
    def taps(self) -> int:
        return self.weights.size

    @property
    def is_dirac(self) -> bool:
        return self.taps == 1 or bool(np.all(self.weights[1:] == 0.0))


def dirac_kernel(grid_step: float) -> SmoothingKernel:
    return SmoothingKernel(weights=np.array([1.0 / grid_step]), grid_step=grid_step)


def chord_two_tap_kernel(t: float, delta: float, grid_step: float) -> SmoothingKernel:
    """Two taps at lags delta and 0 with masses t/(t+delta), delta/(t+delta)."""
    lag = delta / grid_step
    taps = int(round(lag))
    if taps < 1 or abs(lag - taps) > 1e-9:
        raise DomainError("delta must be a positive multiple of grid_step")
    w = np.zeros(taps + 1)
    w[0] = delta / ((t + delta) * grid_step)
    w[taps] = t / ((t + delta) * grid_step)
    return SmoothingKernel(weights=w, grid_step=grid_step)


def uniform_causal_kernel(taps: int, grid_step: float) -> SmoothingKernel:
    if taps < 1:
        raise DomainError("a kernel needs at least one tap")
    w = np.full(taps, 1.0 / (taps * grid_step))
    return SmoothingKernel(weights=w, grid_step=grid_step)


def triangular_causal_kernel(taps: int, grid_step: float) -> SmoothingKernel:
    if taps < 1:
        raise DomainError("a kernel needs at least one tap")
    ramp = np.arange(taps, 0, -1, dtype=float)  # heaviest at lag 0
    w = ramp / (ramp.sum() * grid_step)
    return SmoothingKernel(weights=w, grid_step=grid_step)


def exponential_causal_kernel(
    taps: int, grid_step: float, rate: float = 1.0
) -> SmoothingKernel:
    if taps < 1:
        raise DomainError("a kernel needs at least one tap")
    if rate <= 0:
        raise DomainError("rate must be positive")
    w = np.exp(-rate * np.arange(taps, dtype=float))
    w /= w.sum() * grid_step
    return SmoothingKernel(weights=w, grid_step=grid_step)


def shipped_causal_kernels(
    grid_step: float, taps: int = 4
) -> dict[str, SmoothingKernel]:
    """The kernel family exercised by the verification suite."""
    return {
        "dirac": dirac_kernel(grid_step),
        "chord_two_tap": chord_two_tap_kernel(0.9, taps * grid_step, grid_step),
        "uniform": uniform_causal_kernel(taps, grid_step),
        "triangular": triangular_causal_kernel(taps, grid_step),
        "exponential": exponential_causal_kernel(taps, grid_step, rate=0.8),
    }


def kernel_smooth(
    series: list[tuple[float, np.ndarray]], kernel: SmoothingKernel
) -> list[tuple[float, np.ndarray]]:
    """Discrete causal convolution of a uniformly sampled series.

    output(t_j) = sum_i weights[i] * grid_step * R(t_j - i * grid_step),
    defined only where the full kernel support is available. A single tap at
    lag zero must reproduce the input bit-for-bit, so that case short-circuits
    the arithmetic.
    """
    if len(series) < kernel.taps:
        raise DomainError("series shorter than the kernel support")
    times = np.array([float(ts) for ts, _ in series])
    steps = np.diff(times)
    if np.any(steps <= 0):
        raise DomainError("series times must be strictly ascending")
    if not np.allclose(steps, kernel.grid_step, rtol=1e-9, atol=1e-12):
        raise DomainError("series grid step does not match the kernel grid step")
    vectors = [np.asarray(v, dtype=float) for _, v in series]
    if kernel.is_dirac and kernel.taps == 1:
        return [(float(ts), v.copy()) for ts, v in series]
    coeffs = kernel.weights * kernel.grid_step
    out = []
    for j in range(kernel.taps - 1, len(series)):
        acc = np.zeros_like(vectors[j])
        for i, c in enumerate(coeffs):
            acc += c * vectors[j - i]
        out.append((float(times[j]), acc))
    return out


def recursive_chord_series(
    series: list[tuple[float, np.ndarray]], delta: float
) -> list[tuple[float, np.ndarray]]:
    """Fully recursive window estimate carried across a uniform time grid.

    Instead of approximating the prior by the raw field at t - delta, this
    variant feeds the previous *estimate* back in:

        u_hat(t_j) = (t_j * u_hat(t_j - delta) + trapezoid R over the window)
                     / (t_j + delta)

    seeded with the raw field over the first window. Diagnostics-only.
    """
    times = np.array([float(ts) for ts, _ in series])
    steps = np.diff(times)
    if times.size < 2 or np.any(steps <= 0):
        raise DomainError("series must be ascending with at least two samples")
    ds = float(steps[0])
    if not np.allclose(steps, ds, rtol=1e-9, atol=1e-12):
        raise DomainError("series must sit on a uniform grid")
    lag = int(round(delta / ds))
    if lag < 1 or abs(delta / ds - lag) > 1e-9:
        raise DomainError("delta must be a positive multiple of the grid step")
    vectors = [np.asarray(v, dtype=float) for _, v in series]
    estimates = [v.copy() for v in vectors[:lag]]  # seed: raw fields
    for j in range(lag, len(series)):
        window = list(zip(times[j - lag : j + 1], vectors[j - lag : j + 1]))
        u_star = window_minimizer(estimates[j - lag], window, float(times[j]), delta)
        estimates.append(u_star)
    return [(float(times[j]), estimates[j]) for j in range(len(series))]

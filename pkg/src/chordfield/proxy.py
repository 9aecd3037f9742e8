"""Shared-noise Monte Carlo estimation of the editing proxy field.

The proxy field at an anchor x and query time t is the expectation, over the
noising kernel, of the coefficient-mapped head residual between the target
and source conditions. Using the *same* noise draw for both conditions (and,
by default, for both query times of a chord evaluation) is a common-random-
numbers scheme that strictly reduces the estimator variance.

Randomness is generated by the Philox 4x64 counter-based generator. Draw i of
a batch is keyed by the 128-bit pair ``(seed, i)`` and its coordinates are
read in order from that stream, so draws are bit-reproducible and independent
of evaluation order. Auxiliary streams (proximal refinement noise, particle
sampling, decoupling ablations, per-trial noise) derive their own 64-bit seed
from the user seed through a splitmix-style mix with a namespaced label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .backbone import BackboneModel, observable
from .errors import DomainError
from .schedules import Schedule, coefficient, evaluate

_MASK64 = (1 << 64) - 1

# stream namespaces for derived seeds
NS_PARTICLE = 1
NS_PROX = 2
NS_TIME_DECOUPLE = 3
NS_COND_DECOUPLE = 4
NS_TRIAL = 5
NS_CELL = 6


def _mix64(x: int) -> int:
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def derive_stream(seed: int, namespace: int, index: int = 0) -> int:
    """Deterministic 64-bit sub-seed for (seed, namespace, index)."""
    label = ((namespace & 0xFFFFFFFF) << 32) | (index & 0xFFFFFFFF)
    return _mix64((seed & _MASK64) ^ _mix64(label))


@dataclass
class SharedNoiseBatch:
    """n standard-normal vectors in R^dim, deterministic in (seed, n, dim)."""

    seed: int
    n: int
    dim: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("a noise batch needs n >= 1 draws")
        if self.dim < 1:
            raise DomainError("a noise batch needs dim >= 1")

    @cached_property
    def draws(self) -> np.ndarray:
        out = np.empty((self.n, self.dim))
        key_hi = self.seed & _MASK64
        for i in range(self.n):
            gen = np.random.Generator(
                np.random.Philox(key=np.array([key_hi, i], dtype=np.uint64))
            )
            out[i] = gen.standard_normal(self.dim)
        out.setflags(write=False)
        return out


@dataclass
class ProxyField:
    """Proxy-field estimates at one anchor over a set of query times."""

    anchor: np.ndarray
    samples: dict = field(default_factory=dict)
    batch: SharedNoiseBatch | None = None

    def series(self) -> list[tuple[float, np.ndarray]]:
        return sorted(self.samples.items())


def noising_sample(
    schedule: Schedule, x_tau: np.ndarray, t: float, eps: np.ndarray
) -> np.ndarray:
    """One draw of the forward noising kernel: alpha(t) x + sigma(t) eps."""
    a, s = evaluate(schedule, t)
    return a * np.asarray(x_tau, dtype=float) + s * np.asarray(eps, dtype=float)


def _head_residual(model: BackboneModel, z: np.ndarray, t: float) -> np.ndarray:
    return observable(model, z, t, "tar") - observable(model, z, t, "src")


def proxy_field(
    model: BackboneModel, x_tau: np.ndarray, t: float, batch: SharedNoiseBatch
) -> np.ndarray:
    """Shared-noise Monte Carlo estimate of the proxy field at (x_tau, t).

    Averages the head residual over the batch draws (identical draws for both
    conditions) and scales by the head's comparison-domain coefficient. For a
    velocity-head model this is exactly the mean of the velocity residual.
    """
    x_tau = np.asarray(x_tau, dtype=float)
    if x_tau.shape != (batch.dim,):
        raise DomainError("anchor dimension does not match the noise batch")
    a_t = coefficient(model.output_kind, model.schedule, t)
    acc = np.zeros(batch.dim)
    for eps in batch.draws:
        z = noising_sample(model.schedule, x_tau, t, eps)
        acc += _head_residual(model, z, t)
    return a_t * (acc / batch.n)


def proxy_field_decoupled(
    model: BackboneModel,
    x_tau: np.ndarray,
    t: float,
    batch_tar: SharedNoiseBatch,
    batch_src: SharedNoiseBatch,
) -> np.ndarray:
    """Independent-noise variant: separate draws per condition.

    Exists to quantify the variance penalty of giving up common random
    numbers; not used by the transport path.
    """
    x_tau = np.asarray(x_tau, dtype=float)
    if batch_tar.n != batch_src.n:
        raise DomainError("decoupled batches must have equal draw counts")
    a_t = coefficient(model.output_kind, model.schedule, t)
    acc = np.zeros(batch_tar.dim)
    for eps_t, eps_s in zip(batch_tar.draws, batch_src.draws):
        z_t = noising_sample(model.schedule, x_tau, t, eps_t)
        z_s = noising_sample(model.schedule, x_tau, t, eps_s)
        acc += observable(model, z_t, t, "tar") - observable(model, z_s, t, "src")
    return a_t * (acc / batch_tar.n)


def sample_proxy_field(
    model: BackboneModel,
    x_tau: np.ndarray,
    times: list[float],
    batch: SharedNoiseBatch,
) -> ProxyField:
    """Evaluate the proxy field at several query times with one shared batch."""
    x_tau = np.asarray(x_tau, dtype=float)
    samples = {float(t): proxy_field(model, x_tau, float(t), batch) for t in times}
    return ProxyField(anchor=x_tau, samples=samples, batch=batch)

"""Simulation lab for the distance-variance proportionality law.

The synthetic model is a scalar readout of a Gaussian parameter vector:
``f(theta) = a . theta`` with optional cubic term
``gamma * (a . theta)^3``. Drawing two independent parameter vectors
``theta_i, theta_j ~ N(mu, sigma^2 I)`` and measuring the root mean square
of ``|f(theta_i) - f(theta_j)|`` gives, for the linear readout, the closed
form

    D_rms = sqrt(2) * ||a|| * sigma,

because ``a . (theta_i - theta_j)`` is Gaussian with variance
``2 * sigma^2 * ||a||^2``. The lab estimates D_rms by Monte Carlo across a
ladder of sigma values and fits log D_rms against log sigma: a slope of 1
is the proportionality ``D_rms proportional to sqrt(Var)``; the cubic term
breaks it, which is the point of having one.

Sampling is organized in fixed-size blocks, each seeded independently from
``(seed, block index)``, so the estimate is bitwise reproducible and does
not depend on how blocks are distributed over worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateFitError, InvariantViolation

#: Trials per independently seeded sampling block.
BLOCK_SIZE = 32768


@dataclass(frozen=True)
class SyntheticModel:
    """Linear (optionally cubic) readout of a Gaussian parameter vector."""

    sensitivity: tuple[float, ...]
    mean: tuple[float, ...]
    variance: float
    cubic: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "sensitivity", tuple(float(v) for v in self.sensitivity)
        )
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        if len(self.sensitivity) == 0:
            raise InvariantViolation("sensitivity vector must be non-empty")
        if len(self.sensitivity) != len(self.mean):
            raise InvariantViolation(
                f"sensitivity has {len(self.sensitivity)} dims, "
                f"mean has {len(self.mean)}"
            )
        if not self.variance >= 0.0:
            raise InvariantViolation(f"variance must be non-negative, got {self.variance}")

    @property
    def dim(self) -> int:
        return len(self.sensitivity)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance)

    def with_variance(self, variance: float) -> "SyntheticModel":
        return replace(self, variance=variance)

    def predict(self, theta: np.ndarray) -> np.ndarray:
        """Readout for one parameter vector or a batch of them."""
        z = np.asarray(theta) @ np.asarray(self.sensitivity)
        if self.cubic:
            z = z + self.cubic * z**3
        return z

    def expected_rms(self) -> float:
        """Closed-form D_rms of the linear readout."""
        return math.sqrt(2.0) * float(
            np.linalg.norm(self.sensitivity)
        ) * self.sigma


@dataclass(frozen=True)
class DistanceEstimate:
    """Monte Carlo estimate of the response distance at one noise scale."""

    rms: float
    sigma: float
    trials: int


def _block_sum_sq(model: SyntheticModel, seed: int, block: int, count: int) -> float:
    rng = np.random.default_rng([seed, block])
    dim = model.dim
    mean = np.asarray(model.mean)
    theta_i = mean + model.sigma * rng.standard_normal((count, dim))
    theta_j = mean + model.sigma * rng.standard_normal((count, dim))
    diff = model.predict(theta_i) - model.predict(theta_j)
    return float(np.sum(diff * diff))


def simulate_distance(
    model: SyntheticModel,
    trials: int,
    seed: int = 0,
    *,
    max_workers: int = 1,
) -> DistanceEstimate:
    """Estimate ``D_rms`` over independent parameter pairs.

    Results depend only on ``(model, trials, seed)``: trials are split
    into fixed-size blocks with per-block generators, and block sums are
    reduced in block order, so worker count cannot change the answer.
    """
    if trials < 1:
        raise InvariantViolation(f"trials must be at least 1, got {trials}")
    if max_workers < 1:
        raise InvariantViolation(f"max_workers must be at least 1, got {max_workers}")
    blocks = [
        (b, min(BLOCK_SIZE, trials - b * BLOCK_SIZE))
        for b in range((trials + BLOCK_SIZE - 1) // BLOCK_SIZE)
    ]
    if max_workers == 1:
        sums = [_block_sum_sq(model, seed, b, n) for b, n in blocks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            sums = list(
                pool.map(lambda bn: _block_sum_sq(model, seed, bn[0], bn[1]), blocks)
            )
    total = 0.0
    for s in sums:
        total += s
    return DistanceEstimate(
        rms=math.sqrt(total / trials), sigma=model.sigma, trials=trials
    )


@dataclass(frozen=True)
class ProportionalityFit:
    """Log-log fit of distance against noise scale across a sigma ladder."""

    slope: float
    intercept: float
    expected_intercept: float
    estimates: tuple[DistanceEstimate, ...]

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "expected_intercept": self.expected_intercept,
            "estimates": [
                {"sigma": e.sigma, "rms": e.rms, "trials": e.trials}
                for e in self.estimates
            ],
        }


def loglog_fit(sigmas, values) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log(values)`` on ``log(sigmas)``.

    Needs at least two distinct positive sigmas and positive values.
    """
    sig = np.asarray(sigmas, dtype=np.float64)
    val = np.asarray(values, dtype=np.float64)
    if sig.shape != val.shape or sig.ndim != 1:
        raise InvariantViolation("sigmas and values must be 1-d and equal length")
    if np.any(sig <= 0) or np.any(val <= 0):
        raise DegenerateFitError("log-log fit needs positive sigmas and distances")
    if len(np.unique(sig)) < 2:
        raise DegenerateFitError(
            f"log-log fit needs at least 2 distinct sigmas, got {len(np.unique(sig))}"
        )
    slope, intercept = np.polyfit(np.log(sig), np.log(val), 1)
    return float(slope), float(intercept)


def fit_proportionality(
    model: SyntheticModel,
    sigmas,
    trials: int,
    seed: int = 0,
    *,
    max_workers: int = 1,
) -> ProportionalityFit:
    """Estimate distances across a sigma ladder and fit the scaling law.

    Each sigma gets an independently derived seed. For the linear readout
    the expected fit is slope 1 with intercept ``log(sqrt(2) * ||a||)``.
    """
    sigma_list = [float(s) for s in sigmas]
    if any(s <= 0 for s in sigma_list):
        raise DegenerateFitError("sigma ladder must be positive")
    if len(set(sigma_list)) < 2:
        raise DegenerateFitError(
            f"sigma ladder needs at least 2 distinct values, got {len(set(sigma_list))}"
        )
    estimates = []
    for k, sigma in enumerate(sigma_list):
        sub_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        est = simulate_distance(
            model.with_variance(sigma * sigma),
            trials,
            seed=sub_seed,
            max_workers=max_workers,
        )
        estimates.append(est)
    slope, intercept = loglog_fit(sigma_list, [e.rms for e in estimates])
    expected = math.log(math.sqrt(2.0) * float(np.linalg.norm(model.sensitivity)))
    return ProportionalityFit(
        slope=slope,
        intercept=intercept,
        expected_intercept=expected,
        estimates=tuple(estimates),
    )

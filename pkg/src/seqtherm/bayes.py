"""Bayesian temperature estimation from repeated trajectory records.

The data from M protocol resets is a multinomial count over outcome sequences.
The posterior over a temperature grid is assembled in the log domain (the
T-independent multinomial coefficient cancels on normalization) and normalized
with the trapezoidal rule under a uniform prior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegeneratePosteriorError, ValidationError
from .protocol import SequenceProbabilityTable

NORMALIZATION_TOL = 1e-8
LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class TrajectoryCounts:
    """Occurrence counts of length-n_seq outcome sequences over M resets."""

    n_seq: int
    counts: dict[str, int]
    total: int

    def __post_init__(self) -> None:
        for key, value in self.counts.items():
            if len(key) != self.n_seq or set(key) - {"0", "1"}:
                raise ValidationError(f"bad sequence label {key!r}")
            if value < 0:
                raise ValidationError(f"negative count for {key!r}")
        if sum(self.counts.values()) != self.total:
            raise ValidationError("counts do not sum to the stated total")
        if self.total < 1:
            raise ValidationError("need at least one recorded trajectory")


def sample_counts(table: SequenceProbabilityTable, true_temperature: float,
                  n_datasets: int, rng: np.random.Generator) -> TrajectoryCounts:
    """Multinomial draw of M trajectory records at the true temperature.

    Sampling whole sequences from the exact leaf distribution is statistically
    identical to running the protocol M times.
    """
    if n_datasets < 1:
        raise ValidationError("n_datasets must be positive")
    by_label = table.at_temperature(true_temperature)
    p = np.array([by_label[lab] for lab in table.labels])
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    draw = rng.multinomial(n_datasets, p)
    counts = {lab: int(k) for lab, k in zip(table.labels, draw) if k > 0}
    return TrajectoryCounts(n_seq=table.n_seq, counts=counts, total=n_datasets)


def log_likelihood(counts: TrajectoryCounts, sequence_probs: Mapping[str, float]) -> float:
    """sum_i k_i ln p(gamma_i | T); -inf when an observed sequence has zero mass.

    The multinomial coefficient is omitted: it does not depend on temperature.
    A sequence missing from the model table signals an n_seq mismatch.
    """
    total = 0.0
    for label, k in counts.counts.items():
        if label not in sequence_probs:
            raise ValidationError(
                f"sequence {label!r} absent from the model table (n_seq mismatch?)"
            )
        p = float(sequence_probs[label])
        if p <= 0.0:
            return float("-inf")
        total += k * np.log(p)
    return total


@dataclass(frozen=True)
class PosteriorGrid:
    """Normalized posterior density over an ascending temperature grid."""

    temperatures: np.ndarray
    density: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.temperatures, dtype=float)
        d = np.asarray(self.density, dtype=float)
        if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValidationError("temperature grid must be strictly ascending")
        if d.shape != t.shape:
            raise ValidationError("density shape mismatch")
        if np.any(d < 0):
            raise ValidationError("density must be non-negative")
        norm = float(np.trapezoid(d, t))
        if abs(norm - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"posterior normalization {norm} off by > {NORMALIZATION_TOL}")


def posterior(counts: TrajectoryCounts, table: SequenceProbabilityTable) -> PosteriorGrid:
    """Posterior under a uniform prior on the table's temperature grid.

    Log-likelihoods are shifted by their maximum before exponentiation; grid
    points where some observed sequence has zero model probability contribute
    zero posterior mass.
    """
    grid = table.temperatures
    logs = np.empty(grid.size)
    for j in range(grid.size):
        logs[j] = log_likelihood(counts, table.column(j))
    finite = np.isfinite(logs)
    if not np.any(finite):
        raise DegeneratePosteriorError("likelihood vanishes on the whole grid")
    peak = float(np.max(logs[finite]))
    density = np.where(finite, np.exp(np.clip(logs - peak, -700.0, 0.0)), 0.0)
    norm = float(np.trapezoid(density, grid))
    if norm <= 0.0:
        raise DegeneratePosteriorError("posterior mass is zero after normalization")
    return PosteriorGrid(temperatures=grid.copy(), density=density / norm)


@dataclass(frozen=True)
class PosteriorMoments:
    mean: float
    variance: float
    resolution_limited: bool  # posterior std below three grid steps


def posterior_moments(pg: PosteriorGrid) -> PosteriorMoments:
    """Trapezoidal mean and variance of the posterior."""
    t, d = pg.temperatures, pg.density
    mean = float(np.trapezoid(t * d, t))
    second = float(np.trapezoid(t * t * d, t))
    variance = max(second - mean * mean, 0.0)
    step = float(np.median(np.diff(t)))
    limited = bool(np.sqrt(variance) < 3.0 * step)
    return PosteriorMoments(mean=mean, variance=variance, resolution_limited=limited)

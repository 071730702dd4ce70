"""Classical Fisher information of static and sequential measurements.

Temperature derivatives are central two-point finite differences.  For the
sequential protocol the temperature enters through both the initial Gibbs
state and the detailed-balance rates inside the generator, so the dynamics is
rebuilt at the shifted temperatures.

The exact series follows the chain rule for Fisher information: the increment
after n steps is the trajectory-probability-weighted average of the Fisher
information of the conditional next-outcome distribution.  Summing increments
reproduces the Fisher information of the full length-n outcome distribution.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NumericalError, ValidationError
from .parallel import ordered_map
from .protocol import (
    BRANCH_FLOOR,
    MAX_EXACT_SEQUENCE,
    PRUNED_MASS_TOL,
    ProbeDynamics,
    ProtocolConfig,
    trajectory_rng,
)
from .linalg import von_neumann_entropy

OUTCOME_FLOOR = 1e-12
COLLAPSE_FLOOR = 1e-300


@dataclass(frozen=True)
class DerivativeScheme:
    """Central two-point temperature derivative with step delta."""

    delta: float

    def __post_init__(self) -> None:
        if not self.delta > 0.0:
            raise ValidationError(f"delta must be positive, got {self.delta}")

    @classmethod
    def for_temperature(cls, temperature: float, coupling: float = 1.0) -> "DerivativeScheme":
        return cls(delta=max(1e-4 * coupling, temperature * 1e-4))

    def validate_for(self, temperature: float) -> None:
        if self.delta > temperature / 100.0:
            raise ValidationError(
                f"delta {self.delta} too large for T={temperature} (must be <= T/100)"
            )

    def temperatures(self, temperature: float) -> tuple[float, float, float]:
        return (temperature - self.delta, temperature, temperature + self.delta)


@dataclass(frozen=True)
class FisherSeries:
    """Cumulative sequential Fisher information F(n) and its increments.

    Monte-Carlo series carry the sample count and standard errors (per
    increment and for the cumulative values).
    """

    values: np.ndarray
    increments: np.ndarray
    method: str
    mc_samples: int | None = None
    increment_stderr: np.ndarray | None = None
    value_stderr: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.method not in ("exact", "monte-carlo"):
            raise ValidationError(f"unknown method {self.method!r}")
        if len(self.values) != len(self.increments):
            raise ValidationError("values and increments length mismatch")

    @property
    def n_seq(self) -> int:
        return len(self.values)


def fisher_from_triplet(p_minus: np.ndarray, p_center: np.ndarray,
                        p_plus: np.ndarray, delta: float) -> float:
    """sum_j (dp_j/dT)^2 / p_j with outcomes below 1e-12 contributing zero."""
    keep = p_center >= OUTCOME_FLOOR
    dp = (p_plus[keep] - p_minus[keep]) / (2.0 * delta)
    return float(np.sum(dp * dp / p_center[keep]))


def cfi_static(probs_at: Callable[[float], np.ndarray], temperature: float,
               scheme: DerivativeScheme | None = None) -> float:
    """Fisher information of a fixed outcome distribution T -> p(T).

    The three evaluations must use the same outcome labeling; each
    distribution must sum to one at the 1e-10 level.
    """
    if scheme is None:
        scheme = DerivativeScheme.for_temperature(temperature)
    scheme.validate_for(temperature)
    trio = [np.asarray(probs_at(t), dtype=float) for t in scheme.temperatures(temperature)]
    length = {len(p) for p in trio}
    if len(length) != 1:
        raise ValidationError("outcome sets differ across the three temperatures")
    for p in trio:
        total = float(np.sum(p))
        if abs(total - 1.0) > 1e-10:
            raise ValidationError(f"distribution sums to {total}, expected 1")
    return fisher_from_triplet(trio[0], trio[1], trio[2], scheme.delta)


def _three_temperature_setup(cfg: ProtocolConfig, dynamics: ProbeDynamics,
                             scheme: DerivativeScheme):
    scheme.validate_for(cfg.temperature)
    temps = scheme.temperatures(cfg.temperature)
    states, steppers = [], []
    for t in temps:
        rho0, stepper = dynamics.at_temperature(t)
        states.append(rho0)
        steppers.append(stepper)
    return states, steppers


def exact_sequential_cfi(cfg: ProtocolConfig, dynamics: ProbeDynamics,
                         scheme: DerivativeScheme | None = None) -> FisherSeries:
    """Exact sequential Fisher series by a three-temperature trajectory-tree walk."""
    if cfg.n_seq > MAX_EXACT_SEQUENCE:
        _raise_exact_guard(cfg.n_seq)
    if dynamics.chain != cfg.chain:
        raise ValidationError("dynamics built for a different chain")
    if scheme is None:
        scheme = DerivativeScheme.for_temperature(cfg.temperature, cfg.chain.coupling)
    states, steppers = _three_temperature_setup(cfg, dynamics, scheme)
    masks = cfg.povm.masks
    increments = np.zeros(cfg.n_seq)
    pruned_mass = 0.0
    stack = [(0, 1.0, tuple(states))]
    while stack:
        depth, prob, trio = stack.pop()
        evolved = [steppers[i].evolve(trio[i]) for i in range(3)]
        diags = [np.diag(e).real for e in evolved]
        p = np.array([[float(np.sum(m * diags[i])) for m in masks] for i in range(3)])
        term = 0.0
        for g in (0, 1):
            if p[1, g] >= OUTCOME_FLOOR:
                dp = (p[2, g] - p[0, g]) / (2.0 * scheme.delta)
                term += dp * dp / p[1, g]
        increments[depth] += prob * term
        if depth + 1 >= cfg.n_seq:
            continue
        for g, mask in enumerate(masks):
            if p[1, g] < BRANCH_FLOOR:
                pruned_mass += prob * max(p[1, g], 0.0)
                continue
            children = tuple(
                evolved[i] * mask[:, None] * mask[None, :] / max(p[i, g], COLLAPSE_FLOOR)
                for i in range(3)
            )
            stack.append((depth + 1, prob * p[1, g], children))
    if pruned_mass > PRUNED_MASS_TOL:
        raise NumericalError(f"pruned branch mass {pruned_mass:.3e} exceeds tolerance")
    return FisherSeries(values=np.cumsum(increments), increments=increments, method="exact")


def _raise_exact_guard(n_seq: int):
    from .errors import ResourceLimitError

    raise ResourceLimitError(
        f"n_seq={n_seq} exceeds the exact-tree limit {MAX_EXACT_SEQUENCE}; "
        "use the Monte-Carlo path"
    )


@dataclass(frozen=True)
class McProtocolRun:
    """Raw per-trajectory Monte-Carlo output: step Fisher terms and entropies."""

    step_fisher: np.ndarray  # (n_samples, n_seq)
    entropies: dict[int, np.ndarray]  # step -> per-trajectory entropy


def _mc_single_trajectory(cfg: ProtocolConfig, dynamics: ProbeDynamics,
                          scheme: DerivativeScheme, seed_pair: tuple[int, int],
                          entropy_steps: set[int]) -> tuple[np.ndarray, dict[int, float]]:
    rng = trajectory_rng(*seed_pair)
    states, steppers = _three_temperature_setup(cfg, dynamics, scheme)
    masks = cfg.povm.masks
    trio = list(states)
    fisher_terms = np.zeros(cfg.n_seq)
    entropies: dict[int, float] = {}
    for k in range(1, cfg.n_seq + 1):
        evolved = [steppers[i].evolve(trio[i]) for i in range(3)]
        if k - 1 in entropy_steps:
            entropies[k - 1] = von_neumann_entropy(evolved[1])
        diags = [np.diag(e).real for e in evolved]
        p = np.array([[float(np.sum(m * diags[i])) for m in masks] for i in range(3)])
        term = 0.0
        for g in (0, 1):
            if p[1, g] >= OUTCOME_FLOOR:
                dp = (p[2, g] - p[0, g]) / (2.0 * scheme.delta)
                term += dp * dp / p[1, g]
        fisher_terms[k - 1] = term
        outcome = 0 if rng.random() < p[1, 0] else 1
        mask = masks[outcome]
        trio = [evolved[i] * mask[:, None] * mask[None, :] / max(p[i, outcome], COLLAPSE_FLOOR)
                for i in range(3)]
    if cfg.n_seq in entropy_steps:
        entropies[cfg.n_seq] = von_neumann_entropy(steppers[1].evolve(trio[1]))
    return fisher_terms, entropies


def mc_protocol_run(cfg: ProtocolConfig, dynamics: ProbeDynamics,
                    scheme: DerivativeScheme | None = None, *,
                    n_samples: int = 1000, master_seed: int = 0,
                    entropy_steps: set[int] | None = None,
                    n_workers: int | None = None) -> McProtocolRun:
    """Sample trajectories and replay each outcome record at the shifted temperatures.

    Trajectory j uses the counter-based stream (master_seed, j), so results do
    not depend on scheduling or the worker count.
    """
    if n_samples < 1:
        raise ValidationError("need at least one Monte-Carlo sample")
    if scheme is None:
        scheme = DerivativeScheme.for_temperature(cfg.temperature, cfg.chain.coupling)
    steps = entropy_steps or set()
    # warm the shared per-temperature cache before the pool workers share it
    _three_temperature_setup(cfg, dynamics, scheme)

    def job(index: int):
        return _mc_single_trajectory(cfg, dynamics, scheme, (master_seed, index), steps)

    results = ordered_map(job, list(range(n_samples)), n_workers)
    fisher = np.stack([r[0] for r in results])
    entropies = {
        step: np.array([r[1][step] for r in results]) for step in sorted(steps)
    }
    return McProtocolRun(step_fisher=fisher, entropies=entropies)


def mc_sequential_cfi(cfg: ProtocolConfig, dynamics: ProbeDynamics,
                      scheme: DerivativeScheme | None = None, *,
                      n_samples: int = 1000, master_seed: int = 0,
                      n_workers: int | None = None) -> FisherSeries:
    """Monte-Carlo sequential Fisher series with per-increment standard errors."""
    run = mc_protocol_run(cfg, dynamics, scheme, n_samples=n_samples,
                          master_seed=master_seed, n_workers=n_workers)
    fisher = run.step_fisher
    mu = fisher.shape[0]
    increments = fisher.mean(axis=0)
    cumulative = np.cumsum(fisher, axis=1)
    inc_stderr = fisher.std(axis=0, ddof=0) / np.sqrt(mu)
    val_stderr = cumulative.std(axis=0, ddof=0) / np.sqrt(mu)
    return FisherSeries(
        values=np.cumsum(increments),
        increments=increments,
        method="monte-carlo",
        mc_samples=mu,
        increment_stderr=inc_stderr,
        value_stderr=val_stderr,
    )


def cfi_from_probability_table(table, scheme: DerivativeScheme) -> FisherSeries:
    """Sequential Fisher series from exact sequence probabilities at T -/0/+ delta.

    ``table`` must be a three-column :class:`~seqtherm.protocol.SequenceProbabilityTable`
    evaluated at ``scheme.temperatures(T)``.  Summing (dP)^2 / P over the
    depth-n outcome distributions equals the increment recursion by the Fisher
    chain rule (up to the shared finite-difference truncation).
    """
    if table.probabilities.shape[1] != 3:
        raise ValidationError("table must hold exactly the three shifted temperatures")
    values = np.empty(table.n_seq)
    for depth in range(1, table.n_seq + 1):
        m = table.marginal(depth).probabilities
        values[depth - 1] = fisher_from_triplet(m[:, 0], m[:, 1], m[:, 2], scheme.delta)
    increments = np.diff(values, prepend=0.0)
    return FisherSeries(values=values, increments=increments, method="exact")


@dataclass(frozen=True)
class NseqStarResult:
    """Threshold search outcome: smallest n with F(n) above the QFI reference."""

    n_star: int | None
    ratio: float | None
    fisher: FisherSeries
    confident: bool


def find_nseq_star(cfg: ProtocolConfig, dynamics: ProbeDynamics, q_reference: float,
                   scheme: DerivativeScheme | None = None, *,
                   exact_limit: int = MAX_EXACT_SEQUENCE,
                   mc_samples: int = 1000, master_seed: int = 0,
                   n_workers: int | None = None) -> NseqStarResult:
    """Smallest sequence length whose Fisher information exceeds ``q_reference``.

    Exact trees decide up to ``exact_limit`` (at most 20, with iterative
    deepening so short thresholds stay cheap); beyond that the Monte-Carlo
    estimate must clear the reference by three standard errors.  ``cfg.n_seq``
    caps the search.
    """
    if not q_reference > 0.0:
        raise ValidationError("q_reference must be positive")
    n_max = cfg.n_seq
    exact_cap = min(n_max, exact_limit, MAX_EXACT_SEQUENCE)
    targets = sorted({min(t, exact_cap) for t in (4, 8, 12, 16, 20)})
    series = None
    for target in targets:
        sub = dataclasses.replace(cfg, n_seq=target)
        series = exact_sequential_cfi(sub, dynamics, scheme)
        hits = np.nonzero(series.values > q_reference)[0]
        if hits.size:
            n_star = int(hits[0]) + 1
            return NseqStarResult(
                n_star=n_star,
                ratio=float(series.values[n_star - 1] / q_reference),
                fisher=series,
                confident=True,
            )
    if n_max <= exact_cap:
        return NseqStarResult(n_star=None, ratio=None, fisher=series, confident=True)
    mc = mc_sequential_cfi(cfg, dynamics, scheme, n_samples=mc_samples,
                           master_seed=master_seed, n_workers=n_workers)
    margin = mc.values - 3.0 * mc.value_stderr
    hits = np.nonzero(margin > q_reference)[0]
    if hits.size:
        n_star = int(hits[0]) + 1
        return NseqStarResult(
            n_star=n_star,
            ratio=float(mc.values[n_star - 1] / q_reference),
            fisher=mc,
            confident=True,
        )
    return NseqStarResult(n_star=None, ratio=None, fisher=mc, confident=False)

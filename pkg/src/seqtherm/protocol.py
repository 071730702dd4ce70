"""Sequential local-measurement protocol on the thermal chain.

One protocol cycle is: evolve the probe for a time tau under the configured
dynamics, then projectively measure sigma_z on one site, collapsing the state.
Repeating the cycle n_seq times from the Gibbs state produces a quantum
trajectory: the ordered outcome record together with its probability.

A trajectory's ``final_state`` is the probe state at the start of the cycle
after the last measurement, i.e. the last collapse followed by one more
inter-measurement evolution.  Under unitary dynamics the trailing evolution
leaves the entropy unchanged; under a reset it restores the Gibbs state.

Trees and samplers renormalize the trace after every evolution step; this is
an identity up to round-off and keeps branch probabilities summing to one at
the 1e-12 level over deep trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainParams, SIGMA_Z, boltzmann_weights, chain_spectrum, gibbs_state, site_operator
from .errors import NumericalError, ResourceLimitError, ValidationError
from .lindblad import SuperoperatorBlocks, unvec, vec
from .linalg import von_neumann_entropy

import scipy.linalg

BRANCH_FLOOR = 1e-12
MAX_EXACT_SEQUENCE = 20
PRUNED_MASS_TOL = 1e-10


@dataclass(frozen=True)
class LocalPovm:
    """Two-outcome sigma_z projectors on one site: outcome 0 is spin up."""

    site: int
    n_sites: int

    def __post_init__(self) -> None:
        if not 1 <= self.site <= self.n_sites:
            raise ValidationError(f"site {self.site} outside [1, {self.n_sites}]")

    @property
    def masks(self) -> tuple[np.ndarray, np.ndarray]:
        diag = site_operator(SIGMA_Z, self.site, self.n_sites).diagonal().real
        return (diag > 0).astype(float), (diag < 0).astype(float)

    @property
    def projectors(self) -> tuple[np.ndarray, np.ndarray]:
        m0, m1 = self.masks
        return np.diag(m0).astype(complex), np.diag(m1).astype(complex)


@dataclass(frozen=True)
class ProtocolConfig:
    """Sequential-measurement run: chain, bath, inter-measurement time and length."""

    chain: ChainParams
    temperature: float
    kappa: float
    tau: float
    n_seq: int
    measured_site: int | None = None

    def __post_init__(self) -> None:
        if not self.temperature > 0.0:
            raise ValidationError("temperature must be positive")
        if self.kappa < 0.0:
            raise ValidationError("kappa must be non-negative")
        if not self.tau > 0.0:
            raise ValidationError("tau must be positive")
        if self.n_seq < 1:
            raise ValidationError("n_seq must be at least 1")

    @property
    def site(self) -> int:
        return self.measured_site if self.measured_site is not None else self.chain.n_sites

    @property
    def povm(self) -> LocalPovm:
        return LocalPovm(site=self.site, n_sites=self.chain.n_sites)


@dataclass(frozen=True)
class Trajectory:
    """Outcome record gamma with its probability and the post-protocol state."""

    outcomes: tuple[int, ...]
    probability: float
    stepwise_probs: np.ndarray
    final_state: np.ndarray
    step_entropies: dict[int, float] | None = None


@dataclass(frozen=True)
class MeasurementBranch:
    outcome: int
    probability: float
    state: np.ndarray | None  # None when the branch is unreachable

    @property
    def reachable(self) -> bool:
        return self.state is not None


def measure_site(rho: np.ndarray, povm: LocalPovm) -> list[MeasurementBranch]:
    """Both measurement branches (gamma, p(gamma), post-state) of a sigma_z readout.

    Branches with probability below 1e-12 are marked unreachable (state None)
    and are skipped by tree enumeration.
    """
    diag = np.diag(rho).real
    branches = []
    for outcome, mask in zip((0, 1), povm.masks):
        p = float(np.sum(mask * diag))
        if p < BRANCH_FLOOR:
            branches.append(MeasurementBranch(outcome, max(p, 0.0), None))
            continue
        post = rho * mask[:, None] * mask[None, :] / p
        branches.append(MeasurementBranch(outcome, p, post))
    return branches


class _UnitaryStepper:
    def __init__(self, u: np.ndarray):
        self._u = u

    def evolve(self, rho: np.ndarray) -> np.ndarray:
        out = self._u @ rho @ self._u.conj().T
        return out / np.trace(out).real


class _LindbladStepper:
    def __init__(self, propagator: np.ndarray, dim: int):
        self._p = propagator
        self._dim = dim

    def evolve(self, rho: np.ndarray) -> np.ndarray:
        out = unvec(self._p @ vec(rho), self._dim)
        return out / np.trace(out).real


class _ResetStepper:
    def __init__(self, thermal_state: np.ndarray):
        self._rho = thermal_state

    def evolve(self, rho: np.ndarray) -> np.ndarray:
        return self._rho.copy()


class ProbeDynamics:
    """Per-temperature initial Gibbs states and inter-measurement propagators.

    kappa = 0 selects unitary conjugation by exp(-i H tau); kappa > 0 the
    thermal Lindblad propagator exp(L tau), rebuilt per temperature because the
    detailed-balance rates depend on T.  ``reset_proxy=True`` replaces the
    evolution by a reset to the Gibbs state (the infinite-kappa limit).

    Everything is cached per temperature and read-only afterwards, so one
    instance may be shared by concurrent workers.
    """

    def __init__(self, chain: ChainParams, kappa: float, tau: float,
                 reset_proxy: bool = False):
        if kappa < 0.0:
            raise ValidationError("kappa must be non-negative")
        if not tau > 0.0:
            raise ValidationError("tau must be positive")
        self.chain = chain
        self.kappa = kappa
        self.tau = tau
        self.reset_proxy = reset_proxy
        self.spectrum = chain_spectrum(chain)
        self._blocks: SuperoperatorBlocks | None = None
        self._cache: dict[float, tuple[np.ndarray, object]] = {}

    @property
    def unitary(self) -> bool:
        return self.kappa == 0.0 and not self.reset_proxy

    def step_unitary(self) -> np.ndarray:
        phases = np.exp(-1j * self.spectrum.eigenvalues * self.tau)
        v = self.spectrum.eigenvectors
        return (v * phases) @ v.conj().T

    def at_temperature(self, temperature: float):
        """(initial Gibbs state, stepper) pair for one temperature."""
        key = float(temperature)
        if key not in self._cache:
            rho0 = gibbs_state(self.chain, temperature).gibbs
            if self.reset_proxy:
                stepper = _ResetStepper(rho0)
            elif self.kappa == 0.0:
                stepper = _UnitaryStepper(self.step_unitary())
            else:
                if self._blocks is None:
                    self._blocks = SuperoperatorBlocks(self.spectrum, self.chain.n_sites)
                generator = self._blocks.generator(self.kappa, temperature)
                stepper = _LindbladStepper(
                    scipy.linalg.expm(generator * self.tau), self.chain.dim
                )
            self._cache[key] = (rho0, stepper)
        return self._cache[key]


def _guard_sequence_length(n_seq: int) -> None:
    if n_seq > MAX_EXACT_SEQUENCE:
        raise ResourceLimitError(
            f"n_seq={n_seq} exceeds the exact-tree limit {MAX_EXACT_SEQUENCE}; "
            "use the Monte-Carlo path"
        )


def enumerate_trajectory_tree(cfg: ProtocolConfig, dynamics: ProbeDynamics) -> list[Trajectory]:
    """All outcome sequences of length n_seq with probabilities and final states.

    Performs a depth-first walk collapsing at each node; branches below the
    probability floor are pruned and their total mass is required to stay
    under 1e-10.
    """
    _guard_sequence_length(cfg.n_seq)
    if dynamics.chain != cfg.chain:
        raise ValidationError("dynamics built for a different chain")
    rho0, stepper = dynamics.at_temperature(cfg.temperature)
    masks = cfg.povm.masks
    trajectories: list[Trajectory] = []
    pruned_mass = 0.0
    # stack entries: (depth, prefix probability, outcome list, stepwise list, state)
    stack = [(0, 1.0, (), (), rho0)]
    while stack:
        depth, prob, outcomes, steps, state = stack.pop()
        if depth == cfg.n_seq:
            trajectories.append(Trajectory(
                outcomes=outcomes,
                probability=prob,
                stepwise_probs=np.array(steps),
                final_state=state,
            ))
            continue
        evolved = stepper.evolve(state)
        diag = np.diag(evolved).real
        for outcome, mask in ((1, masks[1]), (0, masks[0])):
            p = float(np.sum(mask * diag))
            if p < BRANCH_FLOOR:
                pruned_mass += prob * max(p, 0.0)
                continue
            post = evolved * mask[:, None] * mask[None, :] / p
            child_state = stepper.evolve(post) if depth + 1 == cfg.n_seq else post
            stack.append((depth + 1, prob * p, outcomes + (outcome,),
                          steps + (p,), child_state))
    if pruned_mass > PRUNED_MASS_TOL:
        raise NumericalError(f"pruned branch mass {pruned_mass:.3e} exceeds tolerance")
    trajectories.sort(key=lambda tr: tr.outcomes)
    return trajectories


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """Counter-based stream: independent of scheduling, reproducible per index."""
    return np.random.default_rng((master_seed, index))


def sample_trajectory(
    cfg: ProtocolConfig,
    dynamics: ProbeDynamics,
    rng: np.random.Generator,
    entropy_steps: set[int] | None = None,
) -> Trajectory:
    """Draw one trajectory; deterministic given the generator state.

    ``entropy_steps`` requests the register entropy after the listed steps
    (evaluated on the state at the start of the following cycle, matching
    ``final_state``).
    """
    rho0, stepper = dynamics.at_temperature(cfg.temperature)
    masks = cfg.povm.masks
    outcomes: list[int] = []
    steps: list[float] = []
    entropies: dict[int, float] = {}
    state = rho0
    for k in range(1, cfg.n_seq + 1):
        evolved = stepper.evolve(state)
        diag = np.diag(evolved).real
        p_pair = (float(np.sum(masks[0] * diag)), float(np.sum(masks[1] * diag)))
        outcome = 0 if rng.random() < p_pair[0] else 1
        p = p_pair[outcome]
        mask = masks[outcome]
        state = evolved * mask[:, None] * mask[None, :] / max(p, BRANCH_FLOOR)
        outcomes.append(outcome)
        steps.append(p)
        if entropy_steps is not None and k in entropy_steps and k < cfg.n_seq:
            entropies[k] = von_neumann_entropy(stepper.evolve(state))
    final_state = stepper.evolve(state)
    if entropy_steps is not None and cfg.n_seq in entropy_steps:
        entropies[cfg.n_seq] = von_neumann_entropy(final_state)
    return Trajectory(
        outcomes=tuple(outcomes),
        probability=float(np.prod(steps)),
        stepwise_probs=np.array(steps),
        final_state=final_state,
        step_entropies=entropies if entropy_steps is not None else None,
    )


def multi_site_probabilities(probe, n_measured: int) -> np.ndarray:
    """Computational-basis outcome distribution when measuring sites 1..n_measured.

    The measured block is the chain start; this choice is a convention (the
    marginal of other site subsets can differ away from half filling).
    """
    from .linalg import partial_trace

    n = probe.params.n_sites
    if not 1 <= n_measured <= n:
        raise ValidationError(f"n_measured {n_measured} outside [1, {n}]")
    reduced = partial_trace(probe.gibbs, range(1, n_measured + 1), n)
    p = np.clip(np.diag(reduced).real, 0.0, None)
    return p


@dataclass(frozen=True)
class EntropyEstimate:
    mean: float
    stderr: float
    n_samples: int


def average_entropy(trajectories: list[Trajectory]) -> EntropyEstimate:
    """Mean register entropy over sampled final states with its standard error."""
    if not trajectories:
        raise ValidationError("need at least one trajectory")
    values = np.array([von_neumann_entropy(tr.final_state) for tr in trajectories])
    stderr = float(values.std(ddof=0) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    return EntropyEstimate(mean=float(values.mean()), stderr=stderr, n_samples=len(values))


def sequence_labels(n_seq: int) -> list[str]:
    return [format(i, f"0{n_seq}b") for i in range(2 ** n_seq)]


@dataclass(frozen=True)
class SequenceProbabilityTable:
    """P(gamma | T) for every outcome sequence over a temperature list.

    ``probabilities[i, j]`` is the probability of sequence ``labels[i]`` at
    ``temperatures[j]``.
    """

    n_seq: int
    labels: list[str]
    temperatures: np.ndarray
    probabilities: np.ndarray

    def column(self, j: int) -> dict[str, float]:
        return dict(zip(self.labels, self.probabilities[:, j]))

    def at_temperature(self, temperature: float) -> dict[str, float]:
        idx = int(np.argmin(np.abs(self.temperatures - temperature)))
        if abs(float(self.temperatures[idx]) - temperature) > 1e-12:
            raise ValidationError(f"temperature {temperature} not in the table")
        return self.column(idx)

    def marginal(self, depth: int) -> "SequenceProbabilityTable":
        """Marginalize trailing outcomes down to prefixes of the given depth."""
        if not 1 <= depth <= self.n_seq:
            raise ValidationError(f"depth {depth} outside [1, {self.n_seq}]")
        p = self.probabilities.reshape(2 ** depth, -1, len(self.temperatures)).sum(axis=1)
        return SequenceProbabilityTable(
            n_seq=depth,
            labels=sequence_labels(depth),
            temperatures=self.temperatures,
            probabilities=p,
        )


def _unitary_leaf_weights(cfg: ProtocolConfig, dynamics: ProbeDynamics) -> np.ndarray:
    """e[leaf, l] = || K_gamma |eps_l> ||^2 for the unitary protocol.

    K_gamma is the T-independent chain of projectors and unitaries along the
    outcome sequence, so P(gamma | T) is the Gibbs-weight average e @ w(T).
    """
    spec = dynamics.spectrum
    u = dynamics.step_unitary()
    masks = cfg.povm.masks
    n_leaves = 2 ** cfg.n_seq
    e = np.empty((n_leaves, spec.dim))
    stack: list[tuple[int, int, np.ndarray]] = [(0, 0, spec.eigenvectors)]
    while stack:
        depth, prefix, b = stack.pop()
        if depth == cfg.n_seq:
            e[prefix] = np.sum(np.abs(b) ** 2, axis=0)
            continue
        evolved = u @ b
        for outcome, mask in ((1, masks[1]), (0, masks[0])):
            stack.append((depth + 1, (prefix << 1) | outcome, evolved * mask[:, None]))
    return e


def sequence_probability_table(
    cfg: ProtocolConfig,
    dynamics: ProbeDynamics,
    temperatures: np.ndarray,
) -> SequenceProbabilityTable:
    """Exact trajectory probabilities across temperatures.

    The unitary path factorizes into T-independent sequence weights contracted
    with Gibbs weights, which makes dense temperature grids cheap.  Dissipative
    dynamics rebuilds the propagator at every temperature.
    """
    _guard_sequence_length(cfg.n_seq)
    temps = np.asarray(temperatures, dtype=float)
    labels = sequence_labels(cfg.n_seq)
    if dynamics.unitary:
        e = _unitary_leaf_weights(cfg, dynamics)
        w = np.column_stack(
            [boltzmann_weights(dynamics.spectrum.eigenvalues, t)[0] for t in temps]
        )
        probs = e @ w
    else:
        probs = np.empty((len(labels), temps.size))
        for j, t in enumerate(temps):
            rho0, stepper = dynamics.at_temperature(float(t))
            masks = cfg.povm.masks
            col = np.zeros(len(labels))
            stack = [(0, 0, 1.0, rho0)]
            while stack:
                depth, prefix, prob, state = stack.pop()
                if depth == cfg.n_seq:
                    col[prefix] = prob
                    continue
                evolved = stepper.evolve(state)
                diag = np.diag(evolved).real
                for outcome, mask in ((1, masks[1]), (0, masks[0])):
                    p = float(np.sum(mask * diag))
                    child = (prefix << 1) | outcome
                    if p < BRANCH_FLOOR:
                        continue
                    post = evolved * mask[:, None] * mask[None, :] / p
                    stack.append((depth + 1, child, prob * p, post))
            probs[:, j] = col
    return SequenceProbabilityTable(
        n_seq=cfg.n_seq, labels=labels, temperatures=temps, probabilities=probs
    )

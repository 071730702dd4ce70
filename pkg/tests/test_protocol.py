import numpy as np
import pytest
import scipy.stats

from seqtherm.chain import ChainParams, gibbs_state
from seqtherm.errors import ResourceLimitError, ValidationError
from seqtherm.linalg import check_density_matrix, partial_trace, von_neumann_entropy
from seqtherm.protocol import (
    LocalPovm,
    ProbeDynamics,
    ProtocolConfig,
    Trajectory,
    average_entropy,
    enumerate_trajectory_tree,
    measure_site,
    multi_site_probabilities,
    sample_trajectory,
    sequence_probability_table,
    trajectory_rng,
)


def make_cfg(n=3, temperature=0.5, kappa=1.0, tau=3.0, n_seq=4, site=None):
    return ProtocolConfig(ChainParams(n), temperature, kappa, tau, n_seq, site)


class TestLocalPovm:
    def test_projector_algebra(self):
        povm = LocalPovm(site=2, n_sites=3)
        p0, p1 = povm.projectors
        assert np.array_equal(p0 + p1, np.eye(8))
        assert np.array_equal(p0 @ p0, p0)
        assert np.array_equal(p1 @ p1, p1)
        assert np.linalg.norm(p0 @ p1) == 0.0

    def test_site_range_checked(self):
        with pytest.raises(ValidationError):
            LocalPovm(site=5, n_sites=4)


class TestMeasureSite:
    def test_eigenstate_is_deterministic(self):
        dim = 16
        rho = np.zeros((dim, dim), dtype=complex)
        rho[0, 0] = 1.0  # |0000>
        branches = measure_site(rho, LocalPovm(site=4, n_sites=4))
        assert branches[0].probability == pytest.approx(1.0, abs=1e-15)
        assert branches[1].probability == pytest.approx(0.0, abs=1e-15)
        assert not branches[1].reachable

    def test_maximally_mixed_is_unbiased(self):
        rho = np.eye(8, dtype=complex) / 8
        branches = measure_site(rho, LocalPovm(site=1, n_sites=3))
        assert branches[0].probability == pytest.approx(0.5, abs=1e-15)
        assert branches[1].probability == pytest.approx(0.5, abs=1e-15)

    @pytest.mark.parametrize("n,temperature", [(2, 0.3), (3, 0.7), (4, 1.5)])
    def test_thermal_single_site_marginal_is_unbiased(self, n, temperature):
        probe = gibbs_state(ChainParams(n), temperature)
        marginal = partial_trace(probe.gibbs, [n], n)
        assert np.allclose(marginal, np.eye(2) / 2, atol=1e-12)
        branches = measure_site(probe.gibbs, LocalPovm(site=n, n_sites=n))
        assert branches[0].probability == pytest.approx(0.5, abs=1e-12)

    def test_probabilities_sum_to_one(self, rng):
        from seqtherm.linalg import random_density_matrix

        rho = random_density_matrix(8, rng)
        branches = measure_site(rho, LocalPovm(site=2, n_sites=3))
        total = sum(b.probability for b in branches)
        assert total == pytest.approx(1.0, abs=1e-12)


class TestTrajectoryTree:
    def test_single_step_is_fifty_fifty(self):
        cfg = make_cfg(n_seq=1)
        tree = enumerate_trajectory_tree(cfg, ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau))
        assert len(tree) == 2
        for tr in tree:
            assert tr.probability == pytest.approx(0.5, abs=1e-10)

    @pytest.mark.parametrize("n_seq", range(1, 9))
    def test_probabilities_sum_to_one(self, n_seq):
        cfg = make_cfg(n_seq=n_seq)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        tree = enumerate_trajectory_tree(cfg, dynamics)
        assert sum(tr.probability for tr in tree) == pytest.approx(1.0, abs=1e-10)

    def test_marginalizing_second_step_recovers_first(self):
        cfg1 = make_cfg(n_seq=1)
        cfg2 = make_cfg(n_seq=2)
        dynamics = ProbeDynamics(cfg1.chain, cfg1.kappa, cfg1.tau)
        tree1 = {tr.outcomes: tr.probability for tr in enumerate_trajectory_tree(cfg1, dynamics)}
        tree2 = enumerate_trajectory_tree(cfg2, dynamics)
        marginal = {}
        for tr in tree2:
            marginal[tr.outcomes[:1]] = marginal.get(tr.outcomes[:1], 0.0) + tr.probability
        for key, value in tree1.items():
            assert marginal[key] == pytest.approx(value, abs=1e-12)

    def test_trajectory_invariants(self):
        cfg = make_cfg(n_seq=5)
        tree = enumerate_trajectory_tree(cfg, ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau))
        for tr in tree:
            assert tr.probability == pytest.approx(np.prod(tr.stepwise_probs), abs=1e-12)
            assert np.all(tr.stepwise_probs >= 0) and np.all(tr.stepwise_probs <= 1)
            check_density_matrix(tr.final_state)

    def test_sequence_guard(self):
        cfg = make_cfg(n_seq=21)
        with pytest.raises(ResourceLimitError, match="[Mm]onte"):
            enumerate_trajectory_tree(cfg, ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau))


class TestSampler:
    def test_same_seed_is_bit_identical(self):
        cfg = make_cfg(n_seq=6)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        a = sample_trajectory(cfg, dynamics, trajectory_rng(11, 0))
        b = sample_trajectory(cfg, dynamics, trajectory_rng(11, 0))
        assert a.outcomes == b.outcomes
        assert np.array_equal(a.stepwise_probs, b.stepwise_probs)
        assert np.array_equal(a.final_state, b.final_state)

    def test_empirical_frequencies_match_tree(self):
        cfg = make_cfg(n_seq=4)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        exact = {tr.outcomes: tr.probability for tr in enumerate_trajectory_tree(cfg, dynamics)}
        n_samples = 10_000
        counts = {}
        for j in range(n_samples):
            tr = sample_trajectory(cfg, dynamics, trajectory_rng(123, j))
            counts[tr.outcomes] = counts.get(tr.outcomes, 0) + 1
        for outcomes, p in exact.items():
            sigma = np.sqrt(p * (1 - p) / n_samples)
            freq = counts.get(outcomes, 0) / n_samples
            assert abs(freq - p) < 4 * sigma + 1e-12

    def test_chi_square_consistency(self):
        cfg = make_cfg(n_seq=6)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        tree = enumerate_trajectory_tree(cfg, dynamics)
        labels = [tr.outcomes for tr in tree]
        probs = np.array([tr.probability for tr in tree])
        n_samples = 10_000
        counts = dict.fromkeys(labels, 0)
        for j in range(n_samples):
            tr = sample_trajectory(cfg, dynamics, trajectory_rng(321, j))
            counts[tr.outcomes] += 1
        observed = np.array([counts[l] for l in labels], dtype=float)
        expected = probs / probs.sum() * n_samples
        # merge low-expectation bins for chi-square validity
        order = np.argsort(expected)
        merged_obs, merged_exp = [], []
        acc_o = acc_e = 0.0
        for idx in order:
            acc_o += observed[idx]
            acc_e += expected[idx]
            if acc_e >= 5.0:
                merged_obs.append(acc_o)
                merged_exp.append(acc_e)
                acc_o = acc_e = 0.0
        merged_obs[-1] += acc_o
        merged_exp[-1] += acc_e
        stat, p_value = scipy.stats.chisquare(merged_obs, merged_exp)
        assert p_value > 0.001

    def test_reset_proxy_steps_are_iid(self):
        cfg = make_cfg(n=2, n_seq=8, kappa=5.0)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau, reset_proxy=True)
        n_samples = 4000
        outcomes = np.array([
            sample_trajectory(cfg, dynamics, trajectory_rng(9, j)).outcomes
            for j in range(n_samples)
        ])
        # adjacent-step correlation vanishes within sampling error
        x = outcomes[:, :-1].ravel().astype(float)
        y = outcomes[:, 1:].ravel().astype(float)
        corr = np.corrcoef(x, y)[0, 1]
        assert abs(corr) < 4 / np.sqrt(x.size)


class TestMultiSiteProbabilities:
    def test_full_measurement_is_state_diagonal(self):
        probe = gibbs_state(ChainParams(3), 0.4)
        p = multi_site_probabilities(probe, 3)
        assert np.allclose(p, np.diag(probe.gibbs).real, atol=1e-14)
        assert p.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("temperature", [0.2, 1.0, 5.0])
    def test_single_site_is_unbiased(self, temperature):
        probe = gibbs_state(ChainParams(4), temperature)
        assert np.allclose(multi_site_probabilities(probe, 1), [0.5, 0.5], atol=1e-12)

    def test_infinite_temperature_is_uniform(self):
        probe = gibbs_state(ChainParams(4), 1e6)
        p = multi_site_probabilities(probe, 2)
        assert np.allclose(p, 0.25, atol=1e-6)

    def test_range_check(self):
        probe = gibbs_state(ChainParams(3), 1.0)
        with pytest.raises(ValidationError):
            multi_site_probabilities(probe, 4)


class TestAverageEntropy:
    def test_no_measurement_gives_thermal_entropy(self):
        probe = gibbs_state(ChainParams(3), 0.5)
        thermal = Trajectory(
            outcomes=(), probability=1.0,
            stepwise_probs=np.array([]), final_state=probe.gibbs,
        )
        est = average_entropy([thermal, thermal, thermal])
        assert est.mean == pytest.approx(von_neumann_entropy(probe.gibbs), abs=1e-12)
        assert est.stderr == 0.0

    def test_reset_proxy_keeps_thermal_entropy(self):
        cfg = make_cfg(n=3, temperature=0.4, kappa=8.0, n_seq=5)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau, reset_proxy=True)
        probe = gibbs_state(cfg.chain, cfg.temperature)
        samples = [sample_trajectory(cfg, dynamics, trajectory_rng(5, j)) for j in range(20)]
        est = average_entropy(samples)
        assert est.mean == pytest.approx(von_neumann_entropy(probe.gibbs), abs=1e-10)
        assert est.stderr == pytest.approx(0.0, abs=1e-10)

    def test_unitary_protocol_purifies(self):
        cfg = make_cfg(n=3, temperature=0.3, kappa=0.0, tau=3.0, n_seq=12)
        dynamics = ProbeDynamics(cfg.chain, 0.0, cfg.tau)
        checkpoints = {1, 4, 8, 12}
        samples = [
            sample_trajectory(cfg, dynamics, trajectory_rng(77, j), entropy_steps=checkpoints)
            for j in range(150)
        ]
        means = {
            k: np.mean([tr.step_entropies[k] for tr in samples]) for k in sorted(checkpoints)
        }
        values = [means[k] for k in sorted(checkpoints)]
        stderrs = [
            np.std([tr.step_entropies[k] for tr in samples]) / np.sqrt(len(samples))
            for k in sorted(checkpoints)
        ]
        for (a, b, err) in zip(values, values[1:], stderrs[1:]):
            assert b <= a + 3 * err

    def test_empty_set_rejected(self):
        with pytest.raises(ValidationError):
            average_entropy([])


class TestSequenceProbabilityTable:
    def test_dissipative_table_matches_tree(self):
        cfg = make_cfg(n_seq=3)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        table = sequence_probability_table(cfg, dynamics, np.array([cfg.temperature]))
        tree = enumerate_trajectory_tree(cfg, dynamics)
        for tr in tree:
            label = "".join(str(b) for b in tr.outcomes)
            idx = table.labels.index(label)
            assert table.probabilities[idx, 0] == pytest.approx(tr.probability, abs=1e-12)

    def test_unitary_fast_path_matches_tree(self):
        cfg = make_cfg(n=3, kappa=0.0, n_seq=4)
        dynamics = ProbeDynamics(cfg.chain, 0.0, cfg.tau)
        table = sequence_probability_table(cfg, dynamics, np.array([cfg.temperature, 0.9]))
        tree = enumerate_trajectory_tree(cfg, dynamics)
        for tr in tree:
            label = "".join(str(b) for b in tr.outcomes)
            idx = table.labels.index(label)
            assert table.probabilities[idx, 0] == pytest.approx(tr.probability, abs=1e-10)
        # columns normalized at every temperature
        assert np.allclose(table.probabilities.sum(axis=0), 1.0, atol=1e-10)

    def test_marginal_consistency(self):
        cfg = make_cfg(n_seq=4)
        dynamics = ProbeDynamics(cfg.chain, cfg.kappa, cfg.tau)
        table = sequence_probability_table(cfg, dynamics, np.array([0.4, 0.6]))
        m2 = table.marginal(2)
        direct = sequence_probability_table(
            make_cfg(n_seq=2), dynamics, np.array([0.4, 0.6])
        )
        assert np.allclose(m2.probabilities, direct.probabilities, atol=1e-12)

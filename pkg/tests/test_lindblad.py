import numpy as np
import pytest
import scipy.linalg

from seqtherm.chain import ChainParams, SIGMA_X, SIGMA_Z, build_hamiltonian, chain_spectrum, gibbs_state
from seqtherm.errors import NumericalError, ValidationError
from seqtherm.lindblad import (
    SuperoperatorBlocks,
    bohr_frequencies,
    build_jump_operators,
    build_liouvillian,
    propagate,
    thermalization_time_t95,
    unvec,
    vec,
    zero_gap_block,
)
from seqtherm.linalg import Spectrum, eig_hermitian, fidelity, random_density_matrix


def down_state(n: int) -> np.ndarray:
    dim = 2**n
    rho = np.zeros((dim, dim), dtype=complex)
    rho[dim - 1, dim - 1] = 1.0
    return rho


class TestBohrFrequencies:
    def test_two_site_single_gap(self):
        spec = chain_spectrum(ChainParams(2))
        transitions = bohr_frequencies(spec)
        assert len(transitions) == 1
        assert transitions[0].omega == pytest.approx(4.0, abs=1e-9)
        assert len(transitions[0].pairs) == 3

    def test_fully_degenerate_spectrum_empty(self):
        spec = eig_hermitian(np.eye(4, dtype=complex))
        assert bohr_frequencies(spec) == []

    def test_sorted_positive_and_deduplicated(self):
        spec = chain_spectrum(ChainParams(4))
        transitions = bohr_frequencies(spec)
        omegas = [tr.omega for tr in transitions]
        assert all(w > 0 for w in omegas)
        assert all(b - a > 1e-9 for a, b in zip(omegas, omegas[1:]))

    def test_rejects_bad_tolerance(self):
        spec = chain_spectrum(ChainParams(2))
        with pytest.raises(ValidationError):
            bohr_frequencies(spec, omega_tol=0.0)


class TestJumpOperators:
    def test_reconstruction_of_coupling_operator(self):
        from seqtherm.chain import site_operator

        spec = chain_spectrum(ChainParams(2))
        transitions = bohr_frequencies(spec)
        jumps = build_jump_operators(spec, 1, transitions)
        total = sum(a + a.conj().T for a in jumps.values())
        total = total + zero_gap_block(spec, 1)
        assert np.linalg.norm(total - site_operator(SIGMA_X, 1, 2)) < 1e-9

    def test_projector_sandwich(self):
        spec = chain_spectrum(ChainParams(3))
        transitions = bohr_frequencies(spec)
        jumps = build_jump_operators(spec, 2, transitions)
        eps, v = spec.eigenvalues, spec.eigenvectors
        for tr in transitions:
            a = jumps[tr.omega]
            m_idx = {m for (m, _) in tr.pairs}
            n_idx = {n for (_, n) in tr.pairs}
            p_m = sum(np.outer(v[:, k], v[:, k].conj()) for k in m_idx)
            p_n = sum(np.outer(v[:, k], v[:, k].conj()) for k in n_idx)
            assert np.linalg.norm(p_n @ a @ p_m - a) < 1e-10

    def test_single_qubit_toy_lowering_operator(self):
        spec = eig_hermitian(SIGMA_Z.astype(complex))
        transitions = bohr_frequencies(spec)
        assert len(transitions) == 1 and transitions[0].omega == pytest.approx(2.0)
        jumps = build_jump_operators(spec, 1, transitions)
        # maps the upper level |0> (eps=+1) to |1> (eps=-1)
        assert np.allclose(jumps[transitions[0].omega], [[0, 0], [1, 0]], atol=1e-12)

    def test_site_out_of_range(self):
        spec = chain_spectrum(ChainParams(2))
        with pytest.raises(ValidationError):
            build_jump_operators(spec, 3, bohr_frequencies(spec))


class TestLiouvillian:
    def test_kappa_zero_is_pure_commutator(self, rng):
        spec = chain_spectrum(ChainParams(2))
        model = build_liouvillian(spec, 0.0, 1.0)
        rho = random_density_matrix(4, rng)
        h = build_hamiltonian(ChainParams(2))
        expected = -1j * (h @ rho - rho @ h)
        assert np.linalg.norm(model.apply_generator(rho) - expected) < 1e-10

    def test_gibbs_stationarity_example(self):
        spec = chain_spectrum(ChainParams(2))
        model = build_liouvillian(spec, 1.0, 1.0)
        rho_th = gibbs_state(ChainParams(2), 1.0).gibbs
        assert np.linalg.norm(model.apply_generator(rho_th)) < 1e-8

    def test_kms_rate_ratio(self):
        model = build_liouvillian(chain_spectrum(ChainParams(3)), 0.7, 0.4)
        for tr in model.transitions:
            ratio = model.rate(-tr.omega) / model.rate(tr.omega)
            assert ratio == pytest.approx(np.exp(-tr.omega / 0.4), rel=1e-12)

    def test_trace_annihilation(self, rng):
        model = build_liouvillian(chain_spectrum(ChainParams(2)), 1.3, 0.8)
        ident = vec(np.eye(4, dtype=complex))
        assert np.linalg.norm(ident.conj() @ model.liouvillian) < 1e-10
        rho = random_density_matrix(4, rng)
        assert abs(np.trace(model.apply_generator(rho))) < 1e-10

    def test_rejects_bad_parameters(self):
        spec = chain_spectrum(ChainParams(2))
        with pytest.raises(ValidationError):
            build_liouvillian(spec, 1.0, 0.0)
        with pytest.raises(ValidationError):
            build_liouvillian(spec, -1.0, 1.0)


class TestPropagate:
    def test_zero_time_identity(self, rng):
        model = build_liouvillian(chain_spectrum(ChainParams(2)), 1.0, 1.0)
        rho = random_density_matrix(4, rng)
        assert np.array_equal(propagate(model, rho, 0.0), rho)

    def test_unitary_limit_matches_independent_exponential(self, rng):
        params = ChainParams(3)
        model = build_liouvillian(chain_spectrum(params), 0.0, 1.0)
        rho = random_density_matrix(8, rng)
        t = 0.7
        u = scipy.linalg.expm(-1j * build_hamiltonian(params) * t)
        expected = u @ rho @ u.conj().T
        assert np.linalg.norm(propagate(model, rho, t) - expected) < 1e-9

    def test_trace_and_positivity_along_evolution(self, rng):
        model = build_liouvillian(chain_spectrum(ChainParams(3)), 1.0, 0.5)
        rho = random_density_matrix(8, rng)
        for t in np.linspace(0.05, 10.0, 100):
            out = propagate(model, rho, float(t))
            assert abs(np.trace(out).real - 1.0) < 1e-9
            assert np.min(np.linalg.eigvalsh(0.5 * (out + out.conj().T))) > -1e-8

    def test_repeated_calls_bit_identical(self, rng):
        model = build_liouvillian(chain_spectrum(ChainParams(2)), 1.0, 1.0)
        rho = random_density_matrix(4, rng)
        assert np.array_equal(propagate(model, rho, 1.5), propagate(model, rho, 1.5))

    def test_semigroup_property(self):
        model = build_liouvillian(chain_spectrum(ChainParams(3)), 0.9, 0.7)
        p1 = model._propagator(0.6)
        p2 = model._propagator(1.1)
        p12 = model._propagator(1.7)
        assert np.linalg.norm(p1 @ p2 - p12) < 1e-9

    def test_rejects_negative_time(self, rng):
        model = build_liouvillian(chain_spectrum(ChainParams(2)), 1.0, 1.0)
        with pytest.raises(ValidationError):
            propagate(model, random_density_matrix(4, rng), -1.0)

    def test_two_random_states_reach_the_same_steady_state(self):
        params = ChainParams(4)
        model = build_liouvillian(chain_spectrum(params), 1.0, 1.0)
        gen = np.random.default_rng(7)
        a = random_density_matrix(16, gen)
        b = random_density_matrix(16, gen)
        step = model._propagator(4.0)
        for _ in range(100):
            a = unvec(step @ vec(a), 16)
            a /= np.trace(a).real
            b = unvec(step @ vec(b), 16)
            b /= np.trace(b).real
        assert fidelity(a, b) > 1 - 1e-6


class TestStationarityGrid:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_gibbs_is_stationary(self, n):
        params = ChainParams(n)
        spec = chain_spectrum(params)
        blocks = SuperoperatorBlocks(spec, n)
        for temperature in (0.2, 0.5, 1.0):
            rho_th = gibbs_state(params, temperature).gibbs
            for kappa in (0.1, 1.0, 5.0):
                model = build_liouvillian(spec, kappa, temperature, blocks=blocks)
                residual = np.linalg.norm(model.apply_generator(rho_th))
                assert residual < 1e-8, (n, temperature, kappa, residual)


class TestT95:
    def test_already_thermal_returns_zero(self):
        params = ChainParams(3)
        model = build_liouvillian(chain_spectrum(params), 1.0, 1.0)
        rho_th = gibbs_state(params, 1.0).gibbs
        assert thermalization_time_t95(model, rho_th, 10.0, 0.1) == 0.0

    def test_faster_with_larger_kappa(self):
        spec = chain_spectrum(ChainParams(4))
        t_slow = thermalization_time_t95(
            build_liouvillian(spec, 1.0, 1.0), down_state(4), 150.0, 0.25
        )
        t_fast = thermalization_time_t95(
            build_liouvillian(spec, 2.0, 1.0), down_state(4), 150.0, 0.25
        )
        assert t_slow is not None and t_fast is not None and t_fast < t_slow

    def test_faster_at_higher_temperature(self):
        spec = chain_spectrum(ChainParams(4))
        t_cold = thermalization_time_t95(
            build_liouvillian(spec, 1.0, 1.0), down_state(4), 150.0, 0.25
        )
        t_hot = thermalization_time_t95(
            build_liouvillian(spec, 1.0, 2.0), down_state(4), 150.0, 0.25
        )
        assert t_cold is not None and t_hot is not None and t_hot < t_cold

    def test_unreachable_returns_none(self):
        params = ChainParams(3)
        model = build_liouvillian(chain_spectrum(params), 0.05, 1.0)
        assert thermalization_time_t95(model, down_state(3), 1.0, 0.5) is None

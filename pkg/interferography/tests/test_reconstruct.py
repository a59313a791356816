import logging
from os.path import join, dirname

import numpy as np
import pytest

from interferography.core import (QubitState, QuditPureState, fidelity,
                                  entanglement_entropy, reduced_marginal,
                                  qudit_amplitudes)
from interferography.exceptions import (ReconstructionError, DimensionError,
                                        IllConditionedChainError)
from interferography.fringe import FringeEstimate, Calibration, estimate
from interferography.optics import (InterferometerConfig, synthesize_series,
                                    theory_observables,
                                    qudit_theory_observables)
from interferography.reconstruct import (invert_qubit,
                                         reconstruct_pure_assumed,
                                         invert_qudit,
                                         entanglement_from_marginal,
                                         reconstruct_mixed_fidelity,
                                         ReconstructionResult)


SPECS = join(dirname(__file__), 'specs')


def exact(obs, flags=()):
    ''' Noise-free FringeEstimate from theory observables. '''
    return FringeEstimate(obs.phase_shift, 0.0, obs.visibility, 0.0,
                          obs.avg_intensity, 0.0, 1, flags)


def qudit_estimates(state):
    return [exact(qudit_theory_observables(state, k))
            for k in range(1, state.dim)]


def random_qudit(rng, dim):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return QuditPureState.from_amplitudes(psi / np.linalg.norm(psi))


@pytest.fixture(scope='module')
def quick():
    return InterferometerConfig.load(join(SPECS, 'quick.json'))


@pytest.fixture(scope='module')
def noiseless():
    return InterferometerConfig.load(join(SPECS, 'noiseless.json'))


class TestInvertQubit:

    def test_equator(self):
        result = invert_qubit(FringeEstimate(0.0, 0.0, 2 / 3, 0.0, 3 / 8, 0.0))
        assert np.allclose(result.state, (np.pi / 2, 0, 1))
        assert not result.flags

    def test_mixed(self):
        est = FringeEstimate(np.pi / 4, 0.0, 0.2, 0.0, 3 / 8, 0.0)
        state = invert_qubit(est).state
        assert state.theta == pytest.approx(np.pi / 2)
        assert state.phi == pytest.approx(np.pi / 4)
        assert state.mu == pytest.approx(0.3)

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            truth = QubitState(rng.uniform(0.1, np.pi - 0.1),
                               rng.uniform(-np.pi, np.pi),
                               rng.uniform(0, 1))
            state = invert_qubit(exact(theory_observables(truth))).state
            assert state.theta == pytest.approx(truth.theta, abs=1e-9)
            assert state.mu == pytest.approx(truth.mu, abs=1e-9)
            assert np.cos(state.phi - truth.phi) == pytest.approx(1, abs=1e-9)

    def test_pole(self):
        result = invert_qubit(FringeEstimate(1.0, 0.5, 0.0, 0.0, 0.5, 0.0))
        assert result.state == (0.0, 0.0, 1.0)
        assert 'phase-indeterminate' in result.flags

    def test_intensity_clamp(self, caplog):
        with caplog.at_level(logging.WARNING):
            result = invert_qubit(FringeEstimate(0, 0, 0, 0, 0.52, 0.0))
        assert 'avg-intensity-clamped' in result.flags
        assert result.state.theta == 0.0
        assert 'clamped' in caplog.text

    def test_mu_clamp(self):
        result = invert_qubit(FringeEstimate(0.3, 0.0, 0.8, 0.0, 3 / 8, 0.0))
        assert 'mu-clamped' in result.flags
        assert result.state.mu == 1.0

    def test_unnormalized(self):
        with pytest.raises(ReconstructionError):
            invert_qubit(FringeEstimate(0, 0, 0.5, 0, 120.0, 1.0, 10,
                                        ['unnormalized']))
        with pytest.raises(ReconstructionError):
            invert_qubit(FringeEstimate(0, 0, 0.5, 0, 0.4, 0.0, 0))

    def test_sigmas(self):
        est = FringeEstimate(0.5, 0.02, 0.4, 0.01, 0.35, 0.002, 50)
        sigmas = invert_qubit(est).sigmas
        assert set(sigmas) == {'theta', 'phi', 'mu'}
        assert sigmas['phi'] == 0.02
        assert sigmas['theta'] > 0
        assert sigmas['mu'] > 0

    @pytest.mark.parametrize('truth', [QubitState(0.1), QubitState(0.03),
                                       QubitState(np.pi - 0.06),
                                       QubitState(np.pi / 2, 0.4, 0.1)])
    def test_faint_fringes_through_pipeline(self, noiseless, truth):
        images = synthesize_series(truth, noiseless)
        est = estimate(images, Calibration.ideal(noiseless))
        assert est.n_slices_used == noiseless.n_slices * noiseless.n_images
        assert est.visibility == pytest.approx(
            theory_observables(truth).visibility, abs=1e-6)
        state = invert_qubit(est).state
        assert state.theta == pytest.approx(truth.theta, abs=1e-3)
        assert state.mu == pytest.approx(truth.mu, abs=1e-3)

    def test_fidelity_uncertainty(self):
        est = FringeEstimate(0.5, 0.1, 2 / 3, 0.0, 3 / 8, 0.0, 20)
        result = invert_qubit(est).with_target(QubitState(np.pi / 2))
        assert result.fidelity_vs_target == pytest.approx(
            (1 + np.cos(0.5)) / 2)
        assert result.fidelity_std == pytest.approx(np.sin(0.5) / 2 * 0.1,
                                                    rel=1e-5)
        assert result.to_json()['fidelity_std'] == result.fidelity_std
        exact_result = invert_qubit(exact(theory_observables(
            QubitState(1.0))))
        assert exact_result.with_target(QubitState(1.0)).fidelity_std == 0

    def test_json(self):
        result = invert_qubit(exact(theory_observables(
            QubitState(1.0, 0.4, 0.8))))
        data = result.with_target(QubitState(1.0, 0.4, 0.8)).to_json()
        assert data['kind'] == 'qubit'
        assert data['fidelity_vs_target'] == pytest.approx(1)
        assert data['theta'] == pytest.approx(1.0)
        assert data['rho']['dim'] == 2


class TestPureAssumed:

    def test_ignores_visibility(self):
        est = FringeEstimate(0.3, 0.0, 0.1, 0.0, 3 / 8, 0.0)
        state = reconstruct_pure_assumed(est).state
        assert np.allclose(state, (np.pi / 2, 0.3, 1.0))

    def test_mixed_target(self):
        truth = QubitState(np.pi / 2, 0.0, 0.0)
        fids = reconstruct_mixed_fidelity(exact(theory_observables(truth)),
                                          truth)
        assert fids.mixed == pytest.approx(1)
        assert fids.pure_assumed == pytest.approx(0.5)

    def test_pure_target(self):
        truth = QubitState(2.0, -1.0)
        fids = reconstruct_mixed_fidelity(exact(theory_observables(truth)),
                                          truth)
        assert fids.pure_assumed == pytest.approx(1)
        assert fids.mixed == pytest.approx(1)


    def test_fidelity_uncertainties(self):
        truth = QubitState(1.2, 0.3)
        est = FringeEstimate(0.5, 0.05, 0.6, 0.01, 0.4, 0.002, 50)
        fids = reconstruct_mixed_fidelity(est, truth)
        assert fids.pure_assumed_std > 0
        assert fids.mixed_std > 0
        pure = reconstruct_pure_assumed(est).with_target(truth)
        assert fids.pure_assumed_std == pure.fidelity_std


class TestEntanglement:

    @pytest.mark.parametrize('weight', [0.5, 0.8, 0.99])
    def test_schmidt_family(self, weight):
        psi = np.array([np.sqrt(weight), 0, 0, np.sqrt(1 - weight)])
        marginal = reduced_marginal(psi)
        expected = entanglement_entropy(marginal)
        est = exact(theory_observables(marginal))
        assert entanglement_from_marginal(est) == pytest.approx(expected,
                                                                abs=1e-9)

    @pytest.mark.parametrize('weight', [0.5, 0.8, 0.99])
    def test_schmidt_family_through_pipeline(self, noiseless, weight):
        psi = np.array([np.sqrt(weight), 0, 0, np.sqrt(1 - weight)])
        images = synthesize_series(reduced_marginal(psi), noiseless)
        est = estimate(images, Calibration.ideal(noiseless))
        expected = -weight * np.log2(weight) - \
            (1 - weight) * np.log2(1 - weight)
        assert entanglement_from_marginal(est) == pytest.approx(expected,
                                                                abs=1e-3)


class TestInvertQudit:

    def test_qubit_limit(self):
        truth = QubitState(1.3, 0.7)
        est = exact(theory_observables(truth))
        result = invert_qudit([est])
        assert result.kind == 'qudit'
        assert result.state.thetas[0] == pytest.approx(invert_qubit(
            est).state.theta)
        assert result.state.phis[0] == pytest.approx(0.7)

    def test_qutrit(self):
        truth = QuditPureState([np.pi / 2, np.pi / 2], [0.3, 0.7])
        result = invert_qudit(qudit_estimates(truth), dim=3)
        assert np.allclose(result.state.thetas, truth.thetas)
        assert np.allclose(result.state.phis, truth.phis)
        assert fidelity(result.rho, qudit_amplitudes(truth)) == \
            pytest.approx(1)

    @pytest.mark.parametrize('dim', [3, 4, 5])
    def test_random_states(self, dim):
        rng = np.random.default_rng(dim)
        for _ in range(20):
            truth = random_qudit(rng, dim)
            result = invert_qudit(qudit_estimates(truth))
            assert result.state.dim == dim
            assert fidelity(result.rho, qudit_amplitudes(truth)) >= 1 - 1e-9

    def test_ill_conditioned(self):
        truth = QuditPureState([np.pi / 2, np.pi, np.pi / 2], [0, 0, 0])
        with pytest.raises(IllConditionedChainError) as e:
            invert_qudit(qudit_estimates(truth))
        assert e.value.k == 2

    def test_downstream_vanishes(self):
        truth = QuditPureState([0.0, 1.0, 1.0], [0.2, 0.0, 0.0])
        result = invert_qudit(qudit_estimates(truth))
        assert fidelity(result.rho, qudit_amplitudes(truth)) == \
            pytest.approx(1)

    def test_dimension_checks(self):
        truth = QuditPureState([1.0, 1.0], [0.0, 0.0])
        ests = qudit_estimates(truth)
        with pytest.raises(DimensionError):
            invert_qudit([])
        with pytest.raises(DimensionError):
            invert_qudit(ests, dim=4)
        with pytest.raises(DimensionError):
            invert_qudit(ests, scales=[1.0])
        with pytest.raises(ReconstructionError):
            invert_qudit(ests, refine='sometimes')

    def test_refine_always(self):
        truth = QuditPureState([1.1, 0.8, 2.0], [0.1, -0.4, 2.5])
        result = invert_qudit(qudit_estimates(truth), refine='always')
        assert fidelity(result.rho, qudit_amplitudes(truth)) >= 1 - 1e-9
        assert 'moment-clamped' not in result.flags

    def test_clamped_moment_is_refined(self, caplog):
        truth = QuditPureState([1.1, 0.8], [0.1, -0.4])
        ests = qudit_estimates(truth)
        ests[0] = ests[0]._replace(visibility=ests[0].visibility * 1.5)
        with caplog.at_level(logging.WARNING):
            result = invert_qudit(ests)
        assert 'moment-clamped' in result.flags
        assert np.all(np.isfinite(result.state.thetas))

    def test_sigmas(self):
        truth = QuditPureState([1.1, 0.8], [0.1, -0.4])
        ests = [e._replace(visibility_std=0.01, avg_intensity_std=0.001,
                           phase_std=0.02) for e in qudit_estimates(truth)]
        sigmas = invert_qudit(ests).sigmas
        assert sorted(sigmas) == ['phi_1', 'phi_2', 'theta_1', 'theta_2']
        assert all(0 < s < 1 for s in sigmas.values())

    def test_noisy_pipeline(self, quick):
        truth = QuditPureState([np.pi / 2, np.pi / 2], [0.3, 0.7])
        cal = Calibration.ideal(quick)
        fids = []
        for seed in range(4):
            ests = [estimate(synthesize_series((truth, k), quick,
                                               seed=seed), cal)
                    for k in (1, 2)]
            result = invert_qudit(ests)
            fids.append(fidelity(result.rho, qudit_amplitudes(truth)))
        assert np.mean(fids) >= 0.97

    def test_json(self):
        truth = QuditPureState([1.0, 2.0], [0.5, -0.5])
        result = invert_qudit(qudit_estimates(truth)).with_target(
            qudit_amplitudes(truth))
        data = result.to_json()
        assert data['kind'] == 'qudit'
        assert len(data['thetas']) == 2
        assert data['rho']['dim'] == 3
        assert isinstance(result, ReconstructionResult)

"""Tests for the concentration pipeline, closed forms and the deterministic event oracle."""

import math

import numpy as np
import pytest

from cavity_concentration.dynamics import DynamicsParams, transfer_solution
from cavity_concentration.errors import (
    QuadratureError, UnsupportedConfigError, ValidationError, ZeroNormError,
)
from cavity_concentration.protocol import (
    CAVITY_A, CAVITY_B, MIN_QUAD_POINTS,
    Detector, InputPair, ProtocolConfig, Provenance,
    analytic_result, bell_fidelity, bell_target, click_jump, click_state_fidelity, closed_form_click_state,
    closed_form_fidelity, closed_form_rho24, closed_form_step1_probability,
    closed_form_success_probability, conditional_click_state, detection_no_click,
    event_distribution, fock_leakage, jump_operator, phase_correct, photon_numbers,
    prepare_initial, reduce_rho24, run_step1,
)
from cavity_concentration.qcore import EXCITED, GROUND, StateVector, fidelity_pure

EVENTS = ("no_click", "one_click_plus", "one_click_minus", "two_clicks")


def atomic_part(state):
    """Amplitudes of |g e>_24 and |e g>_24 with both cavities empty"""
    return (
        state.amplitude({"atom4": EXCITED}),
        state.amplitude({"atom2": EXCITED}),
    )


class TestInputs:

    def test_pair_must_be_normalized(self):
        with pytest.raises(ValidationError, match="not normalized"):
            InputPair(0.6, 0.7)

    def test_normalized_rescales(self):
        pair = InputPair.normalized(0.6, 0.8 + 1e-10)
        assert abs(pair.amp_eg) ** 2 + abs(pair.amp_ge) ** 2 == pytest.approx(1.0, abs=1e-15)

    def test_normalized_names_the_pair(self):
        with pytest.raises(ValidationError, match="pair \\(c, d\\)"):
            InputPair.normalized(1.0, 0.1, name="pair (c, d)")

    def test_complex_amplitudes(self):
        pair = InputPair(0.6j, 0.8)
        assert pair.amp_eg == 0.6j

    @pytest.mark.parametrize("t2", [0.0, -1.0, float("inf")])
    def test_bad_window(self, t2):
        pair = InputPair(0.6, 0.8)
        with pytest.raises(ValidationError):
            ProtocolConfig(pair, pair, DynamicsParams(1.0, 0.1), t2)

    def test_bad_truncation(self):
        pair = InputPair(0.6, 0.8)
        with pytest.raises(ValidationError):
            ProtocolConfig(pair, pair, DynamicsParams(1.0, 0.1), 1.0, n_max=0)

    def test_matched_flag_requires_equal_pairs(self):
        with pytest.raises(ValidationError, match="matched"):
            ProtocolConfig(InputPair(0.6, 0.8), InputPair(0.8, 0.6), DynamicsParams(1.0, 0.1), 1.0, matched=True)


class TestStepOne:

    def test_initial_state(self, matched):
        state = prepare_initial(matched)
        assert state.norm_squared() == pytest.approx(1.0)
        a, b = matched.a, matched.b
        assert state.amplitude({"atom1": EXCITED, "atom3": EXCITED}) == pytest.approx(a * a)
        assert state.amplitude({"atom1": EXCITED, "atom4": EXCITED}) == pytest.approx(a * b)

    def test_probability_matches_closed_form(self, matched, unmatched):
        for config in (matched, unmatched):
            _, p_step1 = run_step1(config)
            assert p_step1 == pytest.approx(closed_form_step1_probability(config), abs=1e-12)

    def test_reference_probability(self, make_matched):
        _, p_step1 = run_step1(make_matched(k=0.2))
        assert p_step1 == pytest.approx(0.7350, abs=1e-4)

    def test_lossless_transfer(self, make_matched):
        _, p_step1 = run_step1(make_matched(k=0.0))
        assert p_step1 == pytest.approx(1.0, abs=1e-12)

    def test_atoms_one_and_three_in_ground(self, matched):
        state, _ = run_step1(matched)
        digits = state.layout.digits()
        excited = (digits[:, state.layout.index("atom1")] == EXCITED) | (digits[:, state.layout.index("atom3")] == EXCITED)
        assert np.all(np.abs(state.amps[excited]) < 1e-15)

    def test_step_one_state(self, unmatched):
        state, _ = run_step1(unmatched)
        alpha = transfer_solution(unmatched.dyn).alpha
        a, b, c, d = unmatched.a, unmatched.b, unmatched.c, unmatched.d
        scale = math.sqrt(closed_form_step1_probability(unmatched))
        assert state.amplitude({CAVITY_A: 1, CAVITY_B: 1}) == pytest.approx(a * c * alpha ** 2 / scale, abs=1e-12)
        assert state.amplitude({CAVITY_A: 1, "atom4": EXCITED}) == pytest.approx(a * d * alpha / scale, abs=1e-12)
        assert state.amplitude({"atom2": EXCITED, "atom4": EXCITED}) == pytest.approx(b * d / scale, abs=1e-12)

    def test_no_fock_leakage(self, matched):
        state, _ = run_step1(matched)
        assert fock_leakage(state) < 1e-12


class TestDetectionStage:

    def test_photon_branch_decays(self, matched):
        state, _ = run_step1(matched)
        t_j = 1.3
        later, survival = detection_no_click(state, matched, t_j)
        ratio_before = state.amplitude({CAVITY_A: 1, "atom4": EXCITED}) / state.amplitude({"atom2": EXCITED, "atom4": EXCITED})
        ratio_after = later.amplitude({CAVITY_A: 1, "atom4": EXCITED}) / later.amplitude({"atom2": EXCITED, "atom4": EXCITED})
        assert ratio_after / ratio_before == pytest.approx(math.exp(-matched.dyn.k * t_j), abs=1e-12)
        assert 0.0 < survival < 1.0

    def test_time_outside_window(self, matched):
        state, _ = run_step1(matched)
        with pytest.raises(ValidationError):
            detection_no_click(state, matched, matched.t2 + 0.1)
        with pytest.raises(ValidationError):
            detection_no_click(state, matched, -0.1)

    def test_lossless_window_keeps_state(self, make_matched):
        config = make_matched(k=0.0)
        state, _ = run_step1(config)
        later, survival = detection_no_click(state, config, config.t2)
        assert survival == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(later.amps, state.amps, atol=1e-12)

    def test_jump_weight_completeness(self, unmatched):
        state, _ = run_step1(unmatched)
        k = unmatched.dyn.k
        weights = sum(2.0 * k * click_jump(state, detector).norm_squared() for detector in Detector)
        mean_photons = float(np.sum(np.abs(state.amps) ** 2 * photon_numbers(state.layout)))
        assert weights == pytest.approx(2.0 * k * mean_photons, abs=1e-12)

    @pytest.mark.parametrize("detector", list(Detector))
    def test_click_state_matches_closed_form(self, unmatched, detector):
        state, _ = run_step1(unmatched)
        survivor, _ = detection_no_click(state, unmatched, unmatched.t2)
        simulated = click_jump(survivor, detector).normalized()
        expected = closed_form_click_state(unmatched, detector)
        assert abs(simulated.overlap(expected)) == pytest.approx(1.0, abs=1e-12)

    def test_phase_correction_on_minus_branch(self, unmatched):
        state, _ = run_step1(unmatched)
        clicked = phase_correct(click_jump(state, Detector.MINUS))
        ge, eg = atomic_part(clicked)
        ad, bc = unmatched.a * unmatched.d, unmatched.b * unmatched.c
        assert ge * bc == pytest.approx(eg * ad, abs=1e-12)

    def test_jump_operator_is_balanced(self, matched):
        layout = matched.layout
        plus = jump_operator(layout, Detector.PLUS).entries
        minus = jump_operator(layout, Detector.MINUS).entries
        number = plus.conj().T @ plus + minus.conj().T @ minus
        np.testing.assert_allclose(np.diag(number).real, photon_numbers(layout), atol=1e-12)


class TestReducedState:

    def test_click_at_window_end_reproduces_mixture(self, make_matched):
        config = make_matched(a=0.6, k=0.2, t2=1.0)
        rho = reduce_rho24(conditional_click_state(config, config.t2, Detector.PLUS))
        np.testing.assert_allclose(rho.entries, closed_form_rho24(config).entries, atol=1e-12)
        assert rho.layout.labels == ("atom2", "atom4")

    def test_detector_symmetry(self, unmatched):
        plus = reduce_rho24(conditional_click_state(unmatched, 0.7, Detector.PLUS))
        minus = reduce_rho24(conditional_click_state(unmatched, 0.7, Detector.MINUS))
        np.testing.assert_allclose(plus.entries, minus.entries, atol=1e-12)

    def test_fidelity_independent_of_click_time(self, unmatched):
        values = [
            fidelity_pure(reduce_rho24(conditional_click_state(unmatched, t_j, Detector.MINUS)), bell_target())
            for t_j in np.linspace(0.0, unmatched.t2, 9)
        ]
        assert max(values) - min(values) <= 1e-10
        assert values[0] == pytest.approx(click_state_fidelity(unmatched), abs=1e-10)

    def test_bell_fidelity_matches_reduced_state(self, unmatched):
        layout = run_step1(unmatched)[0].layout
        rng = np.random.default_rng(12)
        states = [conditional_click_state(unmatched, 0.4, Detector.PLUS)]
        for _ in range(25):
            amps = rng.normal(size=layout.total_dim) + 1j * rng.normal(size=layout.total_dim)
            states.append(StateVector(layout, amps))
        for state in states:
            expected = fidelity_pure(reduce_rho24(state), bell_target())
            assert bell_fidelity(state) == pytest.approx(expected, abs=1e-12)

    def test_bell_fidelity_of_zero_vector(self, matched):
        layout = run_step1(matched)[0].layout
        with pytest.raises(ZeroNormError):
            bell_fidelity(StateVector(layout, np.zeros(layout.total_dim)))


class TestClosedForms:

    def test_fidelity_example(self, make_matched):
        base = make_matched(a=0.6)
        alpha_sq = transfer_solution(base.dyn).alpha ** 2
        t2 = math.log(2.0 * alpha_sq) / (2.0 * base.dyn.k)
        config = make_matched(a=0.6, t2=t2)
        assert closed_form_fidelity(config) == pytest.approx(0.64 / (0.64 + 0.36 * 0.5), abs=1e-12)

    def test_click_state_fidelity_reduces_to_matched(self, make_matched):
        config = make_matched(a=0.3, k=0.05, t2=5.0)
        assert click_state_fidelity(config) == pytest.approx(closed_form_fidelity(config), abs=1e-12)

    def test_rho24_fidelity_agrees(self, matched):
        assert fidelity_pure(closed_form_rho24(matched), bell_target()) == pytest.approx(
            closed_form_fidelity(matched), abs=1e-12)

    @pytest.mark.parametrize("formula", [
        closed_form_fidelity, closed_form_rho24, closed_form_success_probability, analytic_result,
    ])
    def test_unmatched_is_unsupported(self, unmatched, formula):
        with pytest.raises(UnsupportedConfigError):
            formula(unmatched)

    def test_success_probability(self, matched):
        alpha_sq = transfer_solution(matched.dyn).alpha ** 2
        decay = math.exp(-2.0 * matched.dyn.k * matched.t2)
        a_sq = abs(matched.a) ** 2
        b_sq = abs(matched.b) ** 2
        expected = (a_sq * b_sq + a_sq ** 2 * alpha_sq * decay) * alpha_sq * decay * (1.0 - decay)
        assert closed_form_success_probability(matched) == pytest.approx(expected, abs=1e-15)

    def test_analytic_result(self, matched):
        result = analytic_result(matched)
        assert result.provenance is Provenance.ANALYTIC
        assert result.fidelity == pytest.approx(closed_form_fidelity(matched))
        assert result.p_no_click is None


class TestEventDistribution:

    @pytest.mark.parametrize("config_name", ["matched", "unmatched"])
    def test_matches_independent_emission(self, request, emission_oracle, config_name):
        config = request.getfixturevalue(config_name)
        result = event_distribution(config)
        expected = emission_oracle(config)
        for event, value in result.event_probabilities().items():
            assert value == pytest.approx(expected[event], rel=1e-9, abs=1e-12)
        assert result.p_residual_photon == pytest.approx(expected["residual_photon"], rel=1e-9, abs=1e-12)
        assert result.p_step1 == pytest.approx(expected["p_step1"], abs=1e-12)

    def test_completeness(self, unmatched):
        result = event_distribution(unmatched)
        assert sum(result.event_probabilities().values()) == pytest.approx(1.0, abs=1e-9)

    def test_matched_fidelity_and_mixture(self, matched):
        result = event_distribution(matched)
        assert result.provenance is Provenance.DETERMINISTIC
        assert result.fidelity == pytest.approx(closed_form_fidelity(matched), abs=1e-9)
        np.testing.assert_allclose(result.rho24.entries, closed_form_rho24(matched).entries, atol=1e-9)
        assert result.p_success_paper == pytest.approx(closed_form_success_probability(matched))

    def test_unmatched_fidelity(self, unmatched):
        result = event_distribution(unmatched)
        assert result.fidelity == pytest.approx(click_state_fidelity(unmatched), abs=1e-9)
        assert result.p_success_paper is None

    def test_per_detector_states_agree(self, unmatched):
        by_detector = event_distribution(unmatched).rho24_by_detector
        np.testing.assert_allclose(
            by_detector[Detector.PLUS].entries, by_detector[Detector.MINUS].entries, atol=1e-12)

    def test_split_is_even(self, matched):
        result = event_distribution(matched)
        assert result.p_click_plus == pytest.approx(result.p_click_minus, abs=1e-12)

    def test_lossless_means_no_clicks(self, make_matched):
        result = event_distribution(make_matched(k=0.0))
        assert result.p_no_click == pytest.approx(1.0, abs=1e-12)
        assert result.fidelity is None
        assert result.rho24 is None

    def test_no_photons_no_clicks(self):
        pair = InputPair(0.0, 1.0)
        config = ProtocolConfig.matched_pairs(pair, DynamicsParams(1.0, 0.1), 2.0)
        result = event_distribution(config)
        assert result.p_no_click == pytest.approx(1.0, abs=1e-12)
        assert result.p_one_click == pytest.approx(0.0, abs=1e-15)

    def test_fidelity_nondecreasing_in_window(self, make_matched):
        fidelities = [event_distribution(make_matched(a=0.6, t2=t2)).fidelity for t2 in (0.5, 1.0, 2.0, 4.0, 8.0)]
        assert all(later >= earlier - 1e-12 for earlier, later in zip(fidelities, fidelities[1:]))

    def test_too_few_nodes(self, matched):
        with pytest.raises(ValidationError):
            event_distribution(matched, quad_points=MIN_QUAD_POINTS - 1)

    def test_larger_truncation_changes_nothing(self, make_matched):
        small = event_distribution(make_matched(n_max=1))
        large = event_distribution(make_matched(n_max=3))
        for event in EVENTS:
            assert small.event_probabilities()[event] == pytest.approx(large.event_probabilities()[event], abs=1e-12)

    def test_quadrature_error_is_numerical(self):
        assert issubclass(QuadratureError, ArithmeticError)

"""Tests for core/noise.py: channels, preparation errors, IQ readout and the simulated device."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.errors import CalibrationError, ChannelError, ConfigError, ValidationError
from core.noise import (
    IqModel,
    NoiseModel,
    NoiseSpec,
    accumulated_phase_cycles,
    amplitude_damping_channel,
    compose_channels,
    decomposed_error_unitary,
    dephasing_channel,
    depolarizing_channel,
    detuning_error,
    iq_effective_povm,
    iq_generate,
    preparation_channel,
    relaxation_channel,
    split_preparation_error,
    thermal_channel,
    thermal_population,
)
from core.quantum import (
    PAULI6_LABELS,
    DensityMatrix,
    KrausChannel,
    apply_channel,
    bloch_vector,
    identity_channel,
    is_unitary,
    pauli6_povm,
    pauli_eigenstate,
    pull_back_povm,
    rotation,
    trace_distance,
    unitary_channel,
)
from core.sampler import SeededRng, haar_random_unitary
from estimators.detector_tomography import coherent_error_report

ZERO = DensityMatrix(np.diag([1.0, 0.0]))
ONE = DensityMatrix(np.diag([0.0, 1.0]))
PLUS = pauli_eigenstate("x0")
PAULI_STATES = [pauli_eigenstate(label) for label in PAULI6_LABELS]


def _same_action(left: KrausChannel, right: KrausChannel, atol: float) -> bool:
    return all(
        np.allclose(apply_channel(left, state).entries, apply_channel(right, state).entries, atol=atol)
        for state in PAULI_STATES
    )


class TestStandardChannels:
    """Depolarizing, damping and dephasing channels."""

    @pytest.mark.parametrize(
        "channel",
        [depolarizing_channel(0.37), amplitude_damping_channel(0.2), dephasing_channel(0.6), thermal_channel(0.12)],
    )
    def test_trace_preserving(self, channel: KrausChannel) -> None:
        assert channel.is_trace_preserving()

    def test_zero_depolarization_is_identity(self) -> None:
        assert _same_action(depolarizing_channel(0.0), identity_channel(), atol=1e-12)

    def test_full_depolarization_of_plus(self) -> None:
        assert_allclose(apply_channel(depolarizing_channel(1.0), PLUS).entries, np.eye(2) / 2, atol=1e-12)

    def test_depolarized_ground_state(self) -> None:
        assert_allclose(apply_channel(depolarizing_channel(0.3), ZERO).entries, np.diag([0.85, 0.15]), atol=1e-12)

    def test_probability_out_of_range(self) -> None:
        with pytest.raises(ChannelError, match=r"\[0, 1\]"):
            depolarizing_channel(1.2)

    def test_composed_depolarization(self) -> None:
        """Two depolarizing steps act as one with p + q − pq."""
        p, q = 0.2, 0.35
        composed = compose_channels(depolarizing_channel(p), depolarizing_channel(q))
        assert composed.is_trace_preserving()
        assert _same_action(composed, depolarizing_channel(p + q - p * q), atol=1e-12)

    def test_identity_composition(self) -> None:
        channel = amplitude_damping_channel(0.4)
        assert _same_action(compose_channels(identity_channel(), channel), channel, atol=1e-12)


class TestRelaxation:
    """T1/T2 decay over a pulse."""

    def test_zero_duration_is_identity(self) -> None:
        assert _same_action(relaxation_channel(0.0, 20e-6, 15e-6), identity_channel(), atol=1e-12)

    def test_population_decay_at_t1(self) -> None:
        t1 = 20e-6
        output = apply_channel(relaxation_channel(t1, t1, 30e-6), ONE)
        assert output.entries[1, 1].real == pytest.approx(math.exp(-1), abs=1e-12)

    def test_coherence_decay_at_t2(self) -> None:
        t2 = 15e-6
        output = apply_channel(relaxation_channel(t2, 20e-6, t2), PLUS)
        assert abs(output.entries[0, 1]) == pytest.approx(0.5 * math.exp(-1), abs=1e-12)

    def test_unphysical_t2_rejected(self) -> None:
        with pytest.raises(ChannelError, match="exceeds"):
            relaxation_channel(100e-9, 10e-6, 25e-6)

    def test_short_pulse_is_close_to_identity(self) -> None:
        t, t1, t2 = 50e-9, 20e-6, 15e-6
        channel = relaxation_channel(t, t1, t2)
        worst = max(trace_distance(apply_channel(channel, state), state) for state in PAULI_STATES)
        assert worst < 2 * t / min(t1, t2)


class TestDetuningAndThermal:
    """Phase accumulation and thermal populations."""

    def test_detuning_phase_cycles(self) -> None:
        assert accumulated_phase_cycles(4e6, 200e-9) == pytest.approx(0.8, abs=1e-12)
        assert accumulated_phase_cycles(0.5e6, 200e-9) == pytest.approx(0.1, abs=1e-12)

    def test_zero_detuning_is_identity(self) -> None:
        assert_allclose(detuning_error(0.0, 200e-9), np.eye(2), atol=1e-15)

    def test_detuning_is_z_rotation(self) -> None:
        assert_allclose(detuning_error(4e6, 200e-9), rotation("z", 2 * math.pi * 0.8), atol=1e-12)

    def test_thermal_population_at_40_mk(self) -> None:
        assert thermal_population(0.040, 6.3e9) * 100 == pytest.approx(0.05, abs=0.01)

    def test_thermal_population_at_120_mk(self) -> None:
        assert thermal_population(0.120, 6.3e9) * 100 == pytest.approx(7.3, abs=0.2)

    def test_thermal_population_limits(self) -> None:
        assert thermal_population(0.0) == 0.0
        assert thermal_population(math.inf) == 0.5

    def test_thermal_channel_fixed_point(self) -> None:
        excited = thermal_population(0.120)
        output = apply_channel(thermal_channel(0.120), ZERO)
        assert output.entries[1, 1].real == pytest.approx(excited, abs=1e-12)

    def test_zero_temperature_fixes_ground(self) -> None:
        assert_allclose(apply_channel(thermal_channel(0.0), ZERO).entries, ZERO.entries, atol=1e-15)

    def test_infinite_temperature_mixes(self) -> None:
        assert_allclose(apply_channel(thermal_channel(math.inf), PLUS).entries, np.eye(2) / 2, atol=1e-12)

    def test_negative_temperature_rejected(self) -> None:
        with pytest.raises(ChannelError):
            thermal_population(-0.01)


class TestPreparationErrors:
    """Splitting a noisy preparation into an error and the ideal rotation."""

    def test_ideal_preparation_has_identity_error(self) -> None:
        unitary = haar_random_unitary(2, SeededRng(1))
        assert_allclose(split_preparation_error(unitary, unitary), np.eye(2), atol=1e-12)

    def test_polar_angle_error(self) -> None:
        """θ2 = 0, Δ1 = 0.1, Δ2 = 0 leaves a pure R_Y(0.1) error."""
        ideal = rotation("y", math.pi / 2)
        noisy = decomposed_error_unitary(0.0, 0.1, 0.0) @ ideal
        assert_allclose(split_preparation_error(noisy, ideal), rotation("y", 0.1), atol=1e-12)

    def test_recomposition(self) -> None:
        rng = SeededRng(2)
        for _ in range(20):
            ideal, noisy = haar_random_unitary(2, rng), haar_random_unitary(2, rng)
            error = split_preparation_error(noisy, ideal)
            assert is_unitary(error)
            assert_allclose(error @ ideal, noisy, atol=1e-10)

    def test_non_unitary_rejected(self) -> None:
        with pytest.raises(ValidationError, match="unitary"):
            split_preparation_error(np.diag([1.0, 0.5]), np.eye(2))

    def test_single_identity_error_is_unitary_channel(self) -> None:
        ideal = rotation("y", 0.7)
        channel = preparation_channel(ideal, [(1.0, np.eye(2))])
        assert _same_action(channel, unitary_channel(ideal), atol=1e-12)

    def test_invalid_ensemble_weights(self) -> None:
        with pytest.raises(ChannelError, match="sum to 1"):
            preparation_channel(np.eye(2), [(0.6, np.eye(2)), (0.6, np.eye(2))])

    def test_symmetric_jitter_has_no_transverse_bias(self) -> None:
        """±Δ1/±Δ2 with equal weights keeps |0⟩ on the z axis."""
        delta = 0.2
        ensemble = [(0.25, decomposed_error_unitary(0.0, s1 * delta, s2 * delta)) for s1 in (1, -1) for s2 in (1, -1)]
        output = apply_channel(preparation_channel(np.eye(2), ensemble), ZERO)
        x, y, z = bloch_vector(output)
        assert (x, y) == (pytest.approx(0.0, abs=1e-12), pytest.approx(0.0, abs=1e-12))
        assert z == pytest.approx(math.cos(delta), abs=1e-12)

    def test_direct_channel_equals_composition(self) -> None:
        """Σ p_i (E_i U) ρ (E_i U)† equals the error channel after the ideal rotation."""
        generator = SeededRng(3).generator
        for _ in range(100):
            theta2 = generator.uniform(0, 2 * math.pi)
            ideal = rotation("z", theta2) @ rotation("y", generator.uniform(0, math.pi))
            weights = generator.dirichlet(np.ones(3))
            errors = [decomposed_error_unitary(theta2, *generator.normal(scale=0.1, size=2)) for _ in weights]
            direct = preparation_channel(ideal, list(zip(weights, errors)))
            error_channel = KrausChannel(tuple(math.sqrt(w) * e for w, e in zip(weights, errors)))
            composed = compose_channels(unitary_channel(ideal), error_channel)
            assert _same_action(direct, composed, atol=1e-10)

    def test_error_depends_on_azimuth(self, pauli6) -> None:
        """The same angle errors act differently for |0_x⟩ (θ2 = 0) and |0_y⟩ (θ2 = π/2)."""
        ensemble_x = [(1.0, decomposed_error_unitary(0.0, 0.15, 0.05))]
        ensemble_y = [(1.0, decomposed_error_unitary(math.pi / 2, 0.15, 0.05))]
        povm_x = pull_back_povm(KrausChannel(tuple(e for _, e in ensemble_x)), pauli6)
        povm_y = pull_back_povm(KrausChannel(tuple(e for _, e in ensemble_y)), pauli6)
        worst = max(trace_distance(a, b) for a, b in zip(povm_x.effects, povm_y.effects))
        assert worst > 1e-3


class TestIqReadout:
    """Gaussian blobs in the IQ plane and the classifier trained on them."""

    def test_zero_width_returns_centroid(self) -> None:
        model = IqModel((0.0, 0.0), (1.0, 2.0), 0.0)
        assert_allclose(iq_generate(1, model, SeededRng(1)), [1.0, 2.0])

    def test_sample_mean_near_centroid(self) -> None:
        model = IqModel.from_separation(3.0)
        points = iq_generate(0, model, SeededRng(2), size=100_000)
        assert np.all(np.abs(points.mean(axis=0) - model.centroid_0) < 3 / math.sqrt(100_000))

    def test_bad_bit_rejected(self) -> None:
        with pytest.raises(ValidationError):
            iq_generate(2, IqModel.from_separation(1.0), SeededRng(1))

    def test_analytic_assignment_fidelity(self) -> None:
        """A 4.107σ separation misassigns about 2% of shots per state."""
        matrix = IqModel.from_separation(4.107).assignment_matrix()
        assert matrix[0, 0] == pytest.approx(0.98, abs=1e-3)
        assert matrix[1, 1] == pytest.approx(0.98, abs=1e-3)
        assert_allclose(matrix.sum(axis=0), [1.0, 1.0])

    @pytest.mark.parametrize("classifier", ["nearest_centroid", "lda"])
    def test_trained_assignment_fidelity(self, classifier: str) -> None:
        calibration = iq_effective_povm(IqModel.from_separation(4.107), 100_000, SeededRng(3), classifier)
        fidelity = 0.5 * (calibration.assignment[0, 0] + calibration.assignment[1, 1])
        assert fidelity == pytest.approx(0.98, abs=0.005)
        assert_allclose(calibration.povm.matrices.sum(axis=0), np.eye(2), atol=1e-12)

    def test_infinite_separation_is_projective(self) -> None:
        calibration = iq_effective_povm(IqModel.from_separation(math.inf), 1000, SeededRng(4))
        assert_allclose(calibration.assignment, np.eye(2))
        assert_allclose(calibration.povm.effect("z0").entries, np.diag([1.0, 0.0]))

    def test_overlapping_blobs_are_coin_flips(self) -> None:
        calibration = iq_effective_povm(IqModel.from_separation(0.0), 20_000, SeededRng(5))
        assert_allclose(calibration.assignment, np.full((2, 2), 0.5), atol=0.05)

    def test_degenerate_model_rejected(self) -> None:
        with pytest.raises(CalibrationError, match="degenerate"):
            iq_effective_povm(IqModel((0.0, 0.0), (0.0, 0.0), 0.0), 1000, SeededRng(6))

    def test_too_few_shots_rejected(self) -> None:
        with pytest.raises(ValidationError, match="at least 100"):
            iq_effective_povm(IqModel.from_separation(2.0), 50, SeededRng(6))


class TestNoiseSpec:
    """Validation and JSON form of noise specifications."""

    def test_defaults_are_merged(self) -> None:
        spec = NoiseSpec("detuning", {"detuning_hz": 4e6})
        assert spec.params["duration_s"] == pytest.approx(200e-9)

    def test_unknown_kind(self) -> None:
        with pytest.raises(ConfigError, match="unknown noise kind"):
            NoiseSpec("telegraph", {})

    def test_missing_parameter(self) -> None:
        with pytest.raises(ConfigError, match="missing"):
            NoiseSpec("depolarizing", {})

    def test_out_of_range_probability(self) -> None:
        with pytest.raises(ConfigError):
            NoiseSpec("depolarizing", {"p": 1.5})

    def test_unphysical_relaxation(self) -> None:
        with pytest.raises(ConfigError):
            NoiseSpec("amplitude_damping", {"duration_s": 1e-7, "t1_s": 1e-5, "t2_s": 3e-5})

    def test_composite_json_round_trip(self) -> None:
        spec = NoiseSpec("composite", {}, (NoiseSpec("iq_readout", {"separation": 1.0}), NoiseSpec("depolarizing", {"p": 0.3})))
        decoded = NoiseSpec.from_json_dict(spec.to_json_dict())
        assert [c.kind for c in decoded.flatten()] == ["iq_readout", "depolarizing"]
        assert decoded.components[1].params["p"] == pytest.approx(0.3)

    def test_infinite_values_serialize_as_strings(self) -> None:
        spec = NoiseSpec("iq_readout", {"separation": math.inf})
        payload = spec.to_json_dict()
        assert payload["params"]["separation"] == "inf"
        assert math.isinf(NoiseSpec.from_json_dict(payload).params["separation"])

    def test_with_strength(self) -> None:
        spec = NoiseSpec("depolarizing", {"p": 0.1}).with_strength(0.4)
        assert spec.params["p"] == pytest.approx(0.4)


class TestNoiseModel:
    """The simulated device: noisy preparations and the true readout POVM."""

    def test_identity_noise_gives_ideal_povm(self, pauli6) -> None:
        device = NoiseModel(NoiseSpec.identity(), SeededRng(1))
        assert_allclose(device.noisy_povm().matrices, pauli6.matrices, atol=1e-12)
        assert not device.has_preparation_errors

    def test_depolarizing_readout_matches_pull_back(self, pauli6) -> None:
        device = NoiseModel(NoiseSpec("depolarizing", {"p": 0.25}), SeededRng(1))
        expected = pull_back_povm(depolarizing_channel(0.25), pauli6)
        assert_allclose(device.noisy_povm().matrices, expected.matrices, atol=1e-12)

    def test_readout_noise_leaves_preparation_clean(self) -> None:
        device = NoiseModel(NoiseSpec("depolarizing", {"p": 0.25}), SeededRng(1))
        assert device.prepare(PLUS) is PLUS

    def test_projective_iq_readout(self, pauli6) -> None:
        device = NoiseModel(NoiseSpec("iq_readout", {"separation": math.inf}), SeededRng(2))
        assert_allclose(device.noisy_povm().matrices, pauli6.matrices, atol=1e-12)

    def test_iq_readout_is_classical(self) -> None:
        device = NoiseModel(NoiseSpec("iq_readout", {"separation": 2.0}), SeededRng(3))
        report = coherent_error_report(device.noisy_povm())
        assert report.max_off_diagonal < 1e-12
        assert report.classical

    def test_detuning_spares_z_readout(self) -> None:
        device = NoiseModel(NoiseSpec("detuning", {"detuning_hz": 4e6}), SeededRng(4), readout_only=True)
        povm = device.noisy_povm()
        assert_allclose(povm.effect("z0").entries, np.diag([1 / 3, 0.0]), atol=1e-12)

    def test_detuning_creates_coherent_readout_errors(self) -> None:
        device = NoiseModel(NoiseSpec("detuning", {"detuning_hz": 4e6}), SeededRng(4), readout_only=True)
        report = coherent_error_report(device.noisy_povm())
        by_label = {effect.label: effect.max_off_diagonal for effect in report.effects}
        assert min(by_label[label] for label in ("x0", "x1", "y0", "y1")) > 0.1
        assert max(by_label["z0"], by_label["z1"]) < 1e-12
        assert not report.classical

    def test_thermal_preparation_population(self) -> None:
        device = NoiseModel(NoiseSpec("thermal", {"temperature_k": 0.120}), SeededRng(5))
        assert device.has_preparation_errors
        prepared = device.prepare(ZERO)
        assert prepared.entries[1, 1].real == pytest.approx(thermal_population(0.120), abs=1e-12)

    def test_thermal_redirected_to_readout(self) -> None:
        excited = thermal_population(0.120)
        device = NoiseModel(NoiseSpec("thermal", {"temperature_k": 0.120}), SeededRng(5), readout_only=True)
        assert not device.has_preparation_errors
        assert_allclose(device.noisy_povm().effect("z0").entries, np.diag([1 - excited, excited]) / 3, atol=1e-12)

    def test_preparation_error_scales_with_pulse(self) -> None:
        """|0⟩ needs no pulse, so detuning leaves it untouched while |+⟩ rotates."""
        device = NoiseModel(NoiseSpec("detuning", {"detuning_hz": 4e6}), SeededRng(6))
        assert_allclose(device.prepare(ZERO).entries, ZERO.entries, atol=1e-12)
        assert trace_distance(device.prepare(PLUS), PLUS) > 0.1

    def test_noisy_povm_is_valid_for_composite(self) -> None:
        spec = NoiseSpec(
            "composite",
            {},
            (
                NoiseSpec("amplitude_damping", {"duration_s": 200e-9, "t1_s": 10e-6, "t2_s": 8e-6}),
                NoiseSpec("detuning", {"detuning_hz": 1e6}),
                NoiseSpec("iq_readout", {"separation": 2.5}),
                NoiseSpec("depolarizing", {"p": 0.1}),
            ),
        )
        povm = NoiseModel(spec, SeededRng(7)).noisy_povm()
        assert_allclose(povm.matrices.sum(axis=0), np.eye(2), atol=1e-9)
        assert povm.labels == pauli6_povm().labels

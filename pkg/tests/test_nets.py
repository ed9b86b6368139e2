"""Engine tests: forward oracles, finite-difference gradient checks, steps."""

import math

import numpy as np
import pytest

from fedgan_lab.nets import (
    CHECKPOINT_MAGIC,
    Layer,
    NetworkParameters,
    ShapeMismatchError,
    TrainingHyperparams,
    apply_update,
    backward,
    disc_objective,
    discriminator_step,
    forward,
    gen_objective,
    generator_step,
    grad_l2_norm,
    init_mlp,
    load_params,
    params_from_bytes,
    params_to_bytes,
    sample_noise,
    save_params,
    stack_networks,
    toy_gan_architecture,
)

LN4 = math.log(4.0)


# independent loss/gradient oracle shared with the verification suite
from fd_oracle import finite_difference_grads, max_relative_error, random_net_and_batch


def random_net(rng, tag):
    """Small random net suited to the loss tag, inputs away from kinks."""
    pair = random_net_and_batch(rng, tag)
    if pair is None:
        pytest.skip("could not place batch away from activation kinks")
    return pair


class TestForward:
    def test_identity_layer_passthrough(self):
        net = NetworkParameters([Layer(np.eye(2), np.zeros(2), "identity")])
        out = forward(net, [[1.0, 2.0]])
        assert np.array_equal(out, [[1.0, 2.0]])

    def test_zero_sigmoid_layer_gives_half(self):
        net = NetworkParameters([Layer(np.zeros((3, 2)), np.zeros(3), "sigmoid")])
        out = forward(net, [[5.0, -9.0], [0.1, 0.2]])
        assert np.array_equal(out, np.full((2, 3), 0.5))

    def test_two_layer_hand_evaluation(self):
        # independent scalar arithmetic for a fixed 2x2 net
        w1 = np.array([[0.5, -1.0], [2.0, 0.25]])
        b1 = np.array([0.1, -0.2])
        w2 = np.array([[1.5, -0.5]])
        b2 = np.array([0.3])
        net = NetworkParameters(
            [Layer(w1, b1, "tanh"), Layer(w2, b2, "identity")]
        )
        x = [0.7, -0.3]
        h0 = math.tanh(0.5 * 0.7 + (-1.0) * (-0.3) + 0.1)
        h1 = math.tanh(2.0 * 0.7 + 0.25 * (-0.3) + (-0.2))
        expected = 1.5 * h0 + (-0.5) * h1 + 0.3
        out = forward(net, [x])
        assert out[0, 0] == pytest.approx(expected, abs=1e-15)

    def test_dimension_mismatch(self):
        net = NetworkParameters([Layer(np.eye(2), np.zeros(2), "identity")])
        with pytest.raises(ShapeMismatchError):
            forward(net, [[1.0, 2.0, 3.0]])

    def test_layer_chain_validation(self):
        with pytest.raises(ShapeMismatchError):
            NetworkParameters(
                [
                    Layer(np.zeros((3, 2)), np.zeros(3), "tanh"),
                    Layer(np.zeros((1, 4)), np.zeros(1), "sigmoid"),
                ]
            )

    def test_rejects_nonfinite_params(self):
        with pytest.raises(ValueError):
            Layer(np.array([[np.inf]]), np.zeros(1), "identity")


class TestBackward:
    def test_zero_weight_disc_bias_gradient_closed_form(self):
        # W=0 => D=0.5 everywhere; with balanced real/fake the bias
        # gradient is 0.5 - 0.5 = 0 and the weight gradient is
        # 0.5*(mean_real x - mean_fake x) per input coordinate
        net = NetworkParameters([Layer(np.zeros((1, 2)), np.zeros(1), "sigmoid")])
        real = np.array([[1.0, 2.0], [3.0, -1.0]])
        fake = np.array([[0.5, 0.5], [-0.5, 1.5]])
        batch = np.vstack([real, fake])
        targets = [1, 1, 0, 0]
        grads = backward(net, batch, "disc-loss", targets=targets)
        dw, db = grads[0]
        assert db == pytest.approx(0.0, abs=1e-15)
        expected = 0.5 * (real.mean(axis=0) - fake.mean(axis=0))
        assert np.allclose(dw[0], expected, atol=1e-12)

    def test_stationary_point_has_zero_gradient(self):
        # identical real and fake halves at D=0.5: exact stationary point
        net = NetworkParameters([Layer(np.zeros((1, 3)), np.zeros(1), "sigmoid")])
        rows = np.array([[1.0, -2.0, 0.5], [0.0, 4.0, 1.0]])
        batch = np.vstack([rows, rows])
        grads = backward(net, batch, "disc-loss", targets=[1, 1, 0, 0])
        assert grad_l2_norm(grads) < 1e-8

    def test_zero_weight_classifier_bias_closed_form(self):
        # uniform softmax: db_c = 1/C - class frequency
        net = NetworkParameters([Layer(np.zeros((3, 2)), np.zeros(3), "softmax")])
        batch = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [1.0, 1.0]])
        labels = [0, 0, 1, 2]
        grads = backward(net, batch, "classifier-ce", targets=labels)
        _, db = grads[0]
        freq = np.array([2, 1, 1]) / 4.0
        assert np.allclose(db, 1.0 / 3.0 - freq, atol=1e-12)

    @pytest.mark.parametrize("tag", ["disc-loss", "gen-loss", "gen-loss-nonsat", "classifier-ce"])
    def test_matches_finite_differences(self, tag):
        seeds = {"disc-loss": 101, "gen-loss": 202,
                 "gen-loss-nonsat": 303, "classifier-ce": 404}
        rng = np.random.default_rng(seeds[tag])
        for _ in range(8):
            net, batch = random_net(rng, tag)
            if tag == "disc-loss":
                targets = rng.integers(0, 2, size=batch.shape[0])
                while targets.min() == targets.max():
                    targets = rng.integers(0, 2, size=batch.shape[0])
            elif tag == "classifier-ce":
                targets = rng.integers(0, net.out_dim, size=batch.shape[0])
            else:
                targets = None
            analytic = backward(net, batch, tag, targets=targets)
            numeric = finite_difference_grads(net, batch, tag, targets)
            assert max_relative_error(analytic, numeric) < 1e-4

    def test_unknown_tag_rejected(self):
        net = NetworkParameters([Layer(np.zeros((1, 2)), np.zeros(1), "sigmoid")])
        with pytest.raises(ValueError):
            backward(net, [[0.0, 0.0]], "no-such-loss")


class TestSampleNoise:
    def test_determinism(self):
        a = sample_noise(np.random.default_rng(42), 8, 3)
        b = sample_noise(np.random.default_rng(42), 8, 3)
        assert np.array_equal(a, b)

    def test_moments(self):
        z = sample_noise(np.random.default_rng(0), 100_000, 1)
        assert abs(z.mean()) < 0.02
        assert abs(z.std() - 1.0) < 0.02

    def test_zero_count_rejected(self):
        with pytest.raises(ValueError):
            sample_noise(np.random.default_rng(0), 0, 2)


class TestDiscriminatorStep:
    def _setup(self, seed=0):
        rng = np.random.default_rng(seed)
        disc, gen = toy_gan_architecture(1, 2, rng, hidden=8)
        real = rng.standard_normal((16, 1)) + 2.0
        noise = sample_noise(rng, 16, 2)
        return disc, gen, real, noise

    def test_blind_discriminator_objective_is_minus_ln4(self):
        rng = np.random.default_rng(1)
        disc = NetworkParameters([Layer(np.zeros((1, 1)), np.zeros(1), "sigmoid")])
        _, gen = toy_gan_architecture(1, 2, rng, hidden=4)
        real = rng.standard_normal((8, 1))
        noise = sample_noise(rng, 8, 2)
        _, objective = discriminator_step(disc, gen, real, noise, 0.1)
        assert objective == pytest.approx(-LN4, abs=1e-12)

    def test_zero_rate_leaves_parameters(self):
        disc, gen, real, noise = self._setup()
        new_disc, objective = discriminator_step(disc, gen, real, noise, 0.0)
        for a, b in zip(disc.layers, new_disc.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
        assert math.isfinite(objective)

    def test_small_steps_ascend(self):
        wins = 0
        for seed in range(100):
            disc, gen, real, noise = self._setup(seed)
            new_disc, before = discriminator_step(disc, gen, real, noise, 1e-3)
            after = disc_objective(new_disc, real, forward(gen, noise))
            wins += after >= before
        assert wins >= 95

    def test_batch_count_mismatch(self):
        disc, gen, real, noise = self._setup()
        with pytest.raises(ShapeMismatchError):
            discriminator_step(disc, gen, real[:4], noise, 0.1)


class TestGeneratorStep:
    def test_zero_rate_leaves_generator(self):
        rng = np.random.default_rng(3)
        disc, gen = toy_gan_architecture(2, 2, rng, hidden=8)
        noise = sample_noise(rng, 8, 2)
        new_gen, _ = generator_step(disc, gen, noise, 0.0)
        for a, b in zip(gen.layers, new_gen.layers):
            assert np.array_equal(a.weights, b.weights)

    def test_constant_discriminator_gives_zero_gradient(self):
        rng = np.random.default_rng(4)
        disc = NetworkParameters(
            [
                Layer(np.zeros((4, 2)), np.zeros(4), "leaky-relu"),
                Layer(np.zeros((1, 4)), np.zeros(1), "sigmoid"),
            ]
        )
        _, gen = toy_gan_architecture(2, 2, rng, hidden=8)
        noise = sample_noise(rng, 8, 2)
        new_gen, _ = generator_step(disc, gen, noise, 0.5)
        for a, b in zip(gen.layers, new_gen.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)

    def test_small_steps_descend(self):
        wins = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            disc, gen = toy_gan_architecture(1, 2, rng, hidden=8)
            noise = sample_noise(rng, 16, 2)
            new_gen, before = generator_step(disc, gen, noise, 1e-3)
            after = gen_objective(disc, new_gen, noise)
            wins += after <= before
        assert wins >= 95

    def test_discriminator_untouched(self):
        rng = np.random.default_rng(5)
        disc, gen = toy_gan_architecture(1, 2, rng, hidden=4)
        snapshot = [l.weights.copy() for l in disc.layers]
        generator_step(disc, gen, sample_noise(rng, 4, 2), 0.1)
        for layer, saved in zip(disc.layers, snapshot):
            assert np.array_equal(layer.weights, saved)


class TestStackAndUpdate:
    def test_stack_matches_sequential_forward(self):
        rng = np.random.default_rng(6)
        disc, gen = toy_gan_architecture(3, 2, rng, hidden=5)
        noise = sample_noise(rng, 4, 2)
        stacked = stack_networks(gen, disc)
        assert np.array_equal(forward(stacked, noise), forward(disc, forward(gen, noise)))

    def test_stack_dim_mismatch(self):
        rng = np.random.default_rng(7)
        a = init_mlp([2, 3], rng)
        b = init_mlp([4, 1], rng)
        with pytest.raises(ShapeMismatchError):
            stack_networks(a, b)

    def test_apply_update_shape_check(self):
        rng = np.random.default_rng(8)
        net = init_mlp([2, 3, 1], rng)
        bad = [(np.zeros((3, 2)), np.zeros(3))]
        with pytest.raises(ShapeMismatchError):
            apply_update(net, bad, 0.1)


class TestHyperparams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            TrainingHyperparams(local_epochs=-1)
        with pytest.raises(ValueError):
            TrainingHyperparams(minibatch_size=0)
        with pytest.raises(ValueError):
            TrainingHyperparams(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainingHyperparams(dropout=1.0)


class TestDropout:
    def _setup(self, seed=20):
        rng = np.random.default_rng(seed)
        disc, gen = toy_gan_architecture(1, 2, rng, hidden=8)
        real = rng.standard_normal((16, 1))
        noise = sample_noise(rng, 16, 2)
        return disc, gen, real, noise

    def test_requires_rng(self):
        disc, gen, real, noise = self._setup()
        with pytest.raises(ValueError):
            discriminator_step(disc, gen, real, noise, 0.05, dropout=0.5)

    def test_deterministic_given_stream(self):
        disc, gen, real, noise = self._setup()
        a, _ = discriminator_step(disc, gen, real, noise, 0.05, dropout=0.5,
                                  rng=np.random.default_rng(3))
        b, _ = discriminator_step(disc, gen, real, noise, 0.05, dropout=0.5,
                                  rng=np.random.default_rng(3))
        for la, lb in zip(a.layers, b.layers):
            assert np.array_equal(la.weights, lb.weights)

    def test_changes_update_vs_no_dropout(self):
        disc, gen, real, noise = self._setup()
        dropped, _ = discriminator_step(disc, gen, real, noise, 0.05, dropout=0.5,
                                        rng=np.random.default_rng(4))
        plain, _ = discriminator_step(disc, gen, real, noise, 0.05)
        assert not all(
            np.array_equal(a.weights, b.weights)
            for a, b in zip(dropped.layers, plain.layers)
        )

    def test_shapes_preserved(self):
        disc, gen, real, noise = self._setup()
        out, _ = discriminator_step(disc, gen, real, noise, 0.05, dropout=0.3,
                                    rng=np.random.default_rng(5))
        for a, b in zip(out.layers, disc.layers):
            assert a.weights.shape == b.weights.shape


class TestCheckpointFormat:
    def test_roundtrip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        net = init_mlp([3, 7, 2], rng, output_activation="softmax", slope=0.03)
        path = tmp_path / "params.bin"
        save_params(net, path)
        loaded = load_params(path)
        assert len(loaded.layers) == len(net.layers)
        for a, b in zip(net.layers, loaded.layers):
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
            assert a.activation == b.activation
            assert a.slope == b.slope

    def test_magic_header_present_and_16_bytes(self):
        rng = np.random.default_rng(10)
        blob = params_to_bytes(init_mlp([2, 1], rng))
        assert len(CHECKPOINT_MAGIC) == 16
        assert blob[:16] == CHECKPOINT_MAGIC
        assert blob[16] == 1  # version byte

    def test_bad_magic_rejected(self):
        rng = np.random.default_rng(11)
        blob = bytearray(params_to_bytes(init_mlp([2, 1], rng)))
        blob[0] ^= 0xFF
        with pytest.raises(ValueError):
            params_from_bytes(bytes(blob))

    def test_bad_version_rejected(self):
        rng = np.random.default_rng(12)
        blob = bytearray(params_to_bytes(init_mlp([2, 1], rng)))
        blob[16] = 99
        with pytest.raises(ValueError):
            params_from_bytes(bytes(blob))

    def test_truncation_rejected(self):
        rng = np.random.default_rng(13)
        blob = params_to_bytes(init_mlp([2, 1], rng))
        with pytest.raises(ValueError):
            params_from_bytes(blob[:-4])

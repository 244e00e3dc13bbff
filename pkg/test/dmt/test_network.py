"""Tests for networks, gradients, Adam and checkpoints."""
import numpy as np
import pytest

from dmt.errors import DataError
from dmt.network import (
    AdamState, Checkpoint, EncoderNetwork, Gradients, LayerSpec,
    adam_step, backward, flatten_parameters, forward, init_he, leaky,
    load_checkpoint, save_checkpoint, with_parameters,
)
from dmt.numerics import finite_diff_gradient, make_rng, rng_state


def identity_net(width: int, layers: int) -> EncoderNetwork:
    spec = LayerSpec((width,) * (layers + 1))
    return EncoderNetwork(spec, [np.eye(width) for _ in range(layers)], [np.zeros(width) for _ in range(layers)])


def single_point_forward(net: EncoderNetwork, x: np.ndarray) -> np.ndarray:
    """Scalar loops over one sample."""
    values = list(x)
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for c in range(W.shape[1]):
            y = b[c]
            for r in range(W.shape[0]):
                y += values[r] * W[r, c]
            if l < net.spec.n_layers - 1:
                y = y if y > 0 else 0.1 * y
            out.append(y)
        values = out
    return np.array(values)


class TestLayerSpec:
    """Test layer specifications."""

    def test_resolve_sentinel(self):
        """Test that -1 becomes the data width."""
        spec = LayerSpec.resolve([-1, 600, 2], 784)
        assert spec.dims == (784, 600, 2)
        assert spec.n_layers == 2

    def test_parameter_count(self):
        """Test the weight plus bias count."""
        assert LayerSpec((3, 4, 2)).n_parameters == 3 * 4 + 4 + 4 * 2 + 2

    def test_reversed(self):
        """Test the mirrored decoder spec."""
        assert LayerSpec((5, 3, 2)).reversed().dims == (2, 3, 5)

    @pytest.mark.parametrize("dims", [(3,), (3, 0, 2)])
    def test_invalid(self, dims):
        """Test that too few or nonpositive widths are refused."""
        with pytest.raises(DataError):
            LayerSpec(dims)


class TestInitHe:
    """Test He initialization."""

    def test_biases_zero(self):
        """Test that biases start at zero."""
        net = init_he(LayerSpec((4, 8, 2)), make_rng(0))
        assert all(not b.any() for b in net.biases)

    def test_stddev(self):
        """Test the empirical stddev of a 600×500 layer."""
        net = init_he(LayerSpec((600, 500)), make_rng(0))
        assert net.weights[0].std() == pytest.approx(np.sqrt(2 / 600), rel=0.05)

    def test_deterministic(self):
        """Test that the same seed gives the same parameters."""
        a = init_he(LayerSpec((5, 7, 3)), make_rng(12))
        b = init_he(LayerSpec((5, 7, 3)), make_rng(12))
        assert np.array_equal(flatten_parameters(a), flatten_parameters(b))


class TestForward:
    """Test the forward pass."""

    def test_zero_network(self):
        """Test that zero parameters give zero activations."""
        spec = LayerSpec((3, 4, 2))
        net = EncoderNetwork(spec, [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
        trace = forward(net, make_rng(0).normal(size=(5, 3)))
        assert all(not A.any() for A in trace.activations[1:])

    def test_identity_network(self):
        """Test that identity weights pass nonnegative input through."""
        X = make_rng(1).uniform(0.0, 1.0, size=(6, 4))
        assert np.array_equal(identity_net(4, 3)(X), X)

    def test_matches_single_point_loop(self):
        """Test against scalar per-sample evaluation."""
        net = init_he(LayerSpec((5, 7, 6, 2)), make_rng(2))
        X = make_rng(3).normal(size=(8, 5))
        out = net(X)
        for i in range(8):
            np.testing.assert_allclose(out[i], single_point_forward(net, X[i]), rtol=0, atol=1e-12)

    def test_last_layer_is_linear(self):
        """Test that the output layer has no activation."""
        net = EncoderNetwork(LayerSpec((1, 1)), [np.array([[-1.0]])], [np.zeros(1)])
        assert net(np.array([[2.0]]))[0, 0] == -2.0

    def test_width_mismatch(self):
        """Test that wrong input widths are refused."""
        with pytest.raises(DataError):
            forward(identity_net(3, 1), np.zeros((2, 4)))


class TestBackward:
    """Test reverse-mode gradients."""

    def test_zero_upstream(self):
        """Test that a zero upstream gradient gives zero parameter gradients."""
        net = init_he(LayerSpec((4, 5, 3)), make_rng(0))
        trace = forward(net, make_rng(1).normal(size=(6, 4)))
        grads = backward(net, trace, np.zeros((6, 3)))
        assert all(not g.any() for g in grads.parameters())

    def test_single_linear_layer(self):
        """Test that d(sum of outputs)/dW replicates the input column sums."""
        net = init_he(LayerSpec((3, 4)), make_rng(0))
        X = make_rng(2).normal(size=(7, 3))
        grads = backward(net, forward(net, X), np.ones((7, 4)))
        for c in range(4):
            np.testing.assert_allclose(grads.weights[0][:, c], X.sum(axis=0), rtol=1e-12)
        np.testing.assert_array_equal(grads.biases[0], np.full(4, 7.0))

    def test_quadratic_loss_matches_finite_differences(self):
        """Test a full network against central differences."""
        net = init_he(LayerSpec((3, 5, 4, 2)), make_rng(4))
        X = make_rng(5).normal(size=(6, 3))
        target = make_rng(6).normal(size=(6, 2))

        def loss(p):
            return float(np.sum(np.square(with_parameters(net, p)(X) - target)))

        trace = forward(net, X)
        grads = backward(net, trace, 2.0 * (trace.output - target))
        analytic = np.concatenate([g.ravel() for g in grads.parameters()])
        numeric = finite_diff_gradient(loss, flatten_parameters(net))
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_input_gradient(self):
        """Test ∂L/∂X^(0) against central differences."""
        net = init_he(LayerSpec((3, 4, 2)), make_rng(7))
        X = make_rng(8).normal(size=(2, 3))
        trace = forward(net, X)
        grads = backward(net, trace, np.ones((2, 2)))
        numeric = finite_diff_gradient(lambda p: float(net(p.reshape(2, 3)).sum()), X)
        np.testing.assert_allclose(grads.input.ravel(), numeric, rtol=1e-6, atol=1e-9)

    def test_intermediate_layer_gradient(self):
        """Test that an extra gradient on a hidden layer joins the chain."""
        net = init_he(LayerSpec((3, 4, 2)), make_rng(9))
        X = make_rng(10).normal(size=(5, 3))
        trace = forward(net, X)
        grads = backward(net, trace, np.zeros((5, 2)), {1: np.ones((5, 4))})

        def hidden_sum(p):
            return float(forward(with_parameters(net, p), X).activations[1].sum())

        numeric = finite_diff_gradient(hidden_sum, flatten_parameters(net))
        analytic = np.concatenate([g.ravel() for g in grads.parameters()])
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)

    def test_shape_mismatch(self):
        """Test that a wrongly shaped upstream gradient is refused."""
        net = identity_net(2, 1)
        with pytest.raises(DataError):
            backward(net, forward(net, np.ones((3, 2))), np.ones((2, 2)))


class TestAdam:
    """Test the Adam optimizer."""

    @staticmethod
    def scalar_net(w: float) -> EncoderNetwork:
        return EncoderNetwork(LayerSpec((1, 1)), [np.array([[w]])], [np.zeros(1)])

    def test_zero_gradients(self):
        """Test that zero gradients never move the parameters."""
        net = self.scalar_net(0.5)
        state = AdamState.for_network(net)
        zero = Gradients([np.zeros((1, 1))], [np.zeros(1)], np.zeros((1, 1)))
        for _ in range(20):
            adam_step(net, zero, state, 0.1)
        assert net.weights[0][0, 0] == 0.5
        assert state.step == 20

    def test_first_step_size(self):
        """Test that the first step moves by about the learning rate."""
        net = self.scalar_net(0.5)
        state = AdamState.for_network(net)
        adam_step(net, Gradients([np.array([[3.0]])], [np.zeros(1)], np.zeros((1, 1))), state, 0.01)
        assert net.weights[0][0, 0] == pytest.approx(0.49, abs=1e-8)

    def test_quadratic_bowl(self):
        """Test that a quadratic bowl descends monotonically after a few steps."""
        net = EncoderNetwork(LayerSpec((3, 1)), [np.array([[1.0], [-2.0], [1.5]])], [np.zeros(1)])
        state = AdamState.for_network(net)
        losses = []
        for _ in range(100):
            W, b = net.weights[0], net.biases[0]
            losses.append(float(np.sum(W ** 2) + np.sum(b ** 2)))
            adam_step(net, Gradients([2.0 * W], [2.0 * b], np.zeros((1, 3))), state, 0.005)
        assert all(later < earlier for earlier, later in zip(losses[5:], losses[6:]))

    def test_moment_shapes(self):
        """Test that the moments mirror the parameters."""
        net = init_he(LayerSpec((4, 3, 2)), make_rng(0))
        state = AdamState.for_network(net)
        assert [m.shape for m in state.first] == [p.shape for p in net.parameters()]
        assert state.step == 0


class TestParameters:
    """Test flat parameter vectors."""

    def test_round_trip(self):
        """Test that flattening and rebuilding preserves every parameter."""
        net = init_he(LayerSpec((4, 3, 2)), make_rng(1))
        rebuilt = with_parameters(net, flatten_parameters(net))
        assert np.array_equal(flatten_parameters(rebuilt), flatten_parameters(net))

    def test_wrong_size(self):
        """Test that a vector of the wrong length is refused."""
        net = init_he(LayerSpec((2, 2)), make_rng(1))
        with pytest.raises(DataError):
            with_parameters(net, np.zeros(5))


class TestLeaky:
    """Test the activation."""

    def test_negative_slope(self):
        """Test slope 0.1 below zero and identity above."""
        np.testing.assert_array_equal(leaky(np.array([-2.0, 0.0, 3.0])), [-0.2, 0.0, 3.0])


class TestCheckpoint:
    """Test checkpoint files."""

    def test_round_trip(self, tmp_path):
        """Test that a saved checkpoint loads back unchanged."""
        rng = make_rng(3)
        encoder = init_he(LayerSpec((4, 3, 2)), rng)
        decoder = init_he(LayerSpec((2, 3, 4)), rng)
        encoder_adam = AdamState.for_network(encoder)
        encoder_adam.step = 7
        ckpt = Checkpoint(
            encoder=encoder,
            encoder_adam=encoder_adam,
            epoch=3,
            rng_state=rng_state(rng),
            losses=[3.5, 2.25, 1.125],
            decoder=decoder,
            decoder_adam=AdamState.for_network(decoder),
            meta={"fingerprint": "abc"},
        )

        path = save_checkpoint(tmp_path / "ckpt-3", ckpt)
        assert path == tmp_path / "ckpt-3"
        back = load_checkpoint(path)

        assert back.epoch == 3
        assert back.losses == [3.5, 2.25, 1.125]
        assert back.meta == {"fingerprint": "abc"}
        assert back.rng_state == ckpt.rng_state
        assert back.encoder_adam.step == 7
        assert np.array_equal(flatten_parameters(back.encoder), flatten_parameters(encoder))
        assert np.array_equal(flatten_parameters(back.decoder), flatten_parameters(decoder))

    def test_encoder_only(self, tmp_path):
        """Test that a checkpoint without a decoder loads without one."""
        encoder = init_he(LayerSpec((2, 2)), make_rng(0))
        ckpt = Checkpoint(encoder, AdamState.for_network(encoder), 1, rng_state(make_rng(0)))
        back = load_checkpoint(save_checkpoint(tmp_path / "ckpt-1", ckpt))
        assert back.decoder is None

    def test_garbage(self, tmp_path):
        """Test that an unreadable file raises DataError."""
        path = tmp_path / "ckpt-0"
        path.write_text("not a checkpoint")
        with pytest.raises(DataError):
            load_checkpoint(path)

import numpy as np
import pytest

from infoplane import nets
from infoplane.estimators import SampleMatrix
from infoplane.nets import (
    ActivationKind,
    AttackSpec,
    NetError,
    TrainSpec,
    TrainingDiverged,
    adversarial_train,
    fgsm_perturb,
    forward,
    forward_logits,
    gradients,
    input_gradients,
    loss_value,
    make_dense_net,
    train,
)

ALL_ACTIVATIONS = ["identity", "square", "tanh", "relu", "leaky_relu",
                   "softplus", "swish"]


def _numeric_grads(net, x, y, loss, h=1e-6):
    gw = []
    for w in net.weights:
        g = np.zeros_like(w)
        it = np.nditer(w, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = w[idx]
            w[idx] = orig + h
            up = loss_value(net, x, y, loss)
            w[idx] = orig - h
            down = loss_value(net, x, y, loss)
            w[idx] = orig
            g[idx] = (up - down) / (2 * h)
        gw.append(g)
    return gw


def _rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


@pytest.mark.parametrize("activation", ALL_ACTIVATIONS)
@pytest.mark.parametrize("loss,head", [("mse", "linear"), ("mse", "softmax"),
                                       ("cross_entropy", "softmax")])
def test_gradient_check(activation, loss, head):
    rng = np.random.default_rng(42)
    net = make_dense_net([3, 5, 4, 2], activation=activation,
                         output_head=head, bias=True, seed=1)
    x = rng.normal(size=(12, 3))
    if loss == "cross_entropy":
        y = rng.integers(0, 2, 12)
    elif head == "softmax":
        y = rng.random((12, 2))
    else:
        y = rng.normal(size=(12, 2))
    # nudge inputs off relu/leaky kinks so central differences are valid
    _, gw, _ = gradients(net, x, y, loss)
    ng = _numeric_grads(net, x, y, loss)
    for a, n in zip(gw, ng):
        assert _rel_err(a, n) < 1e-5


@pytest.mark.parametrize("activation", ALL_ACTIVATIONS)
def test_input_gradient_check(activation):
    rng = np.random.default_rng(0)
    net = make_dense_net([4, 6, 3], activation=activation,
                         output_head="softmax", bias=True, seed=3)
    x = rng.normal(size=(8, 4))
    y = rng.integers(0, 3, 8)
    gx = input_gradients(net, x, y, "cross_entropy")
    h = 1e-6
    num = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            orig = x[i, j]
            x[i, j] = orig + h
            up = loss_value(net, x, y, "cross_entropy")
            x[i, j] = orig - h
            down = loss_value(net, x, y, "cross_entropy")
            x[i, j] = orig
            num[i, j] = (up - down) / (2 * h)
    assert _rel_err(gx, num) < 1e-5


def test_unknown_activation_rejected():
    with pytest.raises(NetError):
        ActivationKind("gelu")


def test_make_dense_net_seeded_and_shapes():
    a = make_dense_net([4, 8, 2], seed=5, bias=True)
    b = make_dense_net([4, 8, 2], seed=5, bias=True)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    assert a.weights[0].shape == (4, 8)
    assert a.biases[1].shape == (2,)
    c = make_dense_net([4, 8, 2], seed=6, bias=True)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_forward_softmax_rows_sum_to_one():
    net = make_dense_net([3, 5, 4], output_head="softmax", seed=0)
    x = SampleMatrix(np.random.default_rng(0).normal(size=(10, 3)),
                     ["a", "b", "c"])
    out, hiddens = forward(net, x)
    assert np.allclose(out.values.sum(axis=1), 1.0)
    assert len(hiddens) == 1
    assert hiddens[0].values.shape == (10, 5)


def test_forward_width_mismatch():
    net = make_dense_net([3, 4, 2])
    with pytest.raises(NetError):
        forward_logits(net, np.zeros((5, 2)))


def test_cross_entropy_requires_softmax():
    net = make_dense_net([2, 3, 2], output_head="linear")
    with pytest.raises(NetError):
        loss_value(net, np.zeros((4, 2)), np.zeros(4, dtype=int), "cross_entropy")


def test_training_is_bit_reproducible():
    def run():
        net = make_dense_net([3, 6, 1], activation="tanh", seed=9)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(64, 3))
        y = x.sum(axis=1, keepdims=True)
        spec = TrainSpec(optimizer="adam", lr=1e-2, epochs=50, batch=16, seed=4)
        _, _, history = train(net, (x, y), spec)
        return net, history

    net_a, hist_a = run()
    net_b, hist_b = run()
    assert hist_a == hist_b
    assert all(np.array_equal(wa, wb)
               for wa, wb in zip(net_a.weights, net_b.weights))


def test_sgd_reduces_loss():
    net = make_dense_net([2, 8, 1], activation="tanh", seed=0, bias=True)
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(128, 2))
    y = (x[:, :1] * x[:, 1:]).copy()
    spec = TrainSpec(optimizer="sgd", lr=0.05, epochs=300)
    _, _, history = train(net, (x, y), spec)
    assert history[-1] < history[0] * 0.5


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_divergence_raises_with_history():
    net = make_dense_net([1, 4, 1], activation="square", seed=0)
    x = np.full((8, 1), 50.0)
    y = np.zeros((8, 1))
    spec = TrainSpec(optimizer="sgd", lr=10.0, epochs=100)
    with pytest.raises(TrainingDiverged) as exc:
        train(net, (x, y), spec)
    assert exc.value.epoch >= 1
    assert isinstance(exc.value.history, list)


def test_probe_snapshots_are_frozen_copies():
    net = make_dense_net([2, 4, 1], seed=0)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(32, 2))
    y = x[:, :1].copy()
    spec = TrainSpec(epochs=20, lr=0.01)
    _, snaps, _ = train(net, (x, y), spec, probes=[5, 10, 20],
                        eval_data=(x, y))
    assert [s.epoch for s in snaps] == [5, 10, 20]
    assert snaps[0].test_loss is not None
    # snapshot params must not alias the live net
    assert not np.shares_memory(snaps[0].params.weights[0], net.weights[0])
    assert not np.array_equal(snaps[0].params.weights[0], net.weights[0])


def test_plateau_stops_early():
    net = make_dense_net([1, 2, 1], seed=0)
    x = np.zeros((16, 1))
    y = np.ones((16, 1))  # loss is constant, so the plateau rule must fire
    spec = TrainSpec(epochs=500, lr=0.01)
    _, _, history = train(net, (x, y), spec, plateau_tol=1e-4, plateau_window=5)
    assert len(history) < 500


# --- FGSM ---------------------------------------------------------------

def test_fgsm_zero_epsilon_is_identity():
    net = make_dense_net([3, 4, 2], output_head="softmax", seed=0)
    x = SampleMatrix(np.random.default_rng(0).uniform(-5, 5, size=(6, 3)),
                     ["a", "b", "c"])
    y = np.array([0, 1, 0, 1, 0, 1])
    out = fgsm_perturb(net, x, y, "cross_entropy", AttackSpec(0.0))
    # identity even outside [0,1]: the degenerate attack must not clip
    assert np.array_equal(out.values, x.values)


def test_fgsm_step_size_and_clip():
    net = make_dense_net([2, 4, 2], output_head="softmax", seed=1)
    rng = np.random.default_rng(1)
    x = SampleMatrix(rng.uniform(0, 1, size=(10, 2)), ["a", "b"])
    y = rng.integers(0, 2, 10)
    eps = 0.07
    out = fgsm_perturb(net, x, y, "cross_entropy", AttackSpec(eps, clip=False))
    steps = np.abs(out.values - x.values)
    assert np.all((steps == 0.0) | np.isclose(steps, eps))
    clipped = fgsm_perturb(net, x, y, "cross_entropy", AttackSpec(eps, clip=True))
    assert clipped.values.min() >= 0.0 and clipped.values.max() <= 1.0


def test_fgsm_increases_loss():
    net = make_dense_net([2, 8, 2], output_head="softmax", seed=2, bias=True)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, size=(64, 2))
    y = (x.sum(axis=1) > 1.0).astype(np.int64)
    spec = TrainSpec(optimizer="adam", lr=1e-2, epochs=200, loss="cross_entropy")
    train(net, (x, y), spec)
    adv = nets.fgsm_perturb_raw(net, x, y, "cross_entropy", AttackSpec(0.1))
    assert (loss_value(net, adv, y, "cross_entropy")
            > loss_value(net, x, y, "cross_entropy"))


def test_adversarial_train_zero_eps_matches_plain():
    def build():
        net = make_dense_net([2, 5, 2], output_head="softmax", seed=7, bias=True)
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 1, size=(48, 2))
        y = rng.integers(0, 2, 48)
        return net, x, y

    spec = TrainSpec(optimizer="adam", lr=1e-2, epochs=40,
                     loss="cross_entropy", seed=0)
    net_a, x, y = build()
    _, _, hist_plain = train(net_a, (x, y), spec)
    net_b, _, _ = build()
    _, _, hist_adv = adversarial_train(net_b, (x, y), spec, AttackSpec(0.0))
    assert hist_plain == hist_adv
    assert all(np.array_equal(wa, wb)
               for wa, wb in zip(net_a.weights, net_b.weights))


def test_adversarial_loss_is_clean_adv_mean():
    net = make_dense_net([2, 4, 2], output_head="softmax", seed=3, bias=True)
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, size=(32, 2))
    y = rng.integers(0, 2, 32)
    attack = AttackSpec(0.05)
    clean = loss_value(net, x, y, "cross_entropy")
    adv_x = nets.fgsm_perturb_raw(net, x, y, "cross_entropy", attack)
    adv = loss_value(net, adv_x, y, "cross_entropy")
    spec = TrainSpec(optimizer="sgd", lr=1e-3, epochs=1, loss="cross_entropy")
    _, _, history = adversarial_train(net.copy(), (x, y), spec, attack)
    assert history[0] == pytest.approx((clean + adv) / 2.0, abs=1e-12)

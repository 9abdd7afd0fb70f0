"""Minimal dense-network engine: forward, backprop, SGD/Adam, FGSM.

All arithmetic is float64 and fully seeded so training runs are
bit-reproducible. Networks are plain weight/bias lists; there is no
autograd, gradients are hand-derived and checked against finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .estimators import SampleMatrix


class NetError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Raised when the loss goes non-finite; carries the partial history."""

    def __init__(self, epoch: int, history: list):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch
        self.history = history


# --- activations ---------------------------------------------------------

@dataclass(frozen=True)
class ActivationKind:
    kind: str  # identity | square | tanh | relu | leaky_relu | softplus | swish
    slope: float = 0.01  # leaky_relu only

    def __post_init__(self):
        if self.kind not in ACTIVATIONS:
            raise NetError(f"unknown activation {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise NetError("leaky_relu slope must lie in (0, 1)")

    def apply(self, z):
        return ACTIVATIONS[self.kind][0](z, self.slope)

    def deriv(self, z):
        return ACTIVATIONS[self.kind][1](z, self.slope)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


ACTIVATIONS = {
    "identity": (lambda z, s: z, lambda z, s: np.ones_like(z)),
    "square": (lambda z, s: z * z, lambda z, s: 2.0 * z),
    "tanh": (lambda z, s: np.tanh(z), lambda z, s: 1.0 - np.tanh(z) ** 2),
    "relu": (lambda z, s: np.maximum(z, 0.0), lambda z, s: (z > 0).astype(np.float64)),
    "leaky_relu": (
        lambda z, s: np.where(z > 0, z, s * z),
        lambda z, s: np.where(z > 0, 1.0, s),
    ),
    "softplus": (lambda z, s: np.logaddexp(0.0, z), lambda z, s: _sigmoid(z)),
    "swish": (
        lambda z, s: z * _sigmoid(z),
        lambda z, s: _sigmoid(z) * (1.0 + z * (1.0 - _sigmoid(z))),
    ),
}


# --- network -------------------------------------------------------------

@dataclass
class DenseNet:
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list  # per layer, shape (fan_out,) or None
    activations: list  # ActivationKind per hidden layer (len = n_layers - 1)
    output_head: str = "linear"  # linear | softmax

    def __post_init__(self):
        if self.output_head not in ("linear", "softmax"):
            raise NetError(f"unknown output head {self.output_head!r}")
        if len(self.activations) != len(self.weights) - 1:
            raise NetError("need one activation per hidden layer")
        for k in range(len(self.weights) - 1):
            if self.weights[k].shape[1] != self.weights[k + 1].shape[0]:
                raise NetError(f"layer {k}->{k + 1} dimension mismatch")
        for w, b in zip(self.weights, self.biases):
            if not np.all(np.isfinite(w)) or (b is not None and not np.all(np.isfinite(b))):
                raise NetError("parameters must be finite")

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[0]

    def copy(self) -> "DenseNet":
        return DenseNet(
            [w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            list(self.activations),
            self.output_head,
        )


def make_dense_net(layer_sizes, activation="tanh", output_head="linear",
                   bias=False, seed=0) -> DenseNet:
    """Build a net with the frozen initialization scheme.

    Hidden weights: uniform on +-sqrt(6/fan_in) with the usual sqrt(1+5)
    negative-slope correction (net bound sqrt(1/fan_in)); output weights
    uniform on +-sqrt(1/fan_in). Biases, when enabled, uniform on
    +-1/sqrt(fan_in).
    """
    if isinstance(activation, str):
        activation = ActivationKind(activation)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(layer_sizes) - 1
    for k in range(n_layers):
        fan_in, fan_out = layer_sizes[k], layer_sizes[k + 1]
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        if bias:
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        else:
            biases.append(None)
    return DenseNet(weights, biases, [activation] * (n_layers - 1), output_head)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_full(net: DenseNet, x: np.ndarray):
    """Returns (pre_activations, hidden post-activations, logits, outputs)."""
    if x.shape[1] != net.n_inputs:
        raise NetError(f"input width {x.shape[1]} != first layer {net.n_inputs}")
    pres, hiddens = [], []
    a = x
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w
        if b is not None:
            z = z + b
        if k < len(net.weights) - 1:
            pres.append(z)
            a = net.activations[k].apply(z)
            hiddens.append(a)
        else:
            logits = z
    out = _softmax(logits) if net.output_head == "softmax" else logits
    return pres, hiddens, logits, out


def forward(net: DenseNet, x: SampleMatrix):
    """Deterministic forward pass; exposes every post-activation layer."""
    _, hiddens, _, out = _forward_full(net, x.values)
    out_names = [f"out{j}" for j in range(out.shape[1])]
    hidden_mats = [
        SampleMatrix(h, [f"h{k}_{j}" for j in range(h.shape[1])])
        for k, h in enumerate(hiddens)
    ]
    return SampleMatrix(out, out_names), hidden_mats


def forward_logits(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return _forward_full(net, x)[2]


def _loss_and_output_delta(net, logits, out, targets, loss):
    n = logits.shape[0]
    if loss == "mse":
        if targets.ndim == 1:
            targets = targets[:, None]
        err = out - targets
        value = float((err ** 2).mean())
        delta = 2.0 * err / err.size
        if net.output_head == "softmax":
            # d softmax through MSE
            s = out
            delta = s * (delta - (delta * s).sum(axis=1, keepdims=True))
        return value, delta
    if loss == "cross_entropy":
        if net.output_head != "softmax":
            raise NetError("cross_entropy requires a softmax head")
        y = np.asarray(targets, dtype=np.int64)
        logp = logits - logits.max(axis=1, keepdims=True)
        logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
        value = float(-logp[np.arange(n), y].mean())  # nats
        delta = out.copy()
        delta[np.arange(n), y] -= 1.0
        delta /= n
        return value, delta
    raise NetError(f"unknown loss {loss!r}")


def _backward(net, x, pres, hiddens, delta, want_input_grad=False):
    """Backprop an output-layer delta; returns (weight grads, bias grads, dL/dx)."""
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for k in range(len(net.weights) - 1, -1, -1):
        a_prev = x if k == 0 else hiddens[k - 1]
        grads_w[k] = a_prev.T @ delta
        grads_b[k] = delta.sum(axis=0) if net.biases[k] is not None else None
        if k > 0:
            delta = (delta @ net.weights[k].T) * net.activations[k - 1].deriv(pres[k - 1])
        elif want_input_grad:
            delta = delta @ net.weights[0].T
    input_grad = delta if want_input_grad else None
    return grads_w, grads_b, input_grad


def loss_value(net: DenseNet, x: np.ndarray, targets, loss: str) -> float:
    _, _, logits, out = _forward_full(net, x)
    value, _ = _loss_and_output_delta(net, logits, out, targets, loss)
    return value


def gradients(net: DenseNet, x: np.ndarray, targets, loss: str):
    """Exact reverse-mode gradients: (loss value, weight grads, bias grads)."""
    pres, hiddens, logits, out = _forward_full(net, x)
    value, delta = _loss_and_output_delta(net, logits, out, targets, loss)
    if not np.isfinite(value):
        raise TrainingDiverged(0, [value])
    gw, gb, _ = _backward(net, x, pres, hiddens, delta)
    return value, gw, gb


def input_gradients(net: DenseNet, x: np.ndarray, targets, loss: str) -> np.ndarray:
    pres, hiddens, logits, out = _forward_full(net, x)
    _, delta = _loss_and_output_delta(net, logits, out, targets, loss)
    _, _, gx = _backward(net, x, pres, hiddens, delta, want_input_grad=True)
    return gx


# --- training ------------------------------------------------------------

@dataclass
class TrainSpec:
    optimizer: str = "sgd"  # sgd | adam
    lr: float = 0.01
    epochs: int = 100
    batch: str | int = "full"  # "full" or a batch size
    loss: str = "mse"
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise NetError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise NetError("lr must be positive")
        if self.epochs < 1:
            raise NetError("epochs must be >= 1")


@dataclass
class AttackSpec:
    epsilon_adv: float = 0.0
    clip: bool = True

    def __post_init__(self):
        if self.epsilon_adv < 0:
            raise NetError("epsilon_adv must be non-negative")


@dataclass
class ProbeSnapshot:
    epoch: int
    params: DenseNet
    train_loss: float
    test_loss: Optional[float] = None


class _Adam:
    def __init__(self, lr):
        self.lr, self.b1, self.b2, self.eps = lr, 0.9, 0.999, 1e-8
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: list, grads: list):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            if p is None:
                continue
            if i not in self.m:
                self.m[i] = np.zeros_like(p)
                self.v[i] = np.zeros_like(p)
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mh = self.m[i] / (1 - self.b1 ** self.t)
            vh = self.v[i] / (1 - self.b2 ** self.t)
            p -= self.lr * mh / (np.sqrt(vh) + self.eps)


def _apply_update(net, gw, gb, spec, opt):
    if spec.optimizer == "sgd":
        for k in range(len(net.weights)):
            net.weights[k] -= spec.lr * gw[k]
            if net.biases[k] is not None:
                net.biases[k] -= spec.lr * gb[k]
    else:
        params = net.weights + [b for b in net.biases]
        grads = gw + [g for g in gb]
        opt.step(params, grads)


def _batches(n, spec, rng):
    if spec.batch == "full":
        yield np.arange(n)
        return
    perm = rng.permutation(n)
    for i in range(0, n, int(spec.batch)):
        yield perm[i:i + int(spec.batch)]


def _epoch_grad_step(net, xb, yb, spec, opt, attack=None):
    """One optimization step on a batch; returns the recorded loss."""
    if attack is None or attack.epsilon_adv == 0.0:
        # the degenerate attack reduces bit-identically to plain training
        value, gw, gb = gradients(net, xb, yb, spec.loss)
        _apply_update(net, gw, gb, spec, opt)
        return value
    x_adv = fgsm_perturb_raw(net, xb, yb, spec.loss, attack)
    v_clean, gw_c, gb_c = gradients(net, xb, yb, spec.loss)
    v_adv, gw_a, gb_a = gradients(net, x_adv, yb, spec.loss)
    gw = [(a + b) / 2.0 for a, b in zip(gw_c, gw_a)]
    gb = [None if a is None else (a + b) / 2.0 for a, b in zip(gb_c, gb_a)]
    _apply_update(net, gw, gb, spec, opt)
    return (v_clean + v_adv) / 2.0


def _train_loop(net, data, spec, probes=(), eval_data=None, attack=None,
                plateau_tol=None, plateau_window=50):
    x, y = data
    x = np.asarray(x, dtype=np.float64)
    probes = set(probes or ())
    rng = np.random.default_rng(spec.seed)
    opt = _Adam(spec.lr) if spec.optimizer == "adam" else None
    history: list[float] = []
    snapshots: list[ProbeSnapshot] = []
    for epoch in range(1, spec.epochs + 1):
        epoch_losses = []
        try:
            for idx in _batches(x.shape[0], spec, rng):
                epoch_losses.append(_epoch_grad_step(net, x[idx], y[idx], spec, opt, attack))
        except TrainingDiverged:
            raise TrainingDiverged(epoch, history)
        loss = float(np.mean(epoch_losses))
        history.append(loss)
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, history)
        if epoch in probes:
            test_loss = None
            if eval_data is not None:
                test_loss = loss_value(net, eval_data[0], eval_data[1], spec.loss)
            snapshots.append(ProbeSnapshot(epoch, net.copy(), loss, test_loss))
        if plateau_tol is not None and len(history) > plateau_window:
            prev = history[-plateau_window - 1]
            if prev > 0 and abs(prev - loss) / prev < plateau_tol:
                break
    return net, snapshots, history


def train(net: DenseNet, data, spec: TrainSpec, probes=(), eval_data=None,
          plateau_tol=None, plateau_window=50):
    """Train in place; returns (net, probe snapshots, per-epoch loss history)."""
    return _train_loop(net, data, spec, probes, eval_data,
                       attack=None, plateau_tol=plateau_tol,
                       plateau_window=plateau_window)


def adversarial_train(net: DenseNet, data, spec: TrainSpec, attack: AttackSpec,
                      probes=(), eval_data=None):
    """Train on the mean of clean and single-step-perturbed losses."""
    return _train_loop(net, data, spec, probes, eval_data, attack=attack)


def fgsm_perturb_raw(net, x, targets, loss, attack: AttackSpec) -> np.ndarray:
    if attack.epsilon_adv == 0.0:
        return x.copy()
    gx = input_gradients(net, x, targets, loss)
    x_adv = x + attack.epsilon_adv * np.sign(gx)
    if attack.clip:
        x_adv = np.clip(x_adv, 0.0, 1.0)
    return x_adv


def fgsm_perturb(net: DenseNet, x: SampleMatrix, targets, loss: str,
                 attack: AttackSpec) -> SampleMatrix:
    """x + eps*sign(dL/dx), optionally clipped to [0,1]."""
    return SampleMatrix(fgsm_perturb_raw(net, x.values, targets, loss, attack),
                        list(x.column_names))

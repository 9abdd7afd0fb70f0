"""Discretization and plugin mutual-information estimation.

Everything downstream (objectives, trajectories) is built on three pieces:
equal-width binning of real-valued sample matrices, symbol streams with
optional per-sample weights (DiscreteView), and exact computation over
enumerated probability tables (ExactPmf). All logarithms are base 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class EstimationError(ValueError):
    """Invalid input to an estimator."""


class MiEvalCounter:
    """Counts mutual_information evaluations, for probe cost accounting."""

    def __init__(self):
        self.value = 0

    def reset(self):
        self.value = 0


mi_eval_counter = MiEvalCounter()


@dataclass
class SampleMatrix:
    """Real-valued samples, one row per observation, with named columns."""

    values: np.ndarray
    column_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        if self.values.shape[0] < 1:
            raise EstimationError("SampleMatrix needs at least one sample")
        if not np.all(np.isfinite(self.values)):
            bad = np.where(~np.isfinite(self.values).all(axis=0))[0]
            raise EstimationError(f"non-finite values in column(s) {bad.tolist()}")
        if len(self.column_names) != self.values.shape[1]:
            raise EstimationError("column_names length does not match n_columns")
        if len(set(self.column_names)) != len(self.column_names):
            raise EstimationError("column names must be unique")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]


@dataclass
class BinningSpec:
    """Equal-width binning: per-column observed range or fixed intervals."""

    n_bins: int
    range_policy: str = "observed"  # "observed" | "fixed"
    fixed_intervals: Optional[list[tuple[float, float]]] = None

    def __post_init__(self):
        if self.n_bins < 2:
            raise EstimationError("n_bins must be >= 2")
        if self.range_policy not in ("observed", "fixed"):
            raise EstimationError(f"unknown range_policy {self.range_policy!r}")
        if self.range_policy == "fixed":
            if not self.fixed_intervals:
                raise EstimationError("fixed range_policy requires fixed_intervals")
            for lo, hi in self.fixed_intervals:
                if not lo < hi:
                    raise EstimationError(f"fixed interval ({lo}, {hi}) has lo >= hi")


@dataclass
class DiscreteView:
    """A per-sample symbol stream with optional normalized sample weights."""

    symbols: np.ndarray
    alphabet_size: int
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.symbols.ndim != 1:
            raise EstimationError("symbols must be a 1-d vector")
        if self.alphabet_size < 1:
            raise EstimationError("alphabet_size must be positive")
        if self.symbols.size and (self.symbols.min() < 0 or self.symbols.max() >= self.alphabet_size):
            raise EstimationError("symbol id out of range for alphabet_size")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != self.symbols.shape:
                raise EstimationError("weights length must match symbols")
            if np.any(self.weights < 0):
                raise EstimationError("weights must be non-negative")
            if abs(self.weights.sum() - 1.0) > 1e-12:
                raise EstimationError("weights must sum to 1 within 1e-12")

    @property
    def n_samples(self) -> int:
        return self.symbols.size

    def with_weights(self, weights: Optional[np.ndarray]) -> "DiscreteView":
        return DiscreteView(self.symbols, self.alphabet_size, weights)


@dataclass
class ExactPmf:
    """An enumerated joint distribution over tuples of discrete outcomes."""

    support: list[tuple]
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if len(self.support) != self.probs.size:
            raise EstimationError("support and probs length mismatch")
        if np.any(self.probs < 0):
            raise EstimationError("probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise EstimationError("probabilities must sum to 1 within 1e-12")
        if len(set(self.support)) != len(self.support):
            raise EstimationError("support tuples must be unique")

    @property
    def n_coords(self) -> int:
        return len(self.support[0]) if self.support else 0

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n i.i.d. outcome rows as an integer matrix."""
        idx = rng.choice(len(self.support), size=n, p=self.probs)
        table = np.array(self.support, dtype=np.int64)
        return table[idx]


def with_column(pmf: ExactPmf, fn: Callable[[tuple], int]) -> ExactPmf:
    """Append a derived coordinate fn(outcome) to every support tuple."""
    support = [t + (fn(t),) for t in pmf.support]
    return ExactPmf(support, pmf.probs.copy())


def bin_equal_width(data: SampleMatrix, spec: BinningSpec):
    """Map each entry to floor(n_bins*(v-lo)/(hi-lo)), clamped to the bin range.

    Returns (binned integer matrix, list of per-column bin edge arrays).
    A column with zero observed range maps entirely to bin 0.
    """
    n_bins = spec.n_bins
    if spec.range_policy == "fixed":
        if len(spec.fixed_intervals) == 1 and data.n_columns > 1:
            intervals = spec.fixed_intervals * data.n_columns
        else:
            intervals = spec.fixed_intervals
        if len(intervals) != data.n_columns:
            raise EstimationError("need one fixed interval per column")
    else:
        intervals = [
            (float(data.values[:, j].min()), float(data.values[:, j].max()))
            for j in range(data.n_columns)
        ]

    binned = np.zeros(data.values.shape, dtype=np.int64)
    edges = []
    for j, (lo, hi) in enumerate(intervals):
        edges.append(np.linspace(lo, hi, n_bins + 1))
        if hi <= lo:  # constant column under observed range
            continue
        idx = np.floor(n_bins * (data.values[:, j] - lo) / (hi - lo))
        binned[:, j] = np.clip(idx, 0, n_bins - 1).astype(np.int64)
    return binned, edges


def joint_view(binned: np.ndarray, columns: Sequence[int]) -> DiscreteView:
    """Collapse the selected columns of a binned matrix to one symbol stream.

    Distinct tuples get consecutive ids in first-occurrence order, so the
    mapping is deterministic and injective on the observed tuples.
    """
    columns = list(columns)
    if not columns:
        raise EstimationError("column subset must be non-empty")
    binned = np.asarray(binned, dtype=np.int64)
    if binned.ndim == 1:
        binned = binned[:, None]
    sub = np.ascontiguousarray(binned[:, columns])
    _, first_idx, inverse = np.unique(sub, axis=0, return_index=True, return_inverse=True)
    # np.unique sorts lexicographically; re-rank by first occurrence
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return DiscreteView(rank[inverse.ravel()], int(order.size))


def _dist(view: DiscreteView) -> np.ndarray:
    if view.weights is None:
        p = np.bincount(view.symbols, minlength=view.alphabet_size).astype(np.float64)
        return p / view.n_samples
    return np.bincount(view.symbols, weights=view.weights, minlength=view.alphabet_size)


def _plugin_entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def entropy(view: DiscreteView) -> float:
    """Plugin entropy in bits, using weights when present."""
    return _plugin_entropy(_dist(view))


def _pair_symbols(a: DiscreteView, b: DiscreteView) -> DiscreteView:
    joint = a.symbols * b.alphabet_size + b.symbols
    return DiscreteView(joint, a.alphabet_size * b.alphabet_size, a.weights)


def mutual_information(a: DiscreteView, b: DiscreteView) -> float:
    """Plugin MI in bits: H(a) + H(b) - H(a,b) under a shared weighting."""
    if a.n_samples != b.n_samples:
        raise EstimationError("views must have equal n_samples")
    wa, wb = a.weights, b.weights
    if (wa is None) != (wb is None):
        raise EstimationError("either both views carry weights or neither does")
    if wa is not None and not np.array_equal(wa, wb):
        raise EstimationError("views must carry the identical weight vector")
    mi_eval_counter.value += 1
    mi = entropy(a) + entropy(b) - entropy(_pair_symbols(a, b))
    if -1e-12 < mi < 0.0:
        mi = 0.0
    return mi


def _marginal_table(pmf: ExactPmf, coords: Sequence[int]) -> dict:
    out: dict = {}
    for t, p in zip(pmf.support, pmf.probs):
        key = tuple(t[c] for c in coords)
        out[key] = out.get(key, 0.0) + p
    return out


def exact_mi(pmf: ExactPmf, a_coords: Sequence[int], b_coords: Sequence[int]) -> float:
    """Exact I(A;B) in bits by marginalizing an enumerated joint pmf."""
    a_coords, b_coords = list(a_coords), list(b_coords)
    if not a_coords or not b_coords:
        raise EstimationError("coordinate sets must be non-empty")
    if set(a_coords) & set(b_coords):
        raise EstimationError("coordinate sets must be disjoint")
    nc = pmf.n_coords
    for c in a_coords + b_coords:
        if not 0 <= c < nc:
            raise EstimationError(f"coordinate {c} out of range")
    pa = _marginal_table(pmf, a_coords)
    pb = _marginal_table(pmf, b_coords)
    pab = _marginal_table(pmf, a_coords + b_coords)
    mi = 0.0
    na = len(a_coords)
    for key, p in pab.items():
        if p <= 0:
            continue
        mi += p * np.log2(p / (pa[key[:na]] * pb[key[na:]]))
    return max(float(mi), 0.0)


def loss_comparison_mi(x: SampleMatrix, y_class: np.ndarray, trainer_config) -> float:
    """Estimate I(X;Y) in bits as H(Y) minus converged cross-entropy.

    Trains an auxiliary softmax classifier (from the nets module) to predict
    y from x; the achieved mean cross-entropy upper-bounds H(Y|X), so
    H(Y) - CE lower-bounds the MI up to optimization error. The result is
    clamped to [0, H(Y)].
    """
    from . import nets  # local import to keep estimators importable standalone

    y_class = np.asarray(y_class, dtype=np.int64)
    if y_class.shape[0] != x.n_samples:
        raise EstimationError("labels length must match n_samples")
    n_classes = int(y_class.max()) + 1 if y_class.size else 0
    if y_class.min() < 0:
        raise EstimationError("labels must be non-negative")
    h_y = entropy(DiscreteView(y_class, n_classes))
    if h_y == 0.0:
        return 0.0

    net = nets.make_dense_net(
        [x.n_columns] + list(trainer_config.hidden) + [n_classes],
        activation=trainer_config.activation,
        output_head="softmax",
        bias=trainer_config.bias,
        seed=trainer_config.seed,
    )
    spec = nets.TrainSpec(
        optimizer=trainer_config.optimizer,
        lr=trainer_config.lr,
        epochs=trainer_config.epochs,
        batch="full",
        loss="cross_entropy",
        seed=trainer_config.seed,
    )
    try:
        _, _, history = nets.train(net, (x.values, y_class), spec,
                                   plateau_tol=1e-4, plateau_window=50)
    except nets.TrainingDiverged as exc:
        raise EstimationError("auxiliary predictor diverged") from exc
    ce_bits = history[-1] / np.log(2.0)  # training CE is recorded in nats
    return float(np.clip(h_y - ce_bits, 0.0, h_y))


@dataclass
class AuxTrainerConfig:
    """Recipe for the loss-comparison auxiliary classifier."""

    hidden: tuple = (64,)
    activation: str = "tanh"
    optimizer: str = "adam"
    lr: float = 1e-2
    epochs: int = 400
    bias: bool = True
    seed: int = 0

"""Information functionals over symbol streams.

Builds the likelihood-ratio reweighted prediction/label joint, the
feature-wise synergy measure (whole-set MI minus the mean of leave-one-out
and single-feature MI), and the three trajectory objectives: the classic
bottleneck (IB), its synergy-decomposed generalization (GIB), and the
sum-versus-whole variant (SVW).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimators import (
    DiscreteView,
    EstimationError,
    entropy,
    joint_view,
    mutual_information,
)


@dataclass
class PmiWeightedJoint:
    """The (z,y) pair stream with per-sample likelihood-ratio weights."""

    pair_view: DiscreteView
    weights: np.ndarray
    raw_ratios: np.ndarray

    def __post_init__(self):
        if np.any(self.raw_ratios <= 0):
            raise EstimationError("ratio weights must be positive at observed pairs")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise EstimationError("weights must sum to 1 within 1e-12")


@dataclass
class ObjectiveReport:
    prediction_term: float
    complexity_term: float
    beta: float
    kind: str  # IB | GIB | SVW
    per_feature_terms: Optional[list] = None

    @property
    def objective_value(self) -> float:
        if math.isinf(self.beta):
            return self.prediction_term
        return self.prediction_term - self.complexity_term / self.beta


def pmi_reweight(z: DiscreteView, y: DiscreteView) -> PmiWeightedJoint:
    """Weight each sample by p(z,y) / (p(z) p(y)) from the empirical counts."""
    if z.n_samples != y.n_samples:
        raise EstimationError("z and y must have equal n_samples")
    if z.weights is not None or y.weights is not None:
        raise EstimationError("pmi_reweight expects unweighted views")
    n = z.n_samples
    pz = np.bincount(z.symbols, minlength=z.alphabet_size) / n
    py = np.bincount(y.symbols, minlength=y.alphabet_size) / n
    pair_codes = z.symbols * y.alphabet_size + y.symbols
    pzy = np.bincount(pair_codes, minlength=z.alphabet_size * y.alphabet_size) / n
    raw = pzy[pair_codes] / (pz[z.symbols] * py[y.symbols])
    weights = raw / raw.sum()
    pair = joint_view(np.column_stack([z.symbols, y.symbols]), [0, 1])
    return PmiWeightedJoint(pair, weights, raw)


def _feature_terms(x_columns: np.ndarray, target: DiscreteView):
    """Per-feature (I(X^{-i};T), I(X^i;T)) pairs under the target's weights."""
    w = target.weights
    n_feat = x_columns.shape[1]
    terms = []
    for i in range(n_feat):
        rest = [j for j in range(n_feat) if j != i]
        loo = joint_view(x_columns, rest).with_weights(w)
        single = joint_view(x_columns, [i]).with_weights(w)
        terms.append((mutual_information(loo, target),
                      mutual_information(single, target)))
    return terms


def feature_synergy(x_columns: np.ndarray, target: DiscreteView):
    """I(X;T) minus the mean of leave-one-out plus single-feature MI.

    Returns (synergy bits, per-feature term pairs).
    """
    x_columns = np.asarray(x_columns)
    n_feat = x_columns.shape[1]
    if n_feat < 2:
        raise EstimationError("feature synergy needs at least 2 features")
    whole = joint_view(x_columns, range(n_feat)).with_weights(target.weights)
    i_whole = mutual_information(whole, target)
    terms = _feature_terms(x_columns, target)
    syn = i_whole - sum(loo + single for loo, single in terms) / n_feat
    return syn, terms


def gib_terms(x_columns: np.ndarray, z: DiscreteView, y: DiscreteView,
              beta: float = 1.0) -> ObjectiveReport:
    """Synergy-decomposed objective against the reweighted (z,y) joint.

    prediction = I(X;Q); complexity = mean of (I(X^{-i};Q) + I(X^i;Q)) / 2,
    both as weighted plugin MI under the ratio weights. Costs exactly
    2N + 1 MI evaluations.
    """
    x_columns = np.asarray(x_columns)
    n_feat = x_columns.shape[1]
    if n_feat < 2:
        raise EstimationError("the synergy decomposition needs at least 2 features")
    q = pmi_reweight(z, y)
    target = q.pair_view.with_weights(q.weights)
    whole = joint_view(x_columns, range(n_feat)).with_weights(q.weights)
    pred = mutual_information(whole, target)
    terms = _feature_terms(x_columns, target)
    cplx = sum(loo + single for loo, single in terms) / (2.0 * n_feat)
    return ObjectiveReport(pred, cplx, beta, "GIB", terms)


def ib_terms(x: DiscreteView, t: DiscreteView, y: DiscreteView,
             beta: float = 1.0) -> ObjectiveReport:
    """Classic bottleneck terms: prediction I(T;Y), complexity I(X;T)."""
    return ObjectiveReport(mutual_information(t, y), mutual_information(x, t),
                           beta, "IB")


def svw_terms(x_columns: np.ndarray, z: DiscreteView, y: DiscreteView,
              beta: float = 1.0) -> ObjectiveReport:
    """Sum-versus-whole variant: complexity is the unaveraged sum of
    single-feature MI values against the reweighted joint."""
    x_columns = np.asarray(x_columns)
    n_feat = x_columns.shape[1]
    if n_feat < 1:
        raise EstimationError("need at least 1 feature")
    q = pmi_reweight(z, y)
    target = q.pair_view.with_weights(q.weights)
    whole = joint_view(x_columns, range(n_feat)).with_weights(q.weights)
    pred = mutual_information(whole, target)
    singles = [
        mutual_information(joint_view(x_columns, [i]).with_weights(q.weights), target)
        for i in range(n_feat)
    ]
    terms = [(0.0, s) for s in singles]
    return ObjectiveReport(pred, float(sum(singles)), beta, "SVW", terms)


@dataclass
class Theorem1Check:
    lhs: float
    rhs: float
    holds: bool


def check_theorem1(x_columns: np.ndarray, z: DiscreteView, y: DiscreteView,
                   beta: float = 1.0) -> Theorem1Check:
    """Check that the classic objective lower-bounds the synergy objective.

    Hypothesis: perfect accuracy (z = y sample-wise) and a deterministic
    predictor (z constant on each distinct x row); T is taken equal to z.
    """
    x_columns = np.asarray(x_columns)
    if not np.array_equal(z.symbols, y.symbols):
        bad = int(np.nonzero(z.symbols != y.symbols)[0][0])
        raise EstimationError(f"hypothesis violated: z != y at sample {bad}")
    x_view = joint_view(x_columns, range(x_columns.shape[1]))
    for sym in range(x_view.alphabet_size):
        zs = z.symbols[x_view.symbols == sym]
        if zs.size and not np.all(zs == zs[0]):
            raise EstimationError(
                f"hypothesis violated: z is not a function of x (x symbol {sym})")
    t = z
    lhs_report = ib_terms(x_view, t, y, beta)
    rhs_report = gib_terms(x_columns, z, y, beta)
    lhs, rhs = lhs_report.objective_value, rhs_report.objective_value
    return Theorem1Check(lhs, rhs, lhs <= rhs + 1e-9)


def sufficiency_gap(x_columns: np.ndarray, z: DiscreteView, y: DiscreteView):
    """Prediction term versus I(X;Y), both under the ratio-reweighted measure.

    On perfect-accuracy instances (z = y) the pair stream carries exactly
    the label information, so the prediction term cannot exceed the
    (equally weighted) input-label MI. Returns (I(X;Q), I_w(X;Y)).
    """
    x_columns = np.asarray(x_columns)
    q = pmi_reweight(z, y)
    target = q.pair_view.with_weights(q.weights)
    whole = joint_view(x_columns, range(x_columns.shape[1])).with_weights(q.weights)
    pred = mutual_information(whole, target)
    ref = mutual_information(whole, y.with_weights(q.weights))
    return pred, ref

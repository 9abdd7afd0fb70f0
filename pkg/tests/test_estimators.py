import numpy as np
import pytest

from infoplane.estimators import (
    AuxTrainerConfig,
    BinningSpec,
    DiscreteView,
    EstimationError,
    ExactPmf,
    SampleMatrix,
    bin_equal_width,
    entropy,
    exact_mi,
    joint_view,
    loss_comparison_mi,
    mutual_information,
    with_column,
)


def view(symbols, k=None, weights=None):
    symbols = np.asarray(symbols)
    if k is None:
        k = int(symbols.max()) + 1
    return DiscreteView(symbols, k, weights)


# --- entropy -------------------------------------------------------------

def test_entropy_uniform():
    assert entropy(view(np.arange(8))) == pytest.approx(3.0, abs=1e-12)


def test_entropy_deterministic_is_zero():
    assert entropy(view(np.zeros(100, dtype=int), k=5)) == 0.0


def test_entropy_biased_coin():
    # H(0.25) computed from the closed form
    s = np.array([0] * 1 + [1] * 3)
    assert entropy(view(s)) == pytest.approx(0.811278124459, abs=1e-10)


def test_entropy_weighted():
    # symbols 0,0,1,2 with weights collapsing to p = (0.5, 0.3, 0.2)
    w = np.array([0.4, 0.1, 0.3, 0.2])
    assert entropy(view([0, 0, 1, 2], weights=w)) == pytest.approx(
        1.485475297227, abs=1e-10)


def test_entropy_weight_validation():
    with pytest.raises(EstimationError):
        view([0, 1], weights=np.array([0.6, 0.6]))
    with pytest.raises(EstimationError):
        view([0, 1], weights=np.array([1.5, -0.5]))


# --- mutual information --------------------------------------------------

def test_mi_independent_is_zero():
    a = view(np.tile([0, 1], 8))
    b = view(np.repeat([0, 1], 8))
    assert mutual_information(a, b) == pytest.approx(0.0, abs=1e-12)


def test_mi_self_equals_entropy():
    rng = np.random.default_rng(7)
    s = rng.integers(0, 5, 200)
    a = view(s, 5)
    assert mutual_information(a, a) == pytest.approx(entropy(a), abs=1e-12)


def test_mi_symmetry():
    rng = np.random.default_rng(3)
    a = view(rng.integers(0, 4, 500), 4)
    b = view(rng.integers(0, 3, 500), 3)
    assert mutual_information(a, b) == pytest.approx(
        mutual_information(b, a), abs=1e-12)


def test_mi_bounded_by_marginal_entropies():
    rng = np.random.default_rng(11)
    s = rng.integers(0, 6, 300)
    noisy = np.where(rng.random(300) < 0.3, rng.integers(0, 6, 300), s)
    a, b = view(s, 6), view(noisy, 6)
    mi = mutual_information(a, b)
    assert 0.0 <= mi <= min(entropy(a), entropy(b)) + 1e-12


def test_mi_2x2_fixture():
    # joint p = [[0.4, 0.1], [0.1, 0.4]] realized as 10 samples
    a = view([0, 0, 0, 0, 0, 1, 1, 1, 1, 1])
    b = view([0, 0, 0, 0, 1, 0, 1, 1, 1, 1])
    assert mutual_information(a, b) == pytest.approx(0.278071905113, abs=1e-10)


def test_mi_data_processing_coarsening():
    # merging symbols of one view can never increase MI
    rng = np.random.default_rng(5)
    s = rng.integers(0, 8, 2000)
    b = view((s + rng.integers(0, 2, 2000)) % 8, 8)
    fine = view(s, 8)
    coarse = view(s // 2, 4)
    assert mutual_information(coarse, b) <= mutual_information(fine, b) + 1e-12


def test_mi_monotone_under_joining():
    # adjoining a view can never lose information: I((A,B);C) >= I(A;C)
    rng = np.random.default_rng(13)
    cols = rng.integers(0, 3, size=(1000, 3))
    c = view(cols[:, 2], 3)
    a = joint_view(cols, [0])
    ab = joint_view(cols, [0, 1])
    assert mutual_information(ab, c) >= mutual_information(a, c) - 1e-12


def test_mi_weight_mismatch_rejected():
    w = np.full(4, 0.25)
    a = view([0, 1, 0, 1], weights=w)
    b = view([0, 1, 1, 0])
    with pytest.raises(EstimationError):
        mutual_information(a, b)


def test_mi_length_mismatch_rejected():
    with pytest.raises(EstimationError):
        mutual_information(view([0, 1]), view([0, 1, 0]))


# --- binning -------------------------------------------------------------

def test_bin_equal_width_observed_range():
    mat = SampleMatrix(np.array([[0.0], [0.25], [0.5], [0.75], [1.0]]), ["v"])
    binned, edges = bin_equal_width(mat, BinningSpec(4))
    assert binned[:, 0].tolist() == [0, 1, 2, 3, 3]  # max clamps to top bin
    assert np.allclose(edges[0], [0.0, 0.25, 0.5, 0.75, 1.0])


def test_bin_equal_width_fixed_interval_clamps():
    mat = SampleMatrix(np.array([[-2.0], [0.5], [3.0]]), ["v"])
    spec = BinningSpec(10, "fixed", [(0.0, 1.0)])
    binned, _ = bin_equal_width(mat, spec)
    assert binned[:, 0].tolist() == [0, 5, 9]


def test_bin_constant_column_maps_to_zero():
    mat = SampleMatrix(np.full((5, 1), 3.3), ["v"])
    binned, _ = bin_equal_width(mat, BinningSpec(8))
    assert not binned.any()


def test_bin_spec_validation():
    with pytest.raises(EstimationError):
        BinningSpec(1)
    with pytest.raises(EstimationError):
        BinningSpec(4, "fixed")
    with pytest.raises(EstimationError):
        BinningSpec(4, "fixed", [(1.0, 1.0)])


def test_sample_matrix_rejects_nonfinite():
    with pytest.raises(EstimationError):
        SampleMatrix(np.array([[1.0], [np.nan]]), ["v"])


# --- joint_view ----------------------------------------------------------

def test_joint_view_first_occurrence_order():
    binned = np.array([[2, 9], [0, 0], [2, 9], [1, 1]])
    v = joint_view(binned, [0, 1])
    assert v.symbols.tolist() == [0, 1, 0, 2]
    assert v.alphabet_size == 3


def test_joint_view_injective_on_tuples():
    rng = np.random.default_rng(0)
    binned = rng.integers(0, 3, size=(200, 3))
    v = joint_view(binned, [0, 1, 2])
    seen = {}
    for row, sym in zip(map(tuple, binned), v.symbols):
        assert seen.setdefault(row, sym) == sym
    assert v.alphabet_size == len(seen)


def test_joint_view_empty_columns_rejected():
    with pytest.raises(EstimationError):
        joint_view(np.zeros((3, 2), dtype=int), [])


# --- exact pmfs ----------------------------------------------------------

def xor_pmf():
    support = [(a, b, a ^ b) for a in (0, 1) for b in (0, 1)]
    return ExactPmf(support, np.full(4, 0.25))


def test_exact_mi_xor():
    pmf = xor_pmf()
    assert exact_mi(pmf, [0, 1], [2]) == pytest.approx(1.0, abs=1e-12)
    assert exact_mi(pmf, [0], [2]) == pytest.approx(0.0, abs=1e-12)


def test_exact_mi_validation():
    pmf = xor_pmf()
    with pytest.raises(EstimationError):
        exact_mi(pmf, [0], [0])
    with pytest.raises(EstimationError):
        exact_mi(pmf, [0], [5])


def test_with_column():
    pmf = xor_pmf()
    ext = with_column(pmf, lambda t: t[0] & t[1])
    assert ext.n_coords == 4
    assert exact_mi(ext, [3], [2]) >= 0.0


def test_exact_pmf_validation():
    with pytest.raises(EstimationError):
        ExactPmf([(0,), (0,)], np.array([0.5, 0.5]))
    with pytest.raises(EstimationError):
        ExactPmf([(0,), (1,)], np.array([0.7, 0.7]))


def test_pmf_sampling_matches_plugin():
    pmf = xor_pmf()
    rows = pmf.sample(200_000, np.random.default_rng(1))
    a = joint_view(rows, [0, 1])
    b = joint_view(rows, [2])
    assert mutual_information(a, b) == pytest.approx(1.0, abs=5e-3)


# --- loss-comparison estimator ------------------------------------------

def test_loss_comparison_matches_plugin_on_xor():
    pmf = xor_pmf()
    rows = pmf.sample(400, np.random.default_rng(2))
    x = SampleMatrix(rows[:, :2].astype(float), ["a", "b"])
    cfg = AuxTrainerConfig(hidden=(16,), epochs=300, seed=0)
    est = loss_comparison_mi(x, rows[:, 2], cfg)
    assert est == pytest.approx(1.0, abs=0.1)

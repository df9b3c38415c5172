import numpy as np
import pytest

from oodtune.metrics import (
    RocResult,
    auroc,
    accuracy,
    harmonic_mean,
    measure_throughput,
    throughput,
)
from oodtune.model import Discriminator


def pair_count_auroc(id_scores, ood_scores):
    """Brute-force O(n*m) Mann-Whitney oracle with half-credit ties."""
    a = np.asarray(id_scores)[:, None]
    b = np.asarray(ood_scores)[None, :]
    wins = (a > b).sum()
    ties = (a == b).sum()
    return (wins + 0.5 * ties) / (a.size * b.size)


def test_perfect_separation():
    assert auroc([0.9, 0.8], [0.1, 0.2]).auroc == 1.0


def test_all_equal_scores_give_half():
    assert auroc([0.5, 0.5], [0.5, 0.5, 0.5]).auroc == pytest.approx(0.5)


def test_three_of_four_pairs_ordered():
    assert auroc([0.9, 0.4], [0.6, 0.1]).auroc == pytest.approx(0.75)


def test_empty_side_rejected():
    with pytest.raises(ValueError):
        auroc([], [0.1])
    with pytest.raises(ValueError):
        auroc([0.1], [])


def test_curve_endpoints_and_monotonicity():
    rng = np.random.default_rng(0)
    res = auroc(rng.normal(1.0, 1.0, 40), rng.normal(0.0, 1.0, 25))
    assert res.curve[0] == (0.0, 0.0)
    assert res.curve[-1] == (1.0, 1.0)
    fpr = [p[0] for p in res.curve]
    tpr = [p[1] for p in res.curve]
    assert all(x2 >= x1 for x1, x2 in zip(fpr, fpr[1:]))
    assert all(y2 >= y1 for y1, y2 in zip(tpr, tpr[1:]))
    assert res.n_id == 40 and res.n_ood == 25


def test_auroc_matches_pair_counting_with_ties():
    rng = np.random.default_rng(42)
    for _ in range(200):
        n, m = rng.integers(1, 60, size=2)
        # quantized scores force plenty of exact ties
        ids = np.round(rng.normal(0.3, 1.0, n), 1)
        oods = np.round(rng.normal(0.0, 1.0, m), 1)
        got = auroc(ids, oods).auroc
        assert abs(got - pair_count_auroc(ids, oods)) <= 1e-12


def test_label_flip_symmetry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = np.round(rng.normal(size=rng.integers(1, 40)), 1)
        b = np.round(rng.normal(size=rng.integers(1, 40)), 1)
        assert abs(auroc(a, b).auroc + auroc(b, a).auroc - 1.0) <= 1e-12


def test_monotone_transform_invariance():
    rng = np.random.default_rng(9)
    for _ in range(50):
        a = rng.normal(size=30)
        b = rng.normal(size=20)
        base = auroc(a, b).auroc
        for f in (np.exp, np.tanh, lambda s: 3.0 * s + 2.0):
            assert abs(auroc(f(a), f(b)).auroc - base) <= 1e-12


def test_accuracy_memorized_and_flipped():
    model = Discriminator([2, 2], np.random.default_rng(0))
    model.weights[0].data = np.eye(2) * 5.0
    model.biases[0].data = np.zeros(2)
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.1]])
    y = np.array([0, 1, 0])
    assert accuracy(model, x, y) == 1.0
    assert accuracy(model, x, 1 - y) == 0.0


def test_accuracy_empty_rejected():
    model = Discriminator([2, 2], np.random.default_rng(0))
    with pytest.raises(ValueError):
        accuracy(model, np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_harmonic_mean_values():
    assert harmonic_mean(1.0, 1.0) == 1.0
    assert harmonic_mean(0.7, 0.0) == 0.0
    assert harmonic_mean(0.0, 0.0) == 0.0
    assert harmonic_mean(0.8, 0.4) == pytest.approx(0.533333, abs=1e-6)


def test_harmonic_mean_rejects_out_of_range():
    with pytest.raises(ValueError):
        harmonic_mean(1.2, 0.5)


def test_throughput_arithmetic():
    assert throughput(100, 2.0) == 50.0
    assert throughput(1, 1.0) == 1.0
    with pytest.raises(ValueError):
        throughput(100, 0.0)
    with pytest.raises(ValueError):
        throughput(0, 1.0)


def test_measure_throughput_reports_count():
    res = measure_throughput(lambda: sum(range(1000)), n_items=10)
    assert res.n_items == 10
    assert res.items_per_second > 0

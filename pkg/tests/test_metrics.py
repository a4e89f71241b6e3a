import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from sleepdbn.metrics import MetricError, accuracy, binary_auroc, compute_metrics, macro_f1, mean_ovr_auroc


def test_accuracy_half():
    assert accuracy(["W", "N1"], ["W", "N2"]) == 0.5


def test_perfect_separation():
    scores = np.eye(3)[[0, 0, 1, 1, 2, 2]]
    assert mean_ovr_auroc(scores, [0, 0, 1, 1, 2, 2]) == 1.0


def test_constant_scores_give_half():
    scores = np.full((9, 3), 1 / 3)
    assert mean_ovr_auroc(scores, [0, 1, 2] * 3) == 0.5


def test_empty_inputs():
    with pytest.raises(MetricError):
        accuracy([], [])
    with pytest.raises(MetricError):
        macro_f1([], [])
    with pytest.raises(MetricError):
        mean_ovr_auroc(np.zeros((0, 3)), [])


def test_macro_f1_only_classes_in_truth():
    # class 4 appears only in predictions and is not averaged
    assert macro_f1([0, 0, 1], [0, 4, 1]) == pytest.approx(np.mean([2 / 3, 1.0]))


def test_random_instances_match_brute_force():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(6, 40))
        truth = rng.integers(0, 5, n)
        pred = np.where(rng.random(n) < 0.5, truth, rng.integers(0, 5, n))
        labels = np.r_[[0, 1, 2], rng.integers(0, 3, n - 3)]
        # coarse scores so ties occur
        scores = rng.integers(0, 6, (n, 3)) / 5.0
        acc, f1, auc = compute_metrics(pred, truth, scores, labels)
        assert abs(acc - np.mean([t == p for t, p in zip(truth, pred)])) <= 1e-12
        assert abs(f1 - oracles.f1_bruteforce(list(truth), list(pred))) <= 1e-12
        ref = np.mean([oracles.pairwise_auroc(scores[:, c], labels == c) for c in range(3)])
        assert abs(auc - ref) <= 1e-12


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=4, max_size=40, unique=True), st.data())
def test_inverted_scores(scores, data):
    labels = data.draw(st.lists(st.booleans(), min_size=len(scores), max_size=len(scores)))
    if all(labels) or not any(labels):
        return
    a = binary_auroc(scores, labels)
    b = binary_auroc([-s for s in scores], labels)
    assert a + b == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= a <= 1.0

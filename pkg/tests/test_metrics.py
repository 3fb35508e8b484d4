import numpy as np
import pytest

from training.metrics import compute_metrics
from utils.errors import PreconditionError


def ranks(values):
    """Average ranks, ties sharing the mean of their positions."""
    order = np.argsort(values, kind="mergesort")
    result = np.empty(values.size)
    sorted_values = values[order]
    start = 0
    while start < values.size:
        stop = start
        while stop + 1 < values.size and sorted_values[stop + 1] == sorted_values[start]:
            stop += 1
        result[order[start:stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    return result


def pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


def test_metrics_agree_with_direct_formulas():
    rng = np.random.default_rng(0)
    for _ in range(100):
        size = int(rng.integers(2, 50))
        pred = rng.normal(size=size)
        true = 0.5 * pred + rng.normal(size=size)
        metrics = compute_metrics(pred, true)
        assert metrics.rmse == pytest.approx(np.sqrt(np.mean((pred - true) ** 2)), abs=1e-12)
        assert metrics.mae == pytest.approx(np.mean(np.abs(pred - true)), abs=1e-12)
        assert metrics.pearson == pytest.approx(pearson(pred, true), abs=1e-12)
        assert metrics.spearman == pytest.approx(pearson(ranks(pred), ranks(true)), abs=1e-12)
        assert metrics.count == size


def test_spearman_uses_average_ranks_for_ties():
    pred = np.array([1.0, 1.0, 2.0, 3.0])
    true = np.array([4.0, 1.0, 2.0, 3.0])
    assert compute_metrics(pred, true).spearman == pytest.approx(pearson(ranks(pred), ranks(true)), abs=1e-12)


def test_zero_variance_leaves_correlations_undefined():
    metrics = compute_metrics([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
    assert metrics.pearson is None and metrics.spearman is None
    assert metrics.mae == pytest.approx(2.0 / 3.0)


def test_single_prediction():
    metrics = compute_metrics([2.0], [1.5])
    assert metrics.rmse == pytest.approx(0.5) and metrics.pearson is None


def test_shape_mismatch_and_empty_input():
    with pytest.raises(PreconditionError):
        compute_metrics([1.0, 2.0], [1.0])
    with pytest.raises(PreconditionError):
        compute_metrics([], [])

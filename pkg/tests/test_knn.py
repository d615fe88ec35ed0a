import math

import numpy as np
import pytest

from geobudget.knn import KNN_MODES, knn_query, knn_truth, total_distance
from geobudget.mechanisms import lambda_bound
from geobudget.metrics import MetricDescriptor
from geobudget.protocol import AnalystSession
from geobudget.utils import make_rng

PLANE = MetricDescriptor.euclidean(2)
POINTS = np.array([[9.0, 0.0], [1.0, 0.0], [0.0, 3.0], [-2.0, 0.0], [20.0, 20.0], [0.0, -30.0]])


def plane_session(points, budget, seed=0):
    return AnalystSession.from_points(list(points), budget, PLANE, rng=make_rng(seed))


def test_truth_breaks_ties_by_id():
    assert knn_truth(POINTS, [0.0, 0.0], 3) == (1, 3, 2)
    assert knn_truth([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], [0.0, 0.0], 2) == (0, 1)
    assert total_distance(POINTS, [0.0, 0.0], (1, 3)) == pytest.approx(3.0)


@pytest.mark.parametrize("mode", KNN_MODES)
def test_exact_with_large_budget(mode):
    session = plane_session(POINTS, 1e8)
    result = knn_query(session, [0.0, 0.0], 3, mode, 1e8)
    assert sorted(result.indices) == [1, 2, 3]


def test_privacy_saving_mode_exits_early():
    session = plane_session(POINTS, 1e8)
    result = knn_query(session, [0.0, 0.0], 2, "pm_dist", 1e8, rounds=4)
    assert result.path == "early_exit"
    assert result.indices == (1, 3)
    assert all(spent == pytest.approx(2.5e7) for spent in result.spent.values())


def test_users_without_output_rank_last():
    session = plane_session(POINTS, 1e8)
    allocation = {i: 1e8 for i in range(6)}
    allocation[1] = 0.0
    result = knn_query(session, [0.0, 0.0], 3, "bm_point", allocation)
    assert 1 not in result.indices
    assert sorted(result.indices) == [0, 2, 3]


def test_k_must_be_smaller_than_n():
    session = plane_session(POINTS, 1.0)
    with pytest.raises(ValueError):
        knn_query(session, [0.0, 0.0], 6, "bm_point", 1.0)
    with pytest.raises(ValueError):
        knn_query(session, [0.0, 0.0], 0, "pm_point", 1.0)
    with pytest.raises(ValueError):
        knn_query(session, [0.0, 0.0], 2, "pm_area", 1.0)


@pytest.mark.parametrize("mode,d", [("bm_point", 2), ("bm_dist", 1)])
def test_baseline_excess_distance_bound(mode, d):
    n, k, rho, beta = 50, 3, 0.01, 0.05
    bound = 2 * k * lambda_bound(d, beta / n) / np.sqrt(2 * rho)
    failures = 0
    for trial in range(100):
        points = make_rng(9, trial).uniform(0.0, 100.0, size=(n, 2))
        p = [50.0, 50.0]
        result = knn_query(plane_session(points, rho, seed=trial), p, k, mode, rho)
        excess = total_distance(points, p, result.indices) - total_distance(points, p, knn_truth(points, p, k))
        assert excess >= -1e-9
        failures += int(excess > bound)
    assert failures <= 15


@pytest.mark.parametrize("mode", ["pm_point", "pm_dist"])
def test_all_but_one_neighbour_keeps_the_true_set(mode):
    n, k, trials, beta0 = 8, 7, 200, 0.025
    failures = 0
    for trial in range(trials):
        points = make_rng(61, trial).uniform(-10.0, 10.0, size=(n, 2))
        result = knn_query(plane_session(points, 1.0, seed=trial), [0.0, 0.0], k, mode, 1.0, beta0=beta0)
        assert len(set(result.indices)) == k
        failures += int(not set(knn_truth(points, [0.0, 0.0], k)) <= set(result.elimination.G))
    assert failures <= beta0 * trials + 3.0 * math.sqrt(trials * beta0 * (1.0 - beta0))


def test_privacy_saving_error_matches_baseline_when_many_users_are_settled():
    n, k, rho, trials = 100, 4, 1e-2, 300
    errors = {mode: [] for mode in KNN_MODES}
    settled = {"pm_point": [], "pm_dist": []}
    for trial in range(trials):
        points = make_rng(62, trial).uniform(0.0, 600.0, size=(n, 2))
        p = make_rng(63, trial).uniform(150.0, 450.0, size=2)
        truth = total_distance(points, p, knn_truth(points, p, k))
        for index, mode in enumerate(KNN_MODES):
            result = knn_query(plane_session(points, rho, seed=10 * trial + index), p, k, mode, rho)
            errors[mode].append((total_distance(points, p, result.indices) - truth) / truth)
            if mode in settled:
                settled[mode].append(1.0 - len(result.elimination.G) / n)
    for pm, bm in (("pm_point", "bm_point"), ("pm_dist", "bm_dist")):
        assert np.mean(settled[pm]) >= 0.25
        pm_errors, bm_errors = np.array(errors[pm]), np.array(errors[bm])
        slack = 3.0 * np.std(pm_errors - bm_errors, ddof=1) / math.sqrt(trials)
        assert pm_errors.mean() <= 1.1 * bm_errors.mean() + slack

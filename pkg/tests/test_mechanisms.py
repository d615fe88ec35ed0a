import math

import numpy as np
import pytest
from scipy import stats

from geobudget.mechanisms import (
    NULL_MECHANISM,
    MechanismError,
    MechanismSpec,
    NoisyEstimateSeries,
    lambda_bound,
    make_triple_point,
    make_triple_scalar,
    run_mechanism,
    sample_gaussian_mech,
    sample_laplace_gp,
    weighted_prefix_mean,
)
from geobudget.protocol import split_budget
from geobudget.utils import make_rng


def test_mechanism_spec_validation():
    with pytest.raises(MechanismError):
        MechanismSpec.gaussian(0.0)
    with pytest.raises(MechanismError):
        MechanismSpec("null", privacy_param=0.5)
    with pytest.raises(MechanismError):
        MechanismSpec.laplace(1.0, lipschitz=0.0)
    assert NULL_MECHANISM.is_null


def test_null_mechanism_outputs_nothing():
    assert run_mechanism(NULL_MECHANISM, 3.0, make_rng(1)) is None


def test_gaussian_noise_scale():
    rng = make_rng(11)
    samples = np.array([sample_gaussian_mech(1.0, 2.0, 0.5, rng) for _ in range(20000)])
    # K / sqrt(2 rho) = 2
    assert samples.mean() == pytest.approx(1.0, abs=0.05)
    assert samples.std() == pytest.approx(2.0, rel=0.03)


def test_gaussian_keeps_vector_shape():
    out = sample_gaussian_mech(np.zeros(3), 1.0, 1.0, make_rng(2))
    assert isinstance(out, np.ndarray) and out.shape == (3,)


def test_laplace_gp_one_dimension_is_laplace():
    rng = make_rng(5)
    eps, K = 2.0, 1.5
    samples = np.array([sample_laplace_gp(0.0, K, eps, 1, rng) for _ in range(5000)])
    result = stats.kstest(samples, stats.laplace(scale=K / eps).cdf)
    assert result.pvalue > 0.001


def test_laplace_gp_radius_is_gamma():
    rng = make_rng(6)
    eps, d = 0.5, 2
    radii = np.array([np.linalg.norm(sample_laplace_gp(np.zeros(d), 1.0, eps, d, rng)) for _ in range(5000)])
    assert radii.mean() == pytest.approx(d / eps, rel=0.05)


def test_laplace_gp_rejects_wrong_dimension():
    with pytest.raises(MechanismError):
        sample_laplace_gp(np.zeros(3), 1.0, 1.0, 2, make_rng(0))


def test_run_mechanism_applies_query():
    spec = MechanismSpec.gaussian(1e12, query=lambda x: float(np.sum(x)))
    assert run_mechanism(spec, np.array([1.0, 2.0]), make_rng(3)) == pytest.approx(3.0, abs=1e-4)


@pytest.mark.parametrize("d", [1, 2, 3, 10])
@pytest.mark.parametrize("beta", [0.5, 0.1, 0.01])
def test_lambda_bound_tail(d, beta):
    samples = 100_000
    norms = np.linalg.norm(make_rng(d, int(beta * 1000)).standard_normal((samples, d)), axis=1)
    exceed = np.mean(norms > lambda_bound(d, beta))
    sigma = math.sqrt(beta * (1 - beta) / samples)
    assert exceed <= beta + 3 * sigma


def test_lambda_bound_validation():
    with pytest.raises(MechanismError):
        lambda_bound(2, 1.0)
    with pytest.raises(MechanismError):
        lambda_bound(0, 0.1)


def test_weighted_prefix_mean():
    series = NoisyEstimateSeries([0.0, 4.0, 100.0], [1.0, 3.0, 1.0])
    assert weighted_prefix_mean(series, 2) == pytest.approx(3.0)
    assert series.cumulative(2) == pytest.approx(4.0)
    with pytest.raises(MechanismError):
        weighted_prefix_mean(series, 4)


def test_weighted_prefix_mean_vectors():
    series = NoisyEstimateSeries()
    series.append(np.array([0.0, 2.0]), 1.0)
    series.append(np.array([2.0, 2.0]), 1.0)
    assert np.allclose(weighted_prefix_mean(series), [1.0, 2.0])


def test_series_rejects_nonpositive_params():
    with pytest.raises(MechanismError):
        NoisyEstimateSeries().append(1.0, 0.0)


def test_scalar_triple_width():
    triple = make_triple_scalar(lambda x: float(x[0]))
    assert triple.width([0.25, 0.25], 0.1) == pytest.approx(lambda_bound(1, 0.1))


def test_point_triple_estimates_phi_at_mean():
    triple = make_triple_point(lambda x: float(np.linalg.norm(x)), 2)
    rng = make_rng(4)
    series = NoisyEstimateSeries()
    for _ in range(3):
        series.append(triple.privatize(np.array([3.0, 4.0]), 1e12, rng), 1e12)
    assert triple.estimate(series) == pytest.approx(5.0, abs=1e-4)
    assert triple.width(series.params, 0.1) == pytest.approx(lambda_bound(2, 0.1) / math.sqrt(6e12))


def test_triple_mechanism_is_unit_lipschitz_gaussian():
    spec = make_triple_scalar(lambda x: 0.0).mechanism_spec(0.3)
    assert spec.privacy_param == 0.3 and spec.lipschitz == 1.0


def corner_distance(x):
    return float(np.linalg.norm(np.asarray(x, dtype=float).reshape(-1) - np.array([3.0, 4.0])))


def first_coordinate(x):
    return float(np.asarray(x, dtype=float).reshape(-1)[0])


@pytest.mark.parametrize("triple,phi", [
    (make_triple_scalar(first_coordinate), first_coordinate),
    (make_triple_scalar(corner_distance), corner_distance),
    (make_triple_point(corner_distance, 2), corner_distance),
], ids=["scalar-coordinate", "scalar-distance", "point-distance"])
@pytest.mark.parametrize("beta", [0.1, 0.01])
def test_triple_interval_covers_phi(triple, phi, beta):
    u = np.array([1.0, -2.0])
    truth = phi(u)
    params = split_budget(0.5, 8, "doubling")
    rng = make_rng(21, int(1 / beta))
    trials = 1000
    misses = {2: 0, 8: 0}
    for _ in range(trials):
        outputs = [triple.privatize(u, r, rng) for r in params]
        for j in misses:
            prefix = NoisyEstimateSeries(outputs[:j], params[:j])
            misses[j] += int(abs(triple.estimate(prefix) - truth) > triple.width(prefix.params, beta))
    limit = beta * trials + 3.0 * math.sqrt(trials * beta * (1.0 - beta))
    assert all(count <= limit for count in misses.values())


@pytest.mark.parametrize("c,scheme", [(64, "even"), (10, "doubling")])
def test_weighted_prefix_mean_variance(c, scheme):
    rho, u, trials = 1.0, 2.5, 4000
    rng = make_rng(22, c)
    series = NoisyEstimateSeries()
    for r in split_budget(rho, c, scheme):
        series.append(sample_gaussian_mech(np.full(trials, u), 1.0, r, rng), r)
    estimates = np.asarray(weighted_prefix_mean(series))
    assert estimates.shape == (trials,)
    assert abs(estimates.mean() - u) < 4.0 * math.sqrt(0.5 / trials)
    assert estimates.var(ddof=1) == pytest.approx(1.0 / (2.0 * rho), rel=0.1)

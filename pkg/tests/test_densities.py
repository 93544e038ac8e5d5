"""Weighted density estimators and the sample-weighted JS divergence."""

import math

import numpy as np
import pytest
from scipy.stats import gaussian_kde

from diffsub.densities import (
    DENSITY_FLOOR,
    WeightedEmpiricalPMF,
    WeightedKDE,
    fit_discrete,
    fit_kde,
    js_divergence,
    weighted_quantiles,
)
from diffsub.errors import (
    DimensionMismatch,
    IndexOutOfRange,
    UnfittedEstimator,
    ZeroTotalWeight,
)

LN2 = math.log(2.0)


def exact_pmf(probs):
    """PMF object with exactly the given probabilities (no Laplace floor)."""
    return WeightedEmpiricalPMF(probs=np.asarray(probs, float), total_weight=1.0)


def js_of_pmfs(p, q):
    """Direct-summation JS oracle for two exact PMFs."""
    total = 0.0
    for pi, qi in zip(p, q):
        mix = 0.5 * (pi + qi)
        total += 0.5 * pi * math.log(pi / mix) + 0.5 * qi * math.log(qi / mix)
    return total


def pmf_js_result(p, q):
    """Evaluate js_divergence so the weighted sums telescope to exact KLs."""
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    labels = np.arange(p.size, dtype=float)
    return js_divergence(exact_pmf(p), exact_pmf(q), labels, p, labels, q)


def test_fit_discrete_unweighted_counts():
    pmf = fit_discrete([0, 1, 1, 2], np.ones(4), n_classes=3)
    assert np.allclose(pmf.probs, [0.25, 0.5, 0.25], atol=1e-8)
    assert pmf.total_weight == 4.0
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-15)


def test_fit_discrete_weighted_counts():
    pmf = fit_discrete([0, 0, 1, 2], [2.0, 1.0, 0.5, 0.5], n_classes=3)
    assert np.allclose(pmf.probs, [0.75, 0.125, 0.125], atol=1e-8)


def test_fit_discrete_floor_keeps_unseen_classes_positive():
    pmf = fit_discrete([0, 0], np.ones(2), n_classes=4)
    assert np.all(pmf.probs > 0)
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-15)
    assert pmf.probs[0] == pytest.approx(1.0, abs=1e-8)


def test_fit_discrete_errors():
    with pytest.raises(ZeroTotalWeight):
        fit_discrete([0, 1], np.zeros(2), n_classes=2)
    with pytest.raises(IndexOutOfRange):
        fit_discrete([0, 5], np.ones(2), n_classes=3)
    with pytest.raises(IndexOutOfRange):
        fit_discrete([-1, 0], np.ones(2), n_classes=2)
    with pytest.raises(DimensionMismatch):
        fit_discrete([0, 1, 1], np.ones(2), n_classes=2)


def test_pmf_density_lookup():
    pmf = exact_pmf([0.2, 0.5, 0.3])
    assert np.allclose(pmf.density([2, 0, 1]), [0.3, 0.2, 0.5])
    with pytest.raises(IndexOutOfRange):
        pmf.density([3])


def test_fit_kde_matches_scipy_weighted_kde(rng):
    y = rng.normal(1.0, 2.0, 60)
    m = rng.uniform(0.1, 1.0, 60)
    ours = fit_kde(y, m)
    ref = gaussian_kde(y, bw_method="scott", weights=m)
    grid = np.linspace(y.min() - 3, y.max() + 3, 41)
    assert np.allclose(ours.density(grid), ref(grid), rtol=1e-10)
    assert ours.bandwidth == pytest.approx(
        float(np.sqrt(ref.covariance[0, 0])), rel=1e-12
    )


def test_fit_kde_uniform_weights_closed_forms(rng):
    y = rng.normal(0.0, 1.0, 50)
    kde = fit_kde(y, np.ones(50))
    assert kde.n_eff == pytest.approx(50.0, rel=1e-12)
    assert kde.mean == pytest.approx(float(y.mean()), rel=1e-12)
    assert kde.std == pytest.approx(float(y.std(ddof=1)), rel=1e-12)
    assert kde.bandwidth == pytest.approx(float(y.std(ddof=1)) * 50 ** -0.2, rel=1e-12)
    assert kde.total_weight == pytest.approx(50.0)
    assert not kde.degenerate


def test_fit_kde_density_integrates_to_one(rng):
    y = rng.normal(0.0, 1.5, 40)
    kde = fit_kde(y, rng.uniform(0.2, 1.0, 40))
    grid = np.linspace(y.min() - 8, y.max() + 8, 4001)
    mass = np.trapezoid(kde.density(grid), grid)
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_fit_kde_degenerate_support_falls_back():
    kde = fit_kde(np.full(10, 3.0), np.ones(10))
    assert kde.degenerate
    assert kde.bandwidth == pytest.approx(1e-6 * 4.0)
    assert kde.mean == pytest.approx(3.0)


def test_fit_kde_errors():
    with pytest.raises(ZeroTotalWeight):
        fit_kde(np.arange(3.0), np.zeros(3))
    with pytest.raises(DimensionMismatch):
        fit_kde(np.arange(3.0), np.ones(4))


def test_js_identical_pmfs_is_zero():
    res = pmf_js_result([0.2, 0.5, 0.3], [0.2, 0.5, 0.3])
    assert res.value == 0.0
    assert res.raw == pytest.approx(0.0, abs=1e-15)


def test_js_near_disjoint_pmfs_approaches_ln2():
    delta = 1e-9
    res = pmf_js_result([1 - delta, delta], [delta, 1 - delta])
    assert res.value == pytest.approx(LN2, abs=1e-7)
    assert res.value <= LN2 + 1e-12


def test_js_exact_pmfs_match_direct_summation(rng):
    for _ in range(50):
        k = int(rng.integers(2, 8))
        p = 0.9 * rng.dirichlet(np.ones(k)) + 0.1 / k
        q = 0.9 * rng.dirichlet(np.ones(k)) + 0.1 / k
        res = pmf_js_result(p, q)
        assert res.value == pytest.approx(js_of_pmfs(p, q), abs=1e-12)


def test_js_symmetry_and_range(rng):
    for _ in range(20):
        k = int(rng.integers(2, 6))
        p = 0.9 * rng.dirichlet(np.ones(k)) + 0.1 / k
        q = 0.9 * rng.dirichlet(np.ones(k)) + 0.1 / k
        fwd = pmf_js_result(p, q).value
        rev = pmf_js_result(q, p).value
        assert fwd == pytest.approx(rev, abs=1e-12)
        assert 0.0 <= fwd <= LN2 + 1e-12


def test_js_bounded_for_kde_estimators(rng):
    # mix >= own/2 pointwise caps every log-ratio at ln 2, floors included
    y0 = rng.normal(0.0, 1.0, 30)
    y1 = rng.normal(8.0, 0.5, 25)
    m0 = rng.uniform(0.1, 1.0, 30)
    m1 = rng.uniform(0.1, 1.0, 25)
    p0, p1 = fit_kde(y0, m0), fit_kde(y1, m1)
    res = js_divergence(p0, p1, y0, m0, y1, m1)
    assert 0.0 <= res.value <= LN2 + 1e-12
    assert np.all(res.lr0 <= LN2 + 1e-12)
    assert np.all(res.lr1 <= LN2 + 1e-12)


def test_js_invariant_to_groupwise_weight_scaling(rng):
    y0 = rng.normal(0.0, 1.0, 20)
    y1 = rng.normal(1.0, 1.0, 20)
    m0 = rng.uniform(0.2, 1.0, 20)
    m1 = rng.uniform(0.2, 1.0, 20)
    p0, p1 = fit_kde(y0, m0), fit_kde(y1, m1)
    base = js_divergence(p0, p1, y0, m0, y1, m1)
    scaled = js_divergence(p0, p1, y0, 3.0 * m0, y1, 0.5 * m1)
    assert scaled.value == pytest.approx(base.value, rel=1e-12)


def test_js_coefficients_match_finite_differences(rng):
    y0 = rng.normal(0.0, 1.0, 15)
    y1 = rng.normal(0.8, 1.2, 12)
    m0 = rng.uniform(0.2, 1.0, 15)
    m1 = rng.uniform(0.2, 1.0, 12)
    p0, p1 = fit_kde(y0, m0), fit_kde(y1, m1)
    res = js_divergence(p0, p1, y0, m0, y1, m1)
    eps = 1e-6
    for i in (0, 7):
        hi, lo = m0.copy(), m0.copy()
        hi[i] += eps
        lo[i] -= eps
        fd = (
            js_divergence(p0, p1, y0, hi, y1, m1).raw
            - js_divergence(p0, p1, y0, lo, y1, m1).raw
        ) / (2 * eps)
        assert res.coeff0[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)
    hi, lo = m1.copy(), m1.copy()
    hi[3] += eps
    lo[3] -= eps
    fd = (
        js_divergence(p0, p1, y0, m0, y1, hi).raw
        - js_divergence(p0, p1, y0, m0, y1, lo).raw
    ) / (2 * eps)
    assert res.coeff1[3] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_js_floors_far_tail_queries(rng):
    # a query far outside a narrow KDE underflows to zero density; the floor
    # keeps the log finite rather than propagating -inf
    y0 = np.array([0.0, 0.1, -0.1])
    y1 = np.array([0.05, 1e6])
    m0 = np.ones(3)
    m1 = np.ones(2)
    res = js_divergence(fit_kde(y0, m0), fit_kde(y1, m1), y0, m0, y1, m1)
    assert np.isfinite(res.raw)
    assert np.isfinite(res.value)


def test_js_unfitted_and_mixed_kind_estimators(rng):
    y = np.array([0.0, 1.0])
    m = np.ones(2)
    with pytest.raises(UnfittedEstimator):
        js_divergence(None, fit_kde(y, m), y, m, y, m)
    with pytest.raises(UnfittedEstimator):
        js_divergence(exact_pmf([0.5, 0.5]), fit_kde(y, m), y, m, y, m)
    with pytest.raises(DimensionMismatch):
        p = fit_kde(y, m)
        js_divergence(p, p, y, np.ones(3), y, m)


def test_weighted_quantiles_hand_case():
    qs = weighted_quantiles([1.0, 2.0, 3.0, 4.0], [0.25] * 4, (0.5, 1.0))
    assert qs[0.5] == 2.0
    assert qs[1.0] == 4.0


def test_density_floor_is_tiny_positive():
    assert 0 < DENSITY_FLOOR < 1e-9

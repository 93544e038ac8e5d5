"""Soft predicates, harmonic conjunctions, and rule hardening."""

import math

import numpy as np
import pytest

from conftest import fd_membership, rand_dataset, rand_rule, rel_err
from diffsub.data import from_arrays
from diffsub.errors import (
    AllWeightsZero,
    DimensionMismatch,
    NonPositiveTemperature,
)
from diffsub.rules import (
    Condition,
    HardRule,
    SoftRule,
    harden,
    init_rule,
    membership_batch,
    soft_membership,
    soft_predicate,
)


def scalar_predicate(x, a, b, t):
    """Unvectorized, unclamped reference for the soft interval indicator."""
    return 1.0 / (1.0 + math.exp(-(x - a) / t) + math.exp(-(b - x) / t))


def test_soft_predicate_hand_values():
    # at the box midpoint with a = 0, b = 1, t = 0.5 both logits are -1
    assert soft_predicate(0.5, 0.0, 1.0, 0.5) == pytest.approx(
        1.0 / (1.0 + 2.0 * math.exp(-1.0)), rel=1e-12
    )
    assert soft_predicate(0.5, 0.0, 1.0, 0.5) == pytest.approx(0.576117, abs=1e-5)
    # at a boundary with the far side negligible the value is 1/2
    assert soft_predicate(0.3, 0.3, 50.0, 0.1) == pytest.approx(0.5, abs=1e-10)


def test_soft_predicate_matches_scalar_reference_on_grid(rng):
    for _ in range(200):
        a = rng.uniform(-1, 1)
        b = a + rng.uniform(0.2, 2.0)
        t = rng.uniform(0.05, 1.0)
        x = rng.uniform(a - 2, b + 2)
        if max(abs((x - a) / t), abs((b - x) / t)) >= 29.0:
            continue  # keep clear of the overflow clamp; tested separately
        assert soft_predicate(x, a, b, t) == pytest.approx(
            scalar_predicate(x, a, b, t), rel=1e-12
        )


def test_soft_predicate_is_symmetric_about_midpoint():
    a, b, t = 0.2, 0.8, 0.13
    for delta in (0.05, 0.1, 0.25, 0.4):
        left = soft_predicate(a + delta, a, b, t)
        right = soft_predicate(b - delta, a, b, t)
        assert left == pytest.approx(right, rel=1e-12)


def test_soft_predicate_sharpens_toward_indicator():
    inside = [soft_predicate(0.5, 0.0, 1.0, t) for t in (0.5, 0.2, 0.05, 0.01)]
    outside = [soft_predicate(1.5, 0.0, 1.0, t) for t in (0.5, 0.2, 0.05, 0.01)]
    assert all(np.diff(inside) > 0) and inside[-1] > 0.999999
    assert all(np.diff(outside) < 0) and outside[-1] < 1e-12


def test_soft_predicate_clamps_instead_of_overflowing():
    val = soft_predicate(1e6, 0.0, 1.0, 1e-3)
    assert np.isfinite(val)
    assert 0.0 < val < 1e-12
    with pytest.raises(NonPositiveTemperature):
        soft_predicate(0.5, 0.0, 1.0, 0.0)


def equal_box_rule(d, rho, t=0.2):
    return SoftRule(a=np.zeros(d), b=np.ones(d), rho=np.asarray(rho, float), t=t)


def test_membership_single_active_feature_equals_predicate(rng):
    ds = rand_dataset(rng)
    rule = rand_rule(rng, ds)
    rule.rho = np.array([0.7, 0.0, -0.2])
    mb = membership_batch(rule, ds.features)
    expected = soft_predicate(
        ds.features[:, 0], rule.a[0], rule.b[0], rule.t * rule.t_scale[0]
    )
    assert np.allclose(mb.m, expected, rtol=1e-12)
    # inactive feature columns carry exactly zero gradient
    assert np.all(mb.dm_da[:, 1:] == 0)
    assert np.all(mb.dm_db[:, 1:] == 0)
    assert np.all(mb.dm_drho[:, 2] == 0)


def test_membership_equal_predicates_reduce_to_common_value(rng):
    # identical intervals and a constant row make every predicate equal,
    # and any weighted harmonic mean of equal values is that value
    rule = equal_box_rule(4, [0.3, 1.2, 0.5, 2.0])
    X = np.tile(rng.uniform(0, 1, (10, 1)), (1, 4))
    mb = membership_batch(rule, X)
    expected = soft_predicate(X[:, 0], 0.0, 1.0, rule.t)
    assert np.allclose(mb.m, expected, rtol=1e-12)


def test_membership_invariant_to_weight_rescaling(rng):
    ds = rand_dataset(rng)
    rule = rand_rule(rng, ds)
    scaled = rule.copy()
    scaled.rho = rule.rho * 7.5
    m1 = membership_batch(rule, ds.features).m
    m2 = membership_batch(scaled, ds.features).m
    assert np.allclose(m1, m2, rtol=1e-12)


def test_membership_bounded_by_extreme_predicates(rng):
    ds = rand_dataset(rng, n=60)
    rule = rand_rule(rng, ds)
    mb = membership_batch(rule, ds.features)
    pis = np.column_stack(
        [
            soft_predicate(
                ds.features[:, j], rule.a[j], rule.b[j], rule.t * rule.t_scale[j]
            )
            for j in range(ds.d)
        ]
    )
    assert np.all(mb.m <= pis.max(axis=1) + 1e-12)
    assert np.all(mb.m >= pis.min(axis=1) - 1e-12)
    assert np.all(mb.m > 0) and np.all(mb.m < 1)


def test_membership_near_zero_predicate_vetoes():
    rule = equal_box_rule(2, [1.0, 1.0], t=0.05)
    X = np.array([[0.5, 5.0]])
    m = membership_batch(rule, X).m[0]
    assert m < 1e-3


def test_membership_all_weights_zero_raises():
    rule = equal_box_rule(3, [0.0, -1.0, -0.5])
    with pytest.raises(AllWeightsZero):
        membership_batch(rule, np.full((4, 3), 0.5))


def test_membership_rejects_shape_mismatches(rng):
    ds = rand_dataset(rng)
    rule = rand_rule(rng, ds)
    with pytest.raises(DimensionMismatch):
        membership_batch(rule, ds.features[:, :2])
    with pytest.raises(DimensionMismatch):
        membership_batch(rule, ds.features[0])
    with pytest.raises(DimensionMismatch):
        soft_membership(rule, np.zeros(2))
    assert soft_membership(rule, ds.features[3]) == pytest.approx(
        membership_batch(rule, ds.features).m[3]
    )


def test_membership_gradients_match_finite_differences(rng):
    for _ in range(5):
        ds = rand_dataset(rng, n=25)
        rule = rand_rule(rng, ds)
        mb = membership_batch(rule, ds.features)
        fd = fd_membership(rule, ds.features)
        for name, analytic in (("a", mb.dm_da), ("b", mb.dm_db), ("rho", mb.dm_drho)):
            err = rel_err(analytic, fd[name])
            # entries below the FD probe's noise floor are checked absolutely
            big = np.abs(fd[name]) > 1e-4
            assert np.all(err[big] < 1e-5), f"gradient vs FD mismatch on {name}"
            assert np.all(np.abs(analytic - fd[name]) < 1e-7)


def test_membership_negative_rho_has_zero_weight_gradient(rng):
    ds = rand_dataset(rng)
    rule = rand_rule(rng, ds)
    rule.rho = np.array([0.8, -0.3, 0.5])
    mb = membership_batch(rule, ds.features)
    assert np.all(mb.dm_drho[:, 1] == 0)


def test_membership_clamped_region_has_zero_boundary_gradient():
    # deep inside the box at tiny temperature both logits exceed the clamp,
    # so the boundary gradients vanish exactly, matching the clamped value
    rule = SoftRule(a=np.array([0.0]), b=np.array([1.0]), rho=np.array([1.0]), t=0.005)
    mb = membership_batch(rule, np.array([[0.5]]))
    assert mb.m[0] == pytest.approx(1.0, abs=1e-12)
    assert mb.dm_da[0, 0] == 0.0
    assert mb.dm_db[0, 0] == 0.0


def test_soft_rule_validation():
    with pytest.raises(DimensionMismatch):
        SoftRule(a=np.zeros(3), b=np.ones(2), rho=np.ones(3), t=0.1)
    with pytest.raises(DimensionMismatch):
        SoftRule(a=np.zeros((2, 2)), b=np.ones((2, 2)), rho=np.ones((2, 2)), t=0.1)
    with pytest.raises(NonPositiveTemperature):
        SoftRule(a=np.zeros(2), b=np.ones(2), rho=np.ones(2), t=-0.1)
    with pytest.raises(NonPositiveTemperature):
        SoftRule(a=np.zeros(2), b=np.ones(2), rho=np.ones(2), t=0.1,
                 t_scale=np.array([1.0, 0.0]))
    rule = SoftRule(a=np.zeros(2), b=np.ones(2), rho=np.array([0.5, -1.0]), t=0.1)
    assert np.allclose(rule.t_scale, 1.0)
    assert np.allclose(rule.weights, [0.5, 0.0])


def test_soft_rule_copy_is_independent(rng):
    ds = rand_dataset(rng)
    rule = rand_rule(rng, ds)
    dup = rule.copy()
    dup.a[0] += 1.0
    dup.rho[1] = -5.0
    assert rule.a[0] != dup.a[0]
    assert rule.rho[1] != dup.rho[1]


def test_condition_requires_ordered_bounds():
    with pytest.raises(ValueError):
        Condition(feature=0, lo=0.5, hi=0.5)
    with pytest.raises(ValueError):
        Condition(feature=0, lo=0.7, hi=0.2)


def test_hard_rule_membership_is_strict():
    rule = HardRule(conditions=(Condition(0, 0.2, 0.8),))
    X = np.array([[0.2], [0.8], [0.5], [0.199], [0.7999]])
    assert rule.membership(X).tolist() == [0, 0, 1, 0, 1]


def test_hard_rule_conjunction_and_vacuous_case():
    rule = HardRule(conditions=(Condition(0, 0.2, 0.8), Condition(1, 0.0, 0.5)))
    X = np.array([[0.5, 0.25], [0.5, 0.75], [0.9, 0.25]])
    assert rule.membership(X).tolist() == [1, 0, 0]
    empty = HardRule()
    assert empty.membership(X).tolist() == [1, 1, 1]
    with pytest.raises(DimensionMismatch):
        rule.membership(X[:, :1])


def test_harden_keeps_drops_and_clips(rng):
    X = rng.uniform(0.0, 1.0, (200, 4))
    a = rng.integers(0, 2, 200)
    a[0], a[1] = 0, 1
    ds = from_arrays(X, a, rng.normal(size=200), scale=False)
    rule = SoftRule(
        a=np.array([0.25, 0.3, -5.0, 1.5]),
        b=np.array([0.75, 0.6, 5.0, 2.0]),
        rho=np.array([0.8, 1e-4, 0.9, 0.7]),
        t=0.1,
    )
    hard = harden(rule, ds)
    # f1 dropped for tiny weight, f2 for a vacuous interval, f3 for being
    # entirely outside the data; f0 survives unchanged
    assert len(hard.conditions) == 1
    cond = hard.conditions[0]
    assert cond.feature == 0
    assert cond.lo == pytest.approx(0.25)
    assert cond.hi == pytest.approx(0.75)


def test_harden_clips_to_observed_range(rng):
    X = rng.uniform(0.2, 0.9, (100, 1))
    a = rng.integers(0, 2, 100)
    a[0], a[1] = 0, 1
    ds = from_arrays(X, a, rng.normal(size=100), scale=False)
    rule = SoftRule(
        a=np.array([-1.0]), b=np.array([0.6]), rho=np.array([1.0]), t=0.1
    )
    cond = harden(rule, ds).conditions[0]
    assert cond.lo == pytest.approx(ds.features[:, 0].min())
    assert cond.hi == pytest.approx(0.6)


def test_harden_dimension_check(rng):
    ds = rand_dataset(rng, d=3)
    rule = SoftRule(a=np.zeros(2), b=np.ones(2), rho=np.ones(2), t=0.1)
    with pytest.raises(DimensionMismatch):
        harden(rule, ds)


def test_init_rule_starts_wide_with_uniform_weights(rng):
    ds = rand_dataset(rng, n=300, d=4)
    rule = init_rule(ds, t=0.2, rng=rng)
    assert rule.t == 0.2
    assert np.allclose(rule.rho, 0.5)
    assert np.all(rule.a < rule.b)
    q15 = np.percentile(ds.features, 15, axis=0)
    q85 = np.percentile(ds.features, 85, axis=0)
    span = ds.features.max(axis=0) - ds.features.min(axis=0)
    assert np.all(np.abs(rule.a - q15) <= 0.02 * span + 1e-12)
    assert np.all(np.abs(rule.b - q85) <= 0.02 * span + 1e-12)
    assert np.allclose(rule.t_scale, ds.features.std(axis=0))


def test_hard_rule_json_and_describe_use_original_units(rng):
    X = np.column_stack([rng.uniform(10.0, 30.0, 50), rng.uniform(-2.0, 2.0, 50)])
    a = rng.integers(0, 2, 50)
    a[0], a[1] = 0, 1
    ds = from_arrays(X, a, rng.normal(size=50), feature_names=["age", "z"])
    rule = HardRule(conditions=(Condition(0, 0.25, 0.75),))
    blob = rule.to_json(ds)
    lo_raw = ds.features_raw[:, 0].min()
    span = ds.features_raw[:, 0].max() - lo_raw
    assert blob["conditions"][0]["feature"] == "age"
    assert blob["conditions"][0]["lo"] == pytest.approx(lo_raw + 0.25 * span)
    assert blob["conditions"][0]["hi"] == pytest.approx(lo_raw + 0.75 * span)
    assert "age" in rule.describe(ds)
    assert HardRule().describe(ds) == "(whole population)"
    bare = rule.to_json()
    assert bare["conditions"][0] == {"feature": "0", "lo": 0.25, "hi": 0.75}

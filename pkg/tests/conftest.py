"""Shared builders for the test suite."""

import numpy as np
import pytest

from diffsub.data import from_arrays
from diffsub.objective import loss_and_grad
from diffsub.rules import SoftRule, membership_batch


def rand_dataset(rng, n=40, d=3, discrete=False, scale=True):
    """Random dataset with both groups guaranteed non-empty."""
    X = rng.uniform(0.0, 1.0, (n, d))
    a = rng.integers(0, 2, n)
    a[0], a[1] = 0, 1
    if discrete:
        y = rng.integers(0, 3, n).astype(float)
        kind = "discrete"
    else:
        beta = rng.uniform(-1.0, 1.0, d)
        y = X @ beta + 0.7 * a + rng.normal(0.0, 0.3, n)
        kind = "continuous"
    return from_arrays(X, a, y, target_kind=kind, scale=scale)


def rand_rule(rng, ds, t=None):
    """Random well-posed soft rule over the dataset's features.

    Weight parameters are kept away from the max(0, rho) kink so that
    finite differences of the analytic gradients are meaningful.
    """
    lo = rng.uniform(0.05, 0.45, ds.d)
    hi = rng.uniform(0.55, 0.95, ds.d)
    rho = rng.uniform(0.1, 1.0, ds.d)
    if t is None:
        t = float(rng.uniform(0.08, 0.3))
    std = ds.features.std(axis=0)
    t_scale = np.where(std > 1e-12, std, 1.0)
    return SoftRule(a=lo, b=hi, rho=rho, t=t, t_scale=t_scale)


def rel_err(analytic, fd):
    """Symmetric relative error, floored so exact zeros compare clean."""
    analytic = np.asarray(analytic, dtype=np.float64)
    fd = np.asarray(fd, dtype=np.float64)
    return np.abs(analytic - fd) / (np.abs(analytic) + np.abs(fd) + 1e-8)


def fd_membership(rule, X, eps=1e-6):
    """Central finite differences of memberships w.r.t. every rule parameter.

    Returns (n, d) arrays matching MembershipBatch's dm_da/dm_db/dm_drho.
    """
    out = {}
    for name in ("a", "b", "rho"):
        base = getattr(rule, name)
        grad = np.zeros((X.shape[0], rule.d))
        for j in range(rule.d):
            r_hi = rule.copy()
            r_lo = rule.copy()
            getattr(r_hi, name)[j] = base[j] + eps
            getattr(r_lo, name)[j] = base[j] - eps
            m_hi = membership_batch(r_hi, X).m
            m_lo = membership_batch(r_lo, X).m
            grad[:, j] = (m_hi - m_lo) / (2.0 * eps)
        out[name] = grad
    return out


def fd_loss(rule, ds, cfg, ctx, eps=1e-6):
    """Central finite differences of the loss w.r.t. every rule parameter."""
    out = {}
    for name in ("a", "b", "rho"):
        base = getattr(rule, name)
        grad = np.zeros(rule.d)
        for j in range(rule.d):
            r_hi = rule.copy()
            r_lo = rule.copy()
            getattr(r_hi, name)[j] = base[j] + eps
            getattr(r_lo, name)[j] = base[j] - eps
            l_hi = loss_and_grad(membership_batch(r_hi, ds.features), ds, cfg, ctx).loss
            l_lo = loss_and_grad(membership_batch(r_lo, ds.features), ds, cfg, ctx).loss
            grad[j] = (l_hi - l_lo) / (2.0 * eps)
        out[name] = grad
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)

import numpy as np
import pytest

from localbound.bootstrap import ResamplePlan, default_block_length, qr_boot_cov, resample_indices, taper_weights
from localbound.exceptions import InputError
from localbound.qr import QRDesign


@pytest.mark.parametrize("scheme,L", [("iid", 1), ("moving_block", 7), ("stationary", 7)])
def test_indices_in_range_and_length(scheme, L):
    plan = ResamplePlan(scheme, L, 10, 1)
    idx = resample_indices(plan, 103, 4)
    assert idx.shape == (103,)
    assert idx.min() >= 0 and idx.max() < 103


def test_replicates_reproducible_and_distinct():
    plan = ResamplePlan("stationary", 5, 10, 9)
    a = resample_indices(plan, 50, 2)
    np.testing.assert_array_equal(a, resample_indices(plan, 50, 2))
    assert not np.array_equal(a, resample_indices(plan, 50, 3))


def test_moving_block_contiguity():
    idx = resample_indices(ResamplePlan("moving_block", 10, 1, 0), 100, 0)
    steps = np.diff(idx.reshape(10, 10), axis=1) % 100
    assert np.all(steps == 1)


def test_moving_block_uniform_coverage():
    n, L = 40, 8
    plan = ResamplePlan("moving_block", L, 1, 5)
    counts = np.zeros(n)
    for r in range(4000):
        counts += np.bincount(resample_indices(plan, n, r), minlength=n)
    freq = counts / counts.sum()
    assert np.max(np.abs(freq * n - 1)) < 0.08


def test_stationary_mean_block_length():
    L = 6
    idx = resample_indices(ResamplePlan("stationary", L, 1, 2), 20000, 0)
    breaks = np.sum(np.diff(idx) % 20000 != 1)
    assert 20000 / (breaks + 1) == pytest.approx(L, rel=0.1)


def test_plan_validation():
    with pytest.raises(InputError):
        ResamplePlan("jackknife")
    with pytest.raises(InputError):
        ResamplePlan("iid", 0)
    with pytest.raises(InputError):
        ResamplePlan("stationary", 5, taper=0.2)
    with pytest.raises(InputError):
        resample_indices(ResamplePlan("moving_block", 20), 10, 0)


def test_taper_weights():
    assert taper_weights(ResamplePlan("moving_block", 10), 30) is None
    w = taper_weights(ResamplePlan("moving_block", 10, taper=0.25), 30)
    assert w.shape == (30,)
    assert w[:10].mean() == pytest.approx(1.0)
    assert w[0] < w[5]


def test_default_block_length():
    assert default_block_length(30) == 150


def test_boot_cov_iid_close_to_asymptotic(rng):
    n, tau = 1000, 0.5
    y = rng.standard_normal(n)
    cov = qr_boot_cov(QRDesign(y, np.empty((n, 0)), tau), ResamplePlan("iid", 1, 400, 11))
    # sd of the sample median: sqrt(tau(1-tau)/n)/phi(0)
    asym = np.sqrt(0.25 / n) / (1 / np.sqrt(2 * np.pi))
    assert np.sqrt(cov[0, 0]) == pytest.approx(asym, rel=0.2)


def test_boot_cov_independent_of_jobs(rng):
    n = 200
    z = rng.standard_normal(n)
    d = QRDesign(z + rng.standard_normal(n), z, 0.3)
    plan = ResamplePlan("moving_block", 10, 40, 8)
    np.testing.assert_array_equal(qr_boot_cov(d, plan, n_jobs=1), qr_boot_cov(d, plan, n_jobs=2))

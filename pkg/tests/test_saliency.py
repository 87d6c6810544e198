import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gammaincc

from ecgxai.convnet import NetConfig, init_net, predict
from ecgxai.evalmetrics import auroc
from ecgxai.exceptions import ShapeError
from ecgxai.saliency import chi2_survival, instance_saliency, occlude, roar_curve, saliency_map
from ecgxai.signal import make_dataset


def test_survival_matches_incomplete_gamma():
    z = np.linspace(-8, 8, 1601)
    np.testing.assert_allclose(chi2_survival(z), gammaincc(0.5, z * z / 2), atol=1e-9, rtol=0)
    assert chi2_survival(0.0) == 1.0


def test_survival_known_quantiles():
    assert chi2_survival(1.959963984540054) == pytest.approx(0.05, abs=1e-12)
    assert chi2_survival(np.sqrt(3.841458820694124)) == pytest.approx(0.05, abs=1e-12)


def test_identical_reconstruction_is_fully_salient():
    x = np.random.default_rng(0).normal(size=(2, 50))
    m = saliency_map(x, x)
    assert np.all(m.phi == 1.0)
    assert m.sigma_hat == 0.0


def test_single_spike_has_lowest_saliency():
    x = np.zeros((2, 100))
    rec = x.copy()
    rec[1, 40] = 5.0
    m = saliency_map(x, rec)
    assert np.unravel_index(np.argmin(m.phi), m.phi.shape) == (1, 40)
    assert np.all(m.phi[m.phi != m.phi[1, 40]] == 1.0)


def test_sigma_uses_pooled_n_minus_one():
    rng = np.random.default_rng(1)
    x, r = rng.normal(size=(3, 20)), rng.normal(size=(3, 20))
    m = saliency_map(x, r)
    assert m.sigma_hat == pytest.approx(np.sqrt(np.sum((x - r) ** 2) / (60 - 1)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_saliency_lead_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    x, r = rng.normal(size=(4, 30)), rng.normal(size=(4, 30))
    perm = rng.permutation(4)
    np.testing.assert_allclose(saliency_map(x[perm], r[perm]).phi, saliency_map(x, r).phi[perm])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100))
def test_saliency_in_unit_interval_and_scale_free(seed, c):
    rng = np.random.default_rng(seed)
    x, r = rng.normal(size=(2, 30)), rng.normal(size=(2, 30))
    phi = saliency_map(x, r).phi
    assert np.all((phi >= 0) & (phi <= 1))
    np.testing.assert_allclose(saliency_map(c * x, c * r).phi, phi, atol=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        saliency_map(np.zeros((2, 5)), np.zeros((2, 6)))


def test_occlude_counts_and_order():
    x = np.arange(1.0, 11.0).reshape(2, 5)
    phi = np.array([[0.1, 0.9, 0.5, 0.9, 0.2], [0.3, 0.0, 0.8, 0.4, 0.6]])
    out = occlude(x, phi, 0.3, "salient")
    # ceil(0.3 * 10) = 3: the two 0.9 entries (row-major order) then 0.8
    assert np.count_nonzero(out == 0) == 3
    assert out[0, 1] == out[0, 3] == out[1, 2] == 0
    assert np.array_equal(occlude(x, phi, 0.0), x)
    assert not np.any(occlude(x, phi, 1.0))


def test_occlude_random_deterministic():
    x = np.ones((2, 50))
    phi = np.zeros((2, 50))
    a = occlude(x, phi, 0.25, "random", seed=3)
    b = occlude(x, phi, 0.25, "random", seed=3)
    assert np.array_equal(a, b)
    assert np.count_nonzero(a == 0) == 25
    with pytest.raises(ValueError):
        occlude(x, phi, 1.5)
    with pytest.raises(ValueError):
        occlude(x, phi, 0.5, mode="edge")


def test_occlude_keeps_instance_type():
    inst = make_dataset(4, seed=0)[0]
    phi = np.random.default_rng(0).uniform(size=inst.values.shape)
    out = occlude(inst, phi, 0.5)
    assert out.id == inst.id
    assert np.count_nonzero(out.values == 0) >= inst.values.size // 2


def test_instance_saliency_and_roar_baseline():
    ds = make_dataset(12, seed=1, duration_s=4.0, sample_rate_hz=32)
    X, y = ds.arrays()
    net = init_net(NetConfig(4, 3, 2, 2, X.shape[2]), seed=0)
    m, rec = instance_saliency(net, X[0])
    assert m.phi.shape == X[0].shape == rec.shape
    rows = roar_curve(net, X, y, [0.0, 0.5])
    base = auroc(predict(net, X), y)
    assert rows[0]["auroc_salient"] == rows[0]["auroc_random"] == base
    assert len(rows) == 2

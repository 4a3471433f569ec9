import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tsi.checks import bss_mixture
from tsi.contrastive import smooth
from tsi.ica import (
    IndependentExtractor,
    amari_index,
    extract_independent,
    fastica_fit,
    fit_extractor,
    matched_correlation,
    negentropy,
    sym_decorrelate,
    train_autoencoder,
    whiten_apply,
    whiten_fit,
)

seeds = st.integers(0, 2**32 - 1)


def exactly_white(n, d, seed):
    Z = np.random.default_rng(seed).normal(size=(n, d))
    Z -= Z.mean(axis=0)
    L = np.linalg.cholesky(Z.T @ Z / n)
    return Z @ np.linalg.inv(L).T


def amari_loops(W, A):
    """Amari index written out with explicit sums over rows and columns."""
    P = np.abs(W @ A)
    n = P.shape[0]
    rows = sum(sum(P[i, j] for j in range(n)) / max(P[i, j] for j in range(n)) - 1 for i in range(n))
    cols = sum(sum(P[i, j] for i in range(n)) / max(P[i, j] for i in range(n)) - 1 for j in range(n))
    return (rows + cols) / (2 * n * (n - 1))


# autoencoder

def test_linear_autoencoder_reconstructs():
    X = np.random.default_rng(0).normal(size=(40, 3)) @ np.random.default_rng(1).normal(size=(3, 3))
    ae, _ = train_autoencoder(X, sparsity=0.0, seed=0, n_latent=3, hidden=3, steps=1500, lr=1e-2, linear=True)
    mse = float(np.mean((ae.decode(ae.encode(X)) - X) ** 2))
    # least squares through a rank-3 linear map reproduces X exactly
    assert mse < 1e-3


def test_heavy_sparsity_silences_latent():
    X = np.random.default_rng(2).normal(size=(50, 3))
    ae, _ = train_autoencoder(X, sparsity=1e6, seed=0, hidden=8, steps=4000, lr=1e-3)
    assert float(np.mean(np.abs(ae.encode(X)))) < 1e-3


def test_autoencoder_loss_smoothed_non_increasing():
    X = np.random.default_rng(3).normal(size=(200, 4))
    _, losses = train_autoencoder(X, sparsity=0.01, seed=0, steps=600)
    s = smooth(losses, 50)[50:]
    assert np.all(np.diff(s) <= 1e-12)


def test_autoencoder_is_deterministic():
    X = np.random.default_rng(4).normal(size=(30, 2))
    a, la = train_autoencoder(X, 0.1, seed=5, steps=50)
    b, lb = train_autoencoder(X, 0.1, seed=5, steps=50)
    assert la == lb and all(np.array_equal(a.weights[k], b.weights[k]) for k in a.weights)


@pytest.mark.parametrize("X", [np.zeros((1, 3)), np.array([[np.nan, 1.0], [0.0, 1.0]])])
def test_autoencoder_rejects_bad_input(X):
    with pytest.raises(ValueError):
        train_autoencoder(X)


def test_autoencoder_widths():
    ae, _ = train_autoencoder(np.random.default_rng(0).normal(size=(10, 4)), n_latent=2, steps=1)
    assert ae.encode(np.zeros((5, 4))).shape == (5, 2)
    assert ae.weights["dec.w1"].shape[0] == 2


# whitening

def test_white_input_gives_identity():
    Z = exactly_white(500, 4, 0)
    assert np.allclose(whiten_fit(Z).K, np.eye(4), atol=1e-6)


@settings(deadline=None, max_examples=40)
@given(st.integers(1, 7), st.integers(0, 40), seeds)
def test_whitened_covariance_is_identity(d, extra, seed):
    rng = np.random.default_rng(seed)
    n = d + 1 + extra * 10
    Z = rng.normal(size=(n, d)) @ rng.normal(size=(d, d)) + rng.normal(size=d) * 5
    Zw = whiten_apply(whiten_fit(Z), Z)
    C = Zw.T @ Zw / n
    assert np.max(np.abs(C - np.eye(C.shape[0]))) < 1e-8
    assert np.allclose(Zw.mean(axis=0), 0.0, atol=1e-8)


def test_zero_variance_column_dropped():
    Z = np.random.default_rng(0).normal(size=(100, 3))
    Z[:, 1] = 4.0
    assert whiten_fit(Z).n_components == 2


def test_constant_input_rejected():
    with pytest.raises(ValueError):
        whiten_fit(np.ones((10, 2)))


def test_too_few_rows_rejected():
    with pytest.raises(ValueError):
        whiten_fit(np.zeros((2, 2)))


@settings(deadline=None, max_examples=20)
@given(st.integers(2, 6), seeds)
def test_whitening_whitened_data_is_orthonormal(d, seed):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(300, d)) @ rng.normal(size=(d, d))
    Zw = whiten_apply(whiten_fit(Z), Z)
    K = whiten_fit(Zw).K
    assert np.allclose(K @ K.T, np.eye(len(K)), atol=1e-6)


# FastICA

def test_two_uniform_sources_recovered():
    rng = np.random.default_rng(7)
    S = rng.uniform(-1, 1, size=(2000, 2))
    A = rng.normal(size=(2, 2)) + 2 * np.eye(2)
    ex = fit_extractor(S @ A.T, seed=0)
    assert np.min(matched_correlation(extract_independent(S @ A.T, ex), S)) >= 0.95


@settings(deadline=None, max_examples=20)
@given(st.integers(2, 5), seeds)
def test_unmixing_is_orthonormal(d, seed):
    rng = np.random.default_rng(seed)
    Z = rng.laplace(size=(400, d)) @ rng.normal(size=(d, d))
    Zw = whiten_apply(whiten_fit(Z), Z)
    res = fastica_fit(Zw, seed=seed % 1000)
    assert np.allclose(res.W @ res.W.T, np.eye(len(res.W)), atol=1e-8)


def test_gaussian_sources_flagged():
    Z = np.random.default_rng(0).normal(size=(2000, 3))
    Zw = whiten_apply(whiten_fit(Z), Z)
    res = fastica_fit(Zw, seed=0)
    uniform = np.random.default_rng(0).uniform(-np.sqrt(3), np.sqrt(3), size=(2000, 1))
    assert (not res.converged) or np.max(res.nongaussianity) < 0.1 * negentropy(uniform)[0]


def test_sym_decorrelate_orthonormalizes():
    W = sym_decorrelate(np.random.default_rng(0).normal(size=(4, 4)))
    assert np.allclose(W @ W.T, np.eye(4), atol=1e-12)


def test_seeds_agree_up_to_permutation_and_sign():
    bundle, truth = bss_mixture(seed=2)
    outs = [extract_independent(bundle.values, fit_extractor(bundle.values, seed=s)) for s in (0, 1, 2)]
    for a, b in itertools.combinations(outs, 2):
        assert np.min(matched_correlation(a, b)) >= 0.999


def test_three_source_recovery():
    bundle, truth = bss_mixture(seed=0)
    ex = fit_extractor(bundle.values, seed=0)
    assert amari_index(ex.ica.unmixing @ ex.whitening.K, truth.mixing) <= 0.1
    assert np.min(matched_correlation(extract_independent(bundle.values, ex), truth.sources)) >= 0.95


# extraction and canonicalization

def test_extraction_shape_and_determinism():
    bundle, _ = bss_mixture(seed=1)
    ex = fit_extractor(bundle.values, seed=0)
    H = extract_independent(bundle.values[:16], ex)
    assert H.shape == (16, 3)
    assert np.array_equal(H, extract_independent(bundle.values[:16], ex))


def test_components_uncorrelated_on_training_data():
    bundle, _ = bss_mixture(seed=3)
    H = extract_independent(bundle.values, fit_extractor(bundle.values, seed=0))
    C = np.corrcoef(H.T)
    assert np.max(np.abs(C - np.eye(3))) < 1e-3


def test_canonical_order_and_signs():
    bundle, _ = bss_mixture(seed=4)
    H = extract_independent(bundle.values, fit_extractor(bundle.values, seed=0))
    kurt = np.abs(stats.kurtosis(H, axis=0))
    assert np.all(np.diff(kurt) <= 0)
    assert np.all(H[np.argmax(np.abs(H), axis=0), np.arange(3)] > 0)


def test_unfitted_extractor_rejected():
    with pytest.raises(ValueError):
        extract_independent(np.zeros((4, 2)), None)
    with pytest.raises(ValueError):
        extract_independent(np.zeros((4, 2)), IndependentExtractor(whitening=None, ica=None))


def test_autoencoder_latent_and_literal_modes():
    X = np.random.default_rng(0).laplace(size=(300, 3))
    ae, _ = train_autoencoder(X, 0.01, steps=20)
    latent = fit_extractor(X, ae, literal=False)
    literal = fit_extractor(X, ae, literal=True)
    assert np.allclose(latent.features(X), ae.encode(X))
    assert np.allclose(literal.features(X), ae.decode(ae.encode(X)))


# Amari index

def test_amari_inverse_is_zero():
    A = np.random.default_rng(0).normal(size=(3, 3))
    assert amari_index(np.linalg.inv(A), A) == pytest.approx(0.0, abs=1e-12)


def test_amari_scaled_permutation_is_zero():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    D, Pi = np.diag([2.0, -0.5, 3.0, 1.5]), np.eye(4)[[2, 0, 3, 1]]
    assert amari_index(D @ Pi @ np.linalg.inv(A), A) == pytest.approx(0.0, abs=1e-12)


@settings(deadline=None, max_examples=30)
@given(seeds)
def test_amari_matches_loop_formula(seed):
    rng = np.random.default_rng(seed)
    W, A = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    assert amari_index(W, A) == pytest.approx(amari_loops(W, A), abs=1e-12)
    assert 0.0 <= amari_index(W, A) <= 1.0


def test_amari_singular_mixing():
    with pytest.raises(ValueError):
        amari_index(np.eye(2), np.ones((2, 2)))

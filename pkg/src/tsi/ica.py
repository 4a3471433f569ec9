"""Independent components: sparse autoencoder, whitening and symmetric FastICA."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, stats

from tsi import tensor as T
from tsi.contrastive import Adam
from tsi.errors import DivergenceError

# ---------------------------------------------------------------------------
# sparse autoencoder

_AE_KEYS = ("enc.w1", "enc.b1", "enc.w2", "enc.b2", "dec.w1", "dec.b1", "dec.w2", "dec.b2")


@dataclass
class AutoencoderParams:
    """Weights of ``m -> hidden -> n_latent -> hidden -> m``.

    With ``linear=False`` the two encoder layers and the first decoder layer
    use tanh; the decoder output layer is always linear.
    """

    weights: dict
    sparsity: float = 0.0
    linear: bool = False

    @property
    def n_latent(self) -> int:
        return np.shape(T.value_of(self.weights["enc.w2"]))[1]

    def on_tape(self, tape: T.Tape) -> AutoencoderParams:
        w = {k: tape.param(v, name=k) for k, v in self.weights.items()}
        return AutoencoderParams(w, self.sparsity, self.linear)

    def _act(self, x):
        return x if self.linear else T.tanh(x)

    def encode(self, X):
        w = self.weights
        h = self._act(T.add(T.matmul(X, w["enc.w1"]), w["enc.b1"]))
        return self._act(T.add(T.matmul(h, w["enc.w2"]), w["enc.b2"]))

    def decode(self, Z):
        w = self.weights
        h = self._act(T.add(T.matmul(Z, w["dec.w1"]), w["dec.b1"]))
        return T.add(T.matmul(h, w["dec.w2"]), w["dec.b2"])

    def loss(self, X):
        """Reconstruction MSE plus ``sparsity * mean(|latent|)``."""
        Z = self.encode(X)
        err = T.sub(self.decode(Z), X)
        mse = T.mean(T.mul(err, err))
        n = T.value_of(Z).size
        return T.add(mse, T.mul(T.l1_norm(Z), self.sparsity / n))


def init_autoencoder(n_features: int, n_latent: int, hidden: int, rng: np.random.Generator,
                     sparsity: float = 0.0, linear: bool = False) -> AutoencoderParams:
    dims = [(n_features, hidden), (hidden, n_latent), (n_latent, hidden), (hidden, n_features)]
    weights = {}
    for (a, b), wk, bk in zip(dims, _AE_KEYS[0::2], _AE_KEYS[1::2]):
        weights[wk] = rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b))
        weights[bk] = np.zeros(b)
    return AutoencoderParams(weights, sparsity, linear)


def train_autoencoder(X, sparsity: float = 0.0, seed: int = 0, n_latent: int | None = None,
                      hidden: int = 32, steps: int = 1000, lr: float = 3e-3,
                      linear: bool = False) -> tuple[AutoencoderParams, list[float]]:
    """Full-batch Adam on reconstruction error plus L1 sparsity of the latent code."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two rows of shape [N, m]")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    if sparsity < 0:
        raise ValueError("sparsity weight must be non-negative")
    m = X.shape[1]
    ae = init_autoencoder(m, n_latent or m, hidden, np.random.default_rng([seed, 7]), sparsity, linear)
    opt = Adam(lr=lr)
    losses = []
    for step in range(steps):
        tape = T.Tape()
        loss = ae.on_tape(tape).loss(X)
        value = float(loss.value)
        if not np.isfinite(value):
            raise DivergenceError(f"autoencoder loss became non-finite at step {step}")
        losses.append(value)
        ae = AutoencoderParams(opt.step(ae.weights, T.backward(loss)), sparsity, linear)
    return ae, losses


# ---------------------------------------------------------------------------
# whitening


@dataclass
class WhiteningModel:
    mean: np.ndarray
    K: np.ndarray

    @property
    def n_components(self) -> int:
        return self.K.shape[0]


def _canonical_basis(E: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Deterministic orthonormal basis of span(E): Gram-Schmidt on the projected unit axes."""
    proj = E @ E.T
    basis = []
    for col in proj.T:
        v = col.copy()
        for b in basis:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            basis.append(v / norm)
        if len(basis) == E.shape[1]:
            break
    return np.stack(basis, axis=1)


def whiten_fit(Z, rel_tol: float = 1e-8, degenerate_tol: float = 1e-9) -> WhiteningModel:
    """PCA whitening ``K = diag(lam)^-1/2 E^T`` on the biased (1/N) sample covariance.

    Eigenvalues below ``rel_tol`` times the largest are dropped. Eigenvectors
    are ordered by decreasing eigenvalue; inside a cluster of (near-)equal
    eigenvalues the basis is canonicalized so the result does not depend on
    LAPACK's arbitrary choice. Each eigenvector's largest-magnitude entry is
    positive.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    if n <= d:
        raise ValueError(f"need more rows than columns to whiten, got {Z.shape}")
    mean = Z.mean(axis=0)
    C = (Z - mean).T @ (Z - mean) / n
    lam, E = np.linalg.eigh(C)
    order = np.argsort(-lam, kind="stable")
    lam, E = lam[order], E[:, order]
    if lam[0] <= 0:
        raise ValueError("input has no variance in any direction")
    keep = lam > rel_tol * lam[0]
    lam, E = lam[keep], E[:, keep]

    start = 0
    while start < len(lam):
        stop = start + 1
        while stop < len(lam) and lam[start] - lam[stop] <= degenerate_tol * lam[0]:
            stop += 1
        if stop - start > 1:
            E[:, start:stop] = _canonical_basis(E[:, start:stop])
        start = stop
    big = np.argmax(np.abs(E), axis=0)
    E = E * np.sign(E[big, np.arange(E.shape[1])])
    return WhiteningModel(mean=mean, K=E.T / np.sqrt(lam)[:, None])


def whiten_apply(model: WhiteningModel, Z) -> np.ndarray:
    return (np.asarray(Z, dtype=np.float64) - model.mean) @ model.K.T


# ---------------------------------------------------------------------------
# FastICA


@dataclass
class FastICAResult:
    W: np.ndarray
    converged: bool
    n_iter: int
    nongaussianity: np.ndarray


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - np.log(2.0)


@functools.cache
def _gauss_logcosh() -> float:
    """E[log cosh(v)] for a standard normal v."""
    f = lambda x: _logcosh(x) * np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi)
    return integrate.quad(f, -40.0, 40.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


def negentropy(Y) -> np.ndarray:
    """Log-cosh negentropy approximation per column of unit-variance ``Y``."""
    Y = np.asarray(Y, dtype=np.float64)
    return (np.mean(_logcosh(Y), axis=0) - _gauss_logcosh()) ** 2


def sym_decorrelate(W: np.ndarray) -> np.ndarray:
    """``(W W^T)^(-1/2) W``."""
    s, u = np.linalg.eigh(W @ W.T)
    return (u / np.sqrt(s)) @ u.T @ W


def fastica_fit(Zw, seed: int = 0, tol: float = 1e-4, max_iter: int = 200) -> FastICAResult:
    """Symmetric fixed-point FastICA with the tanh contrast on whitened rows ``Zw``.

    Non-convergence is reported through ``converged=False`` with the last
    iterate, not raised.
    """
    Zw = np.asarray(Zw, dtype=np.float64)
    n, d = Zw.shape
    rng = np.random.default_rng(seed)
    W, _ = np.linalg.qr(rng.normal(size=(d, d)))
    W = sym_decorrelate(W)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        U = Zw @ W.T
        G = np.tanh(U)
        Gp = 1.0 - G * G
        W_new = sym_decorrelate(G.T @ Zw / n - Gp.mean(axis=0)[:, None] * W)
        gap = np.max(np.abs(1.0 - np.abs(np.einsum("ij,ij->i", W_new, W))))
        W = W_new
        if gap < tol:
            converged = True
            break
    return FastICAResult(W=W, converged=converged, n_iter=it, nongaussianity=negentropy(Zw @ W.T))


# ---------------------------------------------------------------------------
# fitted extractor


@dataclass
class IcaModel:
    """Unmixing ``W`` plus the canonical component order and signs."""

    W: np.ndarray
    order: np.ndarray
    signs: np.ndarray

    @property
    def unmixing(self) -> np.ndarray:
        return self.signs[:, None] * self.W[self.order]

    def transform(self, Zw) -> np.ndarray:
        return np.asarray(Zw) @ self.unmixing.T


def canonicalize(W: np.ndarray, Zw) -> IcaModel:
    """Sort by decreasing |excess kurtosis|; flip so the peak-magnitude sample is positive."""
    S = np.asarray(Zw) @ W.T
    kurt = stats.kurtosis(S, axis=0, fisher=True, bias=True)
    order = np.argsort(-np.abs(kurt), kind="stable")
    S = S[:, order]
    peak = S[np.argmax(np.abs(S), axis=0), np.arange(S.shape[1])]
    signs = np.where(peak < 0, -1.0, 1.0)
    return IcaModel(W=W, order=order, signs=signs)


def _ica_input(X, autoencoder, literal):
    X = np.asarray(X, dtype=np.float64)
    if autoencoder is None:
        return X
    Z = autoencoder.encode(X)
    return autoencoder.decode(Z) if literal else Z


@dataclass
class IndependentExtractor:
    """Everything needed to map observations to independent components."""

    whitening: WhiteningModel
    ica: IcaModel
    autoencoder: AutoencoderParams | None = None
    literal: bool = False
    converged: bool = True

    def features(self, X) -> np.ndarray:
        return _ica_input(X, self.autoencoder, self.literal)

    @property
    def n_components(self) -> int:
        return self.whitening.n_components


def fit_extractor(X, autoencoder: AutoencoderParams | None = None, literal: bool = False,
                  seed: int = 0, tol: float = 1e-4, max_iter: int = 200) -> IndependentExtractor:
    """Whiten the autoencoder latents (or reconstructions if ``literal``) and run FastICA.

    Without an autoencoder the raw rows are used, which is the plain linear
    ICA pipeline.
    """
    Z = _ica_input(X, autoencoder, literal)
    white = whiten_fit(Z)
    Zw = whiten_apply(white, Z)
    res = fastica_fit(Zw, seed=seed, tol=tol, max_iter=max_iter)
    return IndependentExtractor(white, canonicalize(res.W, Zw), autoencoder, literal, res.converged)


def extract_independent(X, extractor: IndependentExtractor | None) -> np.ndarray:
    """Per-timestep independent components ``[..., h, n_w]`` of ``X`` (``[..., h, m]``)."""
    if extractor is None or extractor.ica is None:
        raise ValueError("independent-component extractor has not been fitted")
    Zw = whiten_apply(extractor.whitening, extractor.features(X))
    return extractor.ica.transform(Zw)


# ---------------------------------------------------------------------------
# evaluation helpers


def amari_index(W, A) -> float:
    """Amari performance index of ``P = W A``, normalized to [0, 1]."""
    W = np.asarray(W, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if W.ndim != 2 or A.ndim != 2 or W.shape[1] != A.shape[0] or W.shape[0] != A.shape[1]:
        raise ValueError(f"incompatible shapes {W.shape} and {A.shape}")
    if A.shape[0] == A.shape[1] and np.linalg.matrix_rank(A) < A.shape[0]:
        raise ValueError("mixing matrix is singular")
    P = np.abs(W @ A)
    n = P.shape[0]
    if n == 1:
        return 0.0
    rows = np.sum(P.sum(axis=1) / P.max(axis=1) - 1.0)
    cols = np.sum(P.sum(axis=0) / P.max(axis=0) - 1.0)
    return float((rows + cols) / (2 * n * (n - 1)))


def matched_correlation(S_est, S_true) -> np.ndarray:
    """Absolute correlations of estimated and true sources after optimal matching."""
    S_est = np.asarray(S_est, dtype=np.float64)
    S_true = np.asarray(S_true, dtype=np.float64)
    k = S_true.shape[1]
    C = np.abs(np.corrcoef(S_est.T, S_true.T)[: S_est.shape[1], S_est.shape[1]:])
    r, c = optimize.linear_sum_assignment(-C)
    out = np.zeros(k)
    out[c] = C[r, c]
    return out

"""Fast invariant battery behind ``tsi check``.

Each check returns ``(passed, detail)``. The FFT and gradient checks look up
primitives on the :mod:`tsi.tensor` module at call time, so a patched
primitive is what gets checked.
"""

from __future__ import annotations

import time
from typing import Callable, Mapping

import numpy as np

from tsi import tensor as T
from tsi.contrastive import _embed, infonce
from tsi.data import SyntheticSpec, gen_synthetic
from tsi.encoders import EncoderConfig, EncoderParams, encode_trend, init_encoder
from tsi.forecaster import fit_ridge
from tsi.ica import (
    AutoencoderParams,
    amari_index,
    extract_independent,
    fit_extractor,
    init_autoencoder,
    matched_correlation,
    whiten_apply,
    whiten_fit,
)

FD_STEP = 1e-5
GRAD_TOL = 1e-4


# ---------------------------------------------------------------------------
# finite differences


def _real(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


def gradient_error(f: Callable[[Mapping[str, object]], object], params: Mapping[str, np.ndarray],
                   step: float = FD_STEP) -> float:
    """Worst relative error between tape gradients and central differences.

    ``f`` maps a dict of arrays (or Vars) to a scalar. Complex entries are
    perturbed in their real and imaginary parts separately.
    """
    params = {k: np.array(v, dtype=np.complex128 if np.iscomplexobj(v) else np.float64) for k, v in params.items()}
    tape = T.Tape()
    grads = T.backward(f({k: tape.param(v, name=k) for k, v in params.items()}), verify=True)
    worst = 0.0
    for name, value in params.items():
        flat = _real(value).ravel()
        fd = np.empty(flat.size)
        for i in range(flat.size):
            trial = {k: v.copy() for k, v in params.items()}
            rv = _real(trial[name]).reshape(-1)
            rv[i] = flat[i] + step
            up = float(T.value_of(f(trial)))
            rv[i] = flat[i] - step
            down = float(T.value_of(f(trial)))
            fd[i] = (up - down) / (2 * step)
        g = _real(np.ascontiguousarray(grads[name])).ravel()
        denom = max(np.linalg.norm(fd), np.linalg.norm(g), 1e-8)
        worst = max(worst, float(np.linalg.norm(fd - g) / denom))
    return worst


def _tiny_encoder(rng):
    cfg = EncoderConfig(n_features=2, d_hidden=3, d_trend=2, d_seasonal=2, depth=2, window=8)
    return cfg, init_encoder(cfg, rng)


def gradient_cases(rng: np.random.Generator) -> list[tuple[str, Callable, dict]]:
    """Named scalar functions with random inputs covering every primitive and both losses."""
    n = rng.normal
    r3 = n(size=(2, 7, 3))
    r8 = n(size=(2, 8, 2))
    cases = [
        ("add", lambda p: T.sum(T.mul(T.add(p["a"], p["b"]), r3)), {"a": n(size=(2, 7, 3)), "b": n(size=3)}),
        ("sub", lambda p: T.sum(T.mul(T.sub(p["a"], p["b"]), r3)), {"a": n(size=(2, 7, 3)), "b": n(size=(7, 3))}),
        ("mul", lambda p: T.sum(T.mul(T.mul(p["a"], p["b"]), r3)), {"a": n(size=(2, 7, 3)), "b": n(size=(2, 7, 3))}),
        ("div", lambda p: T.sum(T.mul(T.div(p["a"], p["b"]), r3)),
         {"a": n(size=(2, 7, 3)), "b": rng.uniform(1.0, 2.0, size=3)}),
        ("matmul", lambda p: T.sum(T.mul(T.matmul(p["x"], p["w"]), r3)), {"x": n(size=(2, 7, 4)), "w": n(size=(4, 3))}),
        ("tanh", lambda p: T.sum(T.mul(T.tanh(p["x"]), r3)), {"x": n(size=(2, 7, 3))}),
        ("sum", lambda p: T.sum(T.mul(T.sum(p["x"], axis=1), r3[:, 0])), {"x": n(size=(2, 7, 3))}),
        ("mean", lambda p: T.mean(T.mul(p["x"], p["x"])), {"x": n(size=(2, 7, 3))}),
        ("avg_pool_time", lambda p: T.sum(T.mul(T.avg_pool_time(p["x"]), r3[:, 0])), {"x": n(size=(2, 7, 3))}),
        ("log_softmax", lambda p: T.sum(T.mul(T.log_softmax(p["x"]), r3)), {"x": n(size=(2, 7, 3))}),
        ("l1_norm", lambda p: T.l1_norm(p["x"]), {"x": n(size=(2, 7, 3))}),
        ("l2_norm", lambda p: T.sum(T.mul(T.l2_norm(p["x"]), r3[..., :1])), {"x": n(size=(2, 7, 3))}),
        ("l2_normalize", lambda p: T.sum(T.mul(T.l2_normalize(p["x"]), r3)), {"x": n(size=(2, 7, 3))}),
        ("concat", lambda p: T.sum(T.mul(T.concat(p["a"], p["b"], axis=-1), r3)),
         {"a": n(size=(2, 7, 1)), "b": n(size=(2, 7, 2))}),
        ("select_time", lambda p: T.sum(T.mul(T.select_time(p["x"], np.array([3, 6])), r3[:, 0])),
         {"x": n(size=(2, 7, 3))}),
        ("conv1d_causal", lambda p: T.sum(T.mul(T.conv1d_causal(p["x"], p["k"], dilation=2), r3)),
         {"x": n(size=(2, 7, 4)), "k": n(size=(2, 4, 3))}),
        ("rfft_irfft_odd", lambda p: T.sum(T.mul(T.irfft(T.mul(T.rfft(p["x"]), T.rfft(p["x"])), 7), r3)),
         {"x": n(size=(2, 7, 3))}),
        ("rfft_irfft_even", lambda p: T.sum(T.mul(T.irfft(T.mul(T.rfft(p["x"]), 1.5), 8), r8)),
         {"x": n(size=(2, 8, 2))}),
        ("complex_linear", lambda p: T.sum(T.mul(T.irfft(T.complex_linear(p["q"], p["P"], p["B"]), 8), r8)),
         {"q": n(size=(2, 5, 3)) + 1j * n(size=(2, 5, 3)), "P": n(size=(5, 3, 2)) + 1j * n(size=(5, 3, 2)),
          "B": n(size=(5, 2)) + 1j * n(size=(5, 2))}),
    ]

    cfg, enc = _tiny_encoder(rng)
    views = n(size=(2, 3, cfg.window, cfg.n_features))
    times = np.array([0, 5, 7])
    keys = n(size=(3, cfg.d_ts))
    keys /= np.linalg.norm(keys, axis=-1, keepdims=True)
    queue = n(size=(4, cfg.d_ts))
    queue /= np.linalg.norm(queue, axis=-1, keepdims=True)

    def contrastive(p):
        return infonce(_embed(EncoderParams.from_dict(p), views[0], times), keys, queue, 0.5)

    cases.append(("encoder_contrastive_loss", contrastive, enc.to_dict()))

    ae = init_autoencoder(3, 2, 4, rng, sparsity=0.1)
    X = n(size=(10, 3))

    def ae_loss(p):
        return AutoencoderParams(p, ae.sparsity, ae.linear).loss(X)

    cases.append(("autoencoder_loss", ae_loss, ae.weights))
    return cases


# ---------------------------------------------------------------------------
# individual checks


def check_gradients(seed: int = 0, repeats: int = 1):
    rng = np.random.default_rng(seed)
    worst, count, bad = 0.0, 0, []
    for _ in range(repeats):
        for name, f, params in gradient_cases(rng):
            err = gradient_error(f, params)
            count += 1
            worst = max(worst, err)
            if not err < GRAD_TOL:
                bad.append(name)
    detail = f"{count} instances, worst relative error {worst:.2e}"
    if bad:
        detail += ", failing: " + ", ".join(sorted(set(bad)))
    return not bad, detail


def dft_oracle(x: np.ndarray) -> np.ndarray:
    """Non-negative-frequency half of the DFT along axis -2 by explicit summation."""
    n = x.shape[-2]
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    return np.exp(-2j * np.pi * k * t / n) @ x


def check_fft(lengths=(8, 9, 16, 31, 64, 100, 128, 255, 256, 512, 1000, 1024), seed: int = 0):
    rng = np.random.default_rng(seed)
    worst_rt = worst_pv = worst_dft = 0.0
    for n in lengths:
        x = rng.normal(size=(n, 3))
        X = T.rfft(x)
        worst_rt = max(worst_rt, float(np.max(np.abs(T.irfft(X, n) - x))))
        c = np.full(X.shape[0], 2.0)
        c[0] = 1.0
        if n % 2 == 0:
            c[-1] = 1.0
        energy = np.sum(x * x, axis=0)
        spectral = np.sum(c[:, None] * np.abs(X) ** 2, axis=0) / n
        worst_pv = max(worst_pv, float(np.max(np.abs(energy - spectral) / energy)))
        if n <= 256:
            worst_dft = max(worst_dft, float(np.max(np.abs(X - dft_oracle(x))) / np.sqrt(n)))
    ok = worst_rt < 1e-10 and worst_pv < 1e-8 and worst_dft < 1e-8
    return ok, f"roundtrip {worst_rt:.1e}, Parseval {worst_pv:.1e}, DFT oracle {worst_dft:.1e}"


def check_causality(draws: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    for i in range(draws):
        h, d_h, d_tr, depth = int(rng.integers(8, 64)), int(rng.integers(1, 6)), int(rng.integers(1, 6)), int(rng.integers(0, 6))
        kernels = [rng.normal(size=(2, d_h, d_tr)) for _ in range(depth + 1)]
        biases = [rng.normal(size=d_tr) for _ in range(depth + 1)]
        G = rng.normal(size=(h, d_h))
        t = int(rng.integers(0, h))
        G2 = G.copy()
        G2[t] += rng.normal(size=d_h)
        a, b = encode_trend(G, kernels, biases), encode_trend(G2, kernels, biases)
        if not np.array_equal(a[:t], b[:t]):
            return False, f"draw {i}: output changed before the perturbation at t={t}"
    return True, f"{draws} parameter draws, zero difference before the perturbation"


def check_whitening(datasets: int = 20, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(datasets):
        n_i = int(rng.integers(2, 8))
        Z = rng.normal(size=(int(rng.integers(50, 500)), n_i)) @ rng.normal(size=(n_i, n_i)) + rng.normal(size=n_i)
        Zw = whiten_apply(whiten_fit(Z), Z)
        C = np.cov(Zw, rowvar=False, bias=True)
        worst = max(worst, float(np.max(np.abs(C - np.eye(C.shape[0])))))
    return worst < 1e-8, f"{datasets} datasets, max |cov - I| {worst:.1e}"


def normal_equations(H, Y, alpha):
    """Dense reference: solve the bias-augmented normal equations directly."""
    Z = np.hstack([H, np.ones((H.shape[0], 1))])
    J = np.eye(Z.shape[1])
    J[-1, -1] = 0.0
    return np.linalg.solve(Z.T @ Z + alpha * J, Z.T @ Y)


def check_ridge(systems: int = 100, seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(systems):
        n, d, out = int(rng.integers(3, 30)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
        H, Y = rng.normal(size=(n, d)), rng.normal(size=(n, out))
        alpha = float(rng.choice([0.0, 0.1, 1.0, 10.0])) if n > d else float(rng.uniform(0.1, 10))
        W = fit_ridge(H, Y, alpha).weights
        worst = max(worst, float(np.max(np.abs(W - normal_equations(H, Y, alpha)))))
    H = rng.normal(size=(6, 5))
    Y = rng.normal(size=(6, 2))
    model = fit_ridge(H, Y, 0.0)
    interp = float(np.max(np.abs(H @ model.coef + model.bias - Y)))
    norms = [np.linalg.norm(fit_ridge(H, Y, a).coef) for a in (0.0, 0.1, 1.0, 10.0, 100.0, 1e4)]
    monotone = all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
    ok = worst < 1e-6 and interp < 1e-8 and monotone
    return ok, f"{systems} systems, max deviation {worst:.1e}, interpolation {interp:.1e}, monotone {monotone}"


def bss_mixture(seed: int = 0, length: int = 2000):
    """Three non-Gaussian sources, linearly mixed, with no trend, season or noise."""
    spec = SyntheticSpec(length=length, sources=("uniform", "laplace", "sinusoid"), trend_slopes=(0.0, 0.0, 0.0),
                         periods=(), amplitudes=(), nonlinearity="identity", noise=0.0, seed=seed)
    return gen_synthetic(spec)


def check_ica(seed: int = 0):
    start = time.perf_counter()
    bundle, truth = bss_mixture(seed)
    ex = fit_extractor(bundle.values, seed=seed)
    W_eff = ex.ica.unmixing @ ex.whitening.K
    amari = amari_index(W_eff, truth.mixing)
    corr = float(np.min(matched_correlation(extract_independent(bundle.values, ex), truth.sources)))
    elapsed = time.perf_counter() - start
    ok = amari <= 0.1 and corr >= 0.95 and elapsed < 5.0
    return ok, f"Amari {amari:.4f}, min matched correlation {corr:.4f}, {elapsed:.2f}s"


def check_width(seed: int = 0):
    from tsi.pipeline import TSIModel, represent

    rng = np.random.default_rng(seed)
    X = rng.normal(size=(300, 3))
    ex = fit_extractor(X, seed=seed)
    for d_tr, d_s, h in ((1, 1, 8), (4, 3, 16), (8, 8, 33), (16, 5, 64)):
        cfg = EncoderConfig(3, d_hidden=4, d_trend=d_tr, d_seasonal=d_s, depth=3, window=h)
        model = TSIModel(init_encoder(cfg, rng), ex, h)
        H = represent(model, X[:h])
        if H.shape != (h, d_tr + d_s + ex.n_components):
            return False, f"d_tr={d_tr}, d_s={d_s}: got width {H.shape[1]}"
    return True, f"4 configurations, width = d_tr + d_s + n_w, n_w = {ex.n_components}"


CHECKS = (
    ("gradients", check_gradients),
    ("fft_roundtrip", check_fft),
    ("causality", check_causality),
    ("whitening", check_whitening),
    ("ridge_oracle", check_ridge),
    ("ica_recovery", check_ica),
    ("representation_width", check_width),
)


def run_checks(emit: Callable[[str], None] = print) -> bool:
    """Run every check once, emitting one ``PASS``/``FAIL`` line each."""
    all_ok = True
    for name, fn in CHECKS:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= bool(ok)
        emit(f"{'PASS' if ok else 'FAIL'} {name}: {detail} ({time.perf_counter() - start:.1f}s)")
    return all_ok

"""Momentum-contrast training of the trend and seasonal encoders."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from tsi import tensor as T
from tsi.encoders import EncoderConfig, EncoderParams, encode_ts, init_encoder
from tsi.errors import DivergenceError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentConfig:
    p_apply: float = 0.5
    scale_sigma: float = 0.5
    shift_sigma: float = 0.5
    jitter_sigma: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p_apply <= 1.0:
            raise ValueError("p_apply must lie in [0, 1]")
        if min(self.scale_sigma, self.shift_sigma, self.jitter_sigma) < 0:
            raise ValueError("augmentation sigmas must be non-negative")


def scale(window: np.ndarray, s: float) -> np.ndarray:
    return window * s


def shift(window: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    return window + offsets


def jitter(window: np.ndarray, noise: np.ndarray) -> np.ndarray:
    return window + noise


def augment(window: np.ndarray, cfg: AugmentConfig, rng) -> np.ndarray:
    """Scale, shift and jitter a ``[h, m]`` window, each with probability ``cfg.p_apply``.

    The three coin flips are drawn first, then the magnitudes of the branches
    that fire, in the order scale, shift, jitter.
    """
    coins = rng.random(3) < cfg.p_apply
    out = np.array(window, dtype=np.float64, copy=True)
    if coins[0]:
        out = scale(out, rng.normal(1.0, cfg.scale_sigma))
    if coins[1]:
        out = shift(out, rng.normal(0.0, cfg.shift_sigma, size=out.shape[-1]))
    if coins[2]:
        out = jitter(out, rng.normal(0.0, cfg.jitter_sigma, size=out.shape))
    return out


def infonce(q, k_pos, queue, tau: float):
    """Mean InfoNCE loss of queries against their positive keys and a negative queue.

    ``q`` and ``k_pos`` are unit vectors (``[d]`` or ``[B, d]``), ``queue`` is
    ``[K, d]``. Only ``q`` may be a tape Var.
    """
    if tau <= 0:
        raise ValueError("temperature must be positive")
    qv = np.atleast_2d(T.value_of(q))
    k_pos = np.atleast_2d(np.asarray(k_pos, dtype=np.float64))
    queue = np.asarray(queue, dtype=np.float64)
    for name, arr in (("q", qv), ("k_pos", k_pos), ("queue", queue)):
        norms = np.linalg.norm(arr, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError(f"{name} must contain unit vectors")
    if T.value_of(q).ndim == 1:
        q = T.mul(q, np.ones((1, 1)))
    pos = T.sum(T.mul(q, k_pos), axis=-1, keepdims=True)
    neg = T.matmul(q, queue.T)
    logp = T.log_softmax(T.mul(T.concat(pos, neg, axis=-1), 1.0 / tau))
    onehot = np.zeros(T.value_of(logp).shape)
    onehot[:, 0] = -1.0 / onehot.shape[0]
    return T.sum(T.mul(logp, onehot))


def momentum_update(theta_q: Mapping[str, np.ndarray], theta_k: Mapping[str, np.ndarray], mu: float):
    """Exponential moving average ``mu * theta_k + (1 - mu) * theta_q``, key by key."""
    if theta_q.keys() != theta_k.keys():
        raise ValueError("parameter sets differ")
    out = {}
    for name, k in theta_k.items():
        q = theta_q[name]
        if np.shape(q) != np.shape(k):
            raise ValueError(f"shape mismatch for {name}: {np.shape(q)} vs {np.shape(k)}")
        out[name] = mu * k + (1.0 - mu) * q
    return out


class KeyQueue:
    """Fixed-size FIFO ring buffer of unit-norm keys."""

    def __init__(self, keys: np.ndarray):
        self.keys = np.array(keys, dtype=np.float64, copy=True)
        self.ptr = 0

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    def enqueue(self, new_keys: np.ndarray) -> None:
        for row in np.atleast_2d(new_keys):
            self.keys[self.ptr] = row
            self.ptr = (self.ptr + 1) % self.size


@dataclass
class Adam:
    """Adaptive-moment optimizer over a dict of real or complex arrays."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict:
        self.step_count += 1
        t = self.step_count
        out = {}
        for name, p in params.items():
            p = np.array(p, copy=True)
            g = np.ascontiguousarray(grads[name]).astype(p.dtype, copy=False)
            pr, gr = _real_view(p), _real_view(g)
            m = self.m.setdefault(name, np.zeros_like(pr))
            v = self.v.setdefault(name, np.zeros_like(pr))
            m *= self.beta1
            m += (1 - self.beta1) * gr
            v *= self.beta2
            v += (1 - self.beta2) * gr * gr
            mhat = m / (1 - self.beta1**t)
            vhat = v / (1 - self.beta2**t)
            pr -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
            out[name] = p
        return out


def _real_view(a: np.ndarray) -> np.ndarray:
    return a.view(np.float64) if np.iscomplexobj(a) else a


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch_size: int = 8
    temperature: float = 0.07
    momentum: float = 0.999
    queue_size: int = 256
    lr: float = 1e-3
    augment: AugmentConfig = AugmentConfig()


@dataclass
class TrainResult:
    params: EncoderParams
    key_params: EncoderParams
    losses: list[float]
    queue: KeyQueue


def _stream(seed: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([seed, *counters])


def _embed(params, windows, times):
    H_tr, H_s = encode_ts(windows, params)
    z = T.concat(T.select_time(H_tr, times), T.select_time(H_s, times), axis=-1)
    return T.l2_normalize(z)


_QUEUE_TAG = 1
_BATCH_TAG = 2
_VIEW_TAG = 3


def contrastive_loss(params: EncoderParams, key_params: EncoderParams, windows, cfg: TrainConfig,
                     queue: np.ndarray, seed: int, step: int, indices: np.ndarray, times: np.ndarray):
    """Record one step's loss on a fresh tape; returns ``(loss Var, unit keys)``."""
    view1 = np.stack([augment(windows[i], cfg.augment, _stream(seed, _VIEW_TAG, step, b, 0))
                      for b, i in enumerate(indices)])
    view2 = np.stack([augment(windows[i], cfg.augment, _stream(seed, _VIEW_TAG, step, b, 1))
                      for b, i in enumerate(indices)])
    keys = _embed(key_params, view2, times)
    tape = T.Tape()
    q = _embed(params.on_tape(tape), view1, times)
    return infonce(q, keys, queue, cfg.temperature), keys


def train_representation(
    windows: np.ndarray,
    enc_cfg: EncoderConfig,
    cfg: TrainConfig = TrainConfig(),
    seed: int = 0,
    init: EncoderParams | None = None,
    on_step: Callable[[int, EncoderParams, EncoderParams, KeyQueue], None] | None = None,
) -> TrainResult:
    """Train backbone, trend and seasonal parameters with momentum contrast.

    ``windows`` is ``[N, h, m]``. Each step draws a batch of windows, two
    augmented views each, and one timestamp per window; the query encoder sees
    view 1, the momentum encoder view 2. The queue starts filled with keys of
    the initial momentum encoder on augmented training windows.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise ValueError("need at least one training window of shape [h, m]")
    n, h, _ = windows.shape
    if h != enc_cfg.window:
        raise ValueError(f"windows have length {h}, encoder expects {enc_cfg.window}")
    params = init if init is not None else init_encoder(enc_cfg, _stream(seed, 0))
    key_params = params.copy()

    rng = _stream(seed, _QUEUE_TAG)
    idx = rng.integers(0, n, size=cfg.queue_size)
    times = rng.integers(0, h, size=cfg.queue_size)
    views = np.stack([augment(windows[i], cfg.augment, rng) for i in idx])
    queue = KeyQueue(_embed(key_params, views, times))

    opt = Adam(lr=cfg.lr)
    losses = []
    for step in range(cfg.steps):
        brng = _stream(seed, _BATCH_TAG, step)
        indices = brng.integers(0, n, size=cfg.batch_size)
        ts = brng.integers(0, h, size=cfg.batch_size)
        loss, keys = contrastive_loss(params, key_params, windows, cfg, queue.keys, seed, step, indices, ts)
        value = float(loss.value)
        if not np.isfinite(value):
            raise DivergenceError(f"contrastive loss became non-finite at step {step}")
        losses.append(value)
        grads = T.backward(loss)
        params = EncoderParams.from_dict(opt.step(params.to_dict(), grads))
        key_params = EncoderParams.from_dict(
            momentum_update(params.to_dict(), key_params.to_dict(), cfg.momentum)
        )
        queue.enqueue(keys)
        if on_step is not None:
            on_step(step, params, key_params, queue)
        if step % 100 == 0:
            log.debug("step %d loss %.4f", step, value)
    return TrainResult(params, key_params, losses, queue)


def smooth(values, window: int = 50) -> np.ndarray:
    """Trailing moving average (shorter at the start)."""
    values = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)

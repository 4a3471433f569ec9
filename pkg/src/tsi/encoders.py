"""Backbone projection, trend and seasonal encoders, and representation assembly.

Every function here works on plain arrays or on tape :class:`~tsi.tensor.Var`
handles; inputs may carry a leading batch axis (``[B, h, m]``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tsi import tensor as T


@dataclass(frozen=True)
class EncoderConfig:
    n_features: int
    d_hidden: int = 64
    d_trend: int = 64
    d_seasonal: int = 64
    depth: int = 5
    window: int = 128

    @property
    def bins(self) -> int:
        return self.window // 2 + 1

    @property
    def d_ts(self) -> int:
        return self.d_trend + self.d_seasonal


@dataclass
class EncoderParams:
    """Backbone, trend (``depth + 1`` kernels, taps 2) and seasonal parameters.

    Fields hold numpy arrays, or tape Vars while a loss is being recorded.
    ``seasonal_weight``/``seasonal_bias`` are complex.
    """

    backbone_weight: object
    backbone_bias: object
    trend_kernels: list
    trend_biases: list
    seasonal_weight: object
    seasonal_bias: object

    def to_dict(self) -> dict[str, object]:
        out = {"backbone.weight": self.backbone_weight, "backbone.bias": self.backbone_bias}
        for j, (k, b) in enumerate(zip(self.trend_kernels, self.trend_biases)):
            out[f"trend.{j}.kernel"] = k
            out[f"trend.{j}.bias"] = b
        out["seasonal.weight"] = self.seasonal_weight
        out["seasonal.bias"] = self.seasonal_bias
        return out

    @classmethod
    def from_dict(cls, d) -> EncoderParams:
        n = sum(1 for k in d if k.startswith("trend.") and k.endswith(".kernel"))
        return cls(
            backbone_weight=d["backbone.weight"],
            backbone_bias=d["backbone.bias"],
            trend_kernels=[d[f"trend.{j}.kernel"] for j in range(n)],
            trend_biases=[d[f"trend.{j}.bias"] for j in range(n)],
            seasonal_weight=d["seasonal.weight"],
            seasonal_bias=d["seasonal.bias"],
        )

    def copy(self) -> EncoderParams:
        return EncoderParams.from_dict({k: np.array(v, copy=True) for k, v in self.to_dict().items()})

    def on_tape(self, tape: T.Tape, prefix: str = "") -> EncoderParams:
        return EncoderParams.from_dict({k: tape.param(v, name=prefix + k) for k, v in self.to_dict().items()})

    @property
    def depth(self) -> int:
        return len(self.trend_kernels) - 1


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    """Random initialization scaled by fan-in."""
    m, dh = cfg.n_features, cfg.d_hidden
    kernels, biases = [], []
    for _ in range(cfg.depth + 1):
        kernels.append(rng.normal(0.0, 1.0 / np.sqrt(2 * dh), size=(2, dh, cfg.d_trend)))
        biases.append(np.zeros(cfg.d_trend))
    scale = 1.0 / np.sqrt(2 * dh)
    P = rng.normal(0.0, scale, size=(cfg.bins, dh, cfg.d_seasonal)) + 1j * rng.normal(
        0.0, scale, size=(cfg.bins, dh, cfg.d_seasonal)
    )
    return EncoderParams(
        backbone_weight=rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, dh)),
        backbone_bias=np.zeros(dh),
        trend_kernels=kernels,
        trend_biases=biases,
        seasonal_weight=P,
        seasonal_bias=np.zeros((cfg.bins, cfg.d_seasonal), dtype=np.complex128),
    )


def encode_backbone(X, weight, bias):
    """Per-timestep affine projection ``X @ weight + bias``."""
    if T.value_of(X).shape[-1] != T.value_of(weight).shape[0]:
        raise ValueError(
            f"input has {T.value_of(X).shape[-1]} features, backbone expects {T.value_of(weight).shape[0]}"
        )
    return T.add(T.matmul(X, weight), bias)


def encode_trend(G, kernels, biases):
    """Average of dilated causal convolutions, dilation ``2**j`` for kernel ``j``."""
    out = None
    for j, (k, b) in enumerate(zip(kernels, biases)):
        layer = T.add(T.conv1d_causal(G, k, 2**j), b)
        out = layer if out is None else T.add(out, layer)
    return T.mul(out, 1.0 / len(kernels))


def encode_seasonal(G, weight, bias):
    """``irfft(complex_linear(rfft(G), weight, bias))`` over the window length."""
    h = T.value_of(G).shape[-2]
    bins = T.value_of(weight).shape[0]
    if bins != h // 2 + 1:
        raise ValueError(f"seasonal layer has {bins} bins, window of length {h} needs {h // 2 + 1}")
    return T.irfft(T.complex_linear(T.rfft(G), weight, bias), h)


def assemble(H_tr, H_s, H_i=None):
    """Concatenate trend, seasonal and independent blocks along the feature axis."""
    blocks = [b for b in (H_tr, H_s, H_i) if b is not None]
    lengths = {T.value_of(b).shape[-2] for b in blocks}
    if len(lengths) != 1:
        raise ValueError(f"blocks have different time lengths: {sorted(lengths)}")
    return T.concat(*blocks, axis=-1)


def encode_ts(X, params: EncoderParams):
    """Trend and seasonal blocks for windows ``X`` (``[..., h, m]``)."""
    G = encode_backbone(X, params.backbone_weight, params.backbone_bias)
    H_tr = encode_trend(G, params.trend_kernels, params.trend_biases)
    H_s = encode_seasonal(G, params.seasonal_weight, params.seasonal_bias)
    return H_tr, H_s


def encoder_shapes(params: EncoderParams) -> dict[str, tuple[int, ...]]:
    return {k: np.shape(T.value_of(v)) for k, v in params.to_dict().items()}


__all__ = [
    "EncoderConfig",
    "EncoderParams",
    "init_encoder",
    "encode_backbone",
    "encode_trend",
    "encode_seasonal",
    "assemble",
    "encode_ts",
    "encoder_shapes",
]

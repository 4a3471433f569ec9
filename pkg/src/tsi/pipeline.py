"""End-to-end TSI pipeline: fit encoders, build representations, evaluate forecasts."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from tsi.config import RunConfig
from tsi.contrastive import AugmentConfig, TrainConfig, train_representation
from tsi.data import (
    DatasetBundle,
    Splits,
    WindowSpec,
    ett_like_spec,
    gen_synthetic,
    load_csv,
    lookback_windows,
    make_windows,
    split_standardize,
)
from tsi.encoders import EncoderConfig, EncoderParams, assemble, encode_ts
from tsi.errors import CompatibilityError
from tsi.forecaster import evaluate, fit_ridge, persistence, predict, select_alpha
from tsi.ica import (
    AutoencoderParams,
    IcaModel,
    IndependentExtractor,
    WhiteningModel,
    extract_independent,
    fit_extractor,
    train_autoencoder,
)

log = logging.getLogger(__name__)

CHUNK = 256


@dataclass
class TSIModel:
    encoder: EncoderParams
    extractor: IndependentExtractor
    window: int

    @property
    def widths(self) -> tuple[int, int, int]:
        d_tr = np.shape(self.encoder.trend_kernels[0])[2]
        d_s = np.shape(self.encoder.seasonal_weight)[2]
        return d_tr, d_s, self.extractor.n_components

    @property
    def width(self) -> int:
        return sum(self.widths)


@dataclass
class TrainingLog:
    contrastive: list[float]
    autoencoder: list[float]


def load_dataset(cfg: RunConfig) -> DatasetBundle:
    if cfg.dataset == "synthetic":
        bundle, _ = gen_synthetic(ett_like_spec(cfg.synthetic_length))
        bundle.name = cfg.name
        return bundle
    return load_csv(cfg.dataset, name=cfg.name)


def prepare_splits(cfg: RunConfig, bundle: DatasetBundle) -> Splits:
    return split_standardize(bundle, cfg.split, min_length=cfg.window + max(cfg.horizon_list))


def encoder_config(cfg: RunConfig, n_features: int) -> EncoderConfig:
    return EncoderConfig(n_features, cfg.d_hidden, cfg.d_trend, cfg.d_seasonal, cfg.depth, cfg.window)


def train_config(cfg: RunConfig) -> TrainConfig:
    aug = AugmentConfig(cfg.aug_p, cfg.scale_sigma, cfg.shift_sigma, cfg.jitter_sigma)
    return TrainConfig(cfg.steps, cfg.batch_size, cfg.temperature, cfg.momentum, cfg.queue_size, cfg.lr, aug)


def train_model(cfg: RunConfig, splits: Splits) -> tuple[TSIModel, TrainingLog]:
    """Contrastive encoders, then the sparse autoencoder, then whitening + FastICA."""
    m = splits.train.shape[1]
    windows = lookback_windows(splits.train, cfg.window)
    result = train_representation(windows, encoder_config(cfg, m), train_config(cfg), seed=cfg.seed)
    log.info("contrastive training done, final loss %.4f", result.losses[-1])
    ae, ae_losses = None, []
    if cfg.autoencoder:
        ae, ae_losses = train_autoencoder(
            splits.train, cfg.sparsity, seed=cfg.seed, n_latent=cfg.n_components or m,
            hidden=cfg.ae_hidden, steps=cfg.ae_steps, lr=cfg.ae_lr,
        )
    extractor = fit_extractor(splits.train, ae, literal=cfg.ica_on_reconstruction, seed=cfg.seed,
                              tol=cfg.ica_tol, max_iter=cfg.ica_max_iter)
    if not extractor.converged:
        log.warning("FastICA did not converge in %d iterations", cfg.ica_max_iter)
    return TSIModel(result.params, extractor, cfg.window), TrainingLog(result.losses, ae_losses)


def represent(model: TSIModel, X) -> np.ndarray:
    """Full representation ``[..., h, d_tr + d_s + n_w]`` of windows ``X``."""
    H_tr, H_s = encode_ts(X, model.encoder)
    return assemble(H_tr, H_s, extract_independent(X, model.extractor))


def last_step_features(model: TSIModel, series) -> np.ndarray:
    """``H_t`` of every length-``window`` window of ``series``, one row per start offset."""
    series = np.asarray(series, dtype=np.float64)
    windows = lookback_windows(series, model.window)
    rows = []
    for i in range(0, len(windows), CHUNK):
        H_tr, H_s = encode_ts(windows[i:i + CHUNK], model.encoder)
        rows.append(np.concatenate([H_tr[:, -1], H_s[:, -1]], axis=-1))
    H_i = extract_independent(series[model.window - 1:], model.extractor)
    return np.concatenate([np.concatenate(rows), H_i], axis=-1)


def _horizon_data(split, feats, h, k):
    X, Y = make_windows(split, WindowSpec(h, k))
    return X, Y, feats[: len(X)]


def evaluate_model(model: TSIModel, splits: Splits, horizons, grid, name: str) -> list[dict]:
    """One metric row per horizon: alpha chosen on validation, scored on test."""
    feats = {n: last_step_features(model, getattr(splits, n)) for n in ("train", "val", "test")}
    rows = []
    for k in sorted(horizons):
        data = {n: _horizon_data(getattr(splits, n), feats[n], model.window, k) for n in feats}
        alpha = select_alpha(data["train"][2], data["train"][1], data["val"][2], data["val"][1], grid)
        ridge = fit_ridge(data["train"][2], data["train"][1], alpha)
        m = evaluate(predict(ridge, data["test"][2]), data["test"][1])
        rows.append({"dataset": name, "horizon": int(k), "mse": m.mse, "mae": m.mae, "alpha": alpha})
    return rows


def forecast_final(model: TSIModel, splits: Splits, bundle: DatasetBundle, horizon: int, grid) -> np.ndarray:
    """Forecast the ``horizon`` steps after the end of the series, in original units."""
    feats = {n: last_step_features(model, getattr(splits, n)) for n in ("train", "val")}
    data = {n: _horizon_data(getattr(splits, n), feats[n], model.window, horizon) for n in feats}
    alpha = select_alpha(data["train"][2], data["train"][1], data["val"][2], data["val"][1], grid)
    ridge = fit_ridge(data["train"][2], data["train"][1], alpha)
    tail = splits.scaler.transform(bundle.values[-model.window:])
    H_t = last_step_features(model, tail)[-1]
    return splits.scaler.inverse_transform(predict(ridge, H_t))


def baseline_scores(splits: Splits, h: int, k: int, grid) -> dict[str, dict]:
    """Persistence and raw-lookback ridge under the same split and scaling."""
    data = {n: make_windows(getattr(splits, n), WindowSpec(h, k)) for n in ("train", "val", "test")}
    out = {"persistence": evaluate(persistence(data["test"][0], k), data["test"][1]).__dict__}
    flat = {n: data[n][0].reshape(len(data[n][0]), -1) for n in data}
    alpha = select_alpha(flat["train"], data["train"][1], flat["val"], data["val"][1], grid)
    ridge = fit_ridge(flat["train"], data["train"][1], alpha)
    out["raw_ridge"] = {**evaluate(predict(ridge, flat["test"]), data["test"][1]).__dict__, "alpha": alpha}
    return out


# ---------------------------------------------------------------------------
# checkpoint conversion


def model_to_arrays(model: TSIModel) -> dict[str, np.ndarray]:
    arrays = {f"encoder.{k}": np.asarray(v) for k, v in model.encoder.to_dict().items()}
    ex = model.extractor
    if ex.autoencoder is not None:
        arrays.update({f"ae.{k}": np.asarray(v) for k, v in ex.autoencoder.weights.items()})
        arrays["ae.sparsity"] = np.array([ex.autoencoder.sparsity])
        arrays["ae.linear"] = np.array([float(ex.autoencoder.linear)])
    arrays["ica.mean"] = ex.whitening.mean
    arrays["ica.K"] = ex.whitening.K
    arrays["ica.W"] = ex.ica.W
    arrays["ica.order"] = ex.ica.order.astype(np.float64)
    arrays["ica.signs"] = ex.ica.signs
    arrays["ica.literal"] = np.array([float(ex.literal)])
    arrays["ica.converged"] = np.array([float(ex.converged)])
    arrays["meta.window"] = np.array([float(model.window)])
    return arrays


def model_from_arrays(arrays: dict[str, np.ndarray]) -> TSIModel:
    try:
        encoder = EncoderParams.from_dict({k[8:]: v for k, v in arrays.items() if k.startswith("encoder.")})
        ae = None
        if "ae.sparsity" in arrays:
            weights = {k[3:]: v for k, v in arrays.items() if k.startswith("ae.") and k[3:6] in ("enc", "dec")}
            ae = AutoencoderParams(weights, float(arrays["ae.sparsity"][0]), bool(arrays["ae.linear"][0]))
        extractor = IndependentExtractor(
            whitening=WhiteningModel(arrays["ica.mean"], arrays["ica.K"]),
            ica=IcaModel(arrays["ica.W"], arrays["ica.order"].astype(np.intp), arrays["ica.signs"]),
            autoencoder=ae,
            literal=bool(arrays["ica.literal"][0]),
            converged=bool(arrays["ica.converged"][0]),
        )
        window = int(arrays["meta.window"][0])
    except KeyError as exc:
        raise CompatibilityError(f"checkpoint is missing array {exc.args[0]!r}") from None
    return TSIModel(encoder, extractor, window)


def check_compatible(model: TSIModel, cfg: RunConfig, n_features: int) -> None:
    """Raise :class:`CompatibilityError` when checkpoint shapes disagree with the config."""
    expected = {
        "window": (model.window, cfg.window),
        "n_features": (np.shape(model.encoder.backbone_weight)[0], n_features),
        "d_hidden": (np.shape(model.encoder.backbone_weight)[1], cfg.d_hidden),
        "d_trend": (model.widths[0], cfg.d_trend),
        "d_seasonal": (model.widths[1], cfg.d_seasonal),
        "depth": (model.encoder.depth, cfg.depth),
        "bins": (np.shape(model.encoder.seasonal_weight)[0], cfg.window // 2 + 1),
    }
    bad = [f"{k} (checkpoint {a}, config {b})" for k, (a, b) in expected.items() if a != b]
    if bad:
        raise CompatibilityError("checkpoint does not match config: " + ", ".join(bad))

"""Command-line entry point: ``tsi {train,evaluate,forecast,synth,check}``.

Exit codes: 0 success, 1 config error, 2 data error, 3 training divergence,
4 checkpoint incompatibility, 5 failed check.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from tsi import checkpoint, checks, pipeline
from tsi.config import RunConfig, load_config
from tsi.data import SOURCE_KINDS, SyntheticSpec, write_synthetic
from tsi.errors import CompatibilityError, ConfigError, DataError, DivergenceError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_INCOMPATIBLE, EXIT_CHECK = range(6)

log = logging.getLogger("tsi")


def _config(args) -> RunConfig:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config is None:
        return RunConfig(**overrides)
    return load_config(args.config, overrides)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _checkpoint_path(args) -> Path:
    return Path(args.checkpoint) if args.checkpoint else Path(args.out) / "checkpoint.tsi"


def _write_losses(path: Path, losses) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])


def _load_model(args, cfg: RunConfig, n_features: int) -> pipeline.TSIModel:
    path = _checkpoint_path(args)
    try:
        arrays = checkpoint.load(path)
    except OSError as exc:
        raise CompatibilityError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    except checkpoint.CheckpointError as exc:
        raise CompatibilityError(f"{path}: {exc}") from None
    model = pipeline.model_from_arrays(arrays)
    pipeline.check_compatible(model, cfg, n_features)
    return model


def cmd_train(args) -> int:
    cfg = _config(args)
    bundle = pipeline.load_dataset(cfg)
    splits = pipeline.prepare_splits(cfg, bundle)
    model, history = pipeline.train_model(cfg, splits)
    out = _out(args)
    path = _checkpoint_path(args)
    path.parent.mkdir(parents=True, exist_ok=True)
    checkpoint.save(path, pipeline.model_to_arrays(model))
    _write_losses(out / "losses.csv", history.contrastive)
    if history.autoencoder:
        _write_losses(out / "ae_losses.csv", history.autoencoder)
    print(f"trained {cfg.name}: final contrastive loss {history.contrastive[-1]:.4f}, "
          f"representation width {model.width}; checkpoint {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    bundle = pipeline.load_dataset(cfg)
    splits = pipeline.prepare_splits(cfg, bundle)
    model = _load_model(args, cfg, bundle.n_features)
    rows = pipeline.evaluate_model(model, splits, cfg.horizon_list, cfg.alpha_grid, cfg.name)
    rows.sort(key=lambda r: (r["dataset"], r["horizon"]))
    out = _out(args)
    with (out / "metrics.json").open("w", encoding="utf-8") as fh:
        fh.write("[\n" + ",\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n]\n")
    with (out / "metrics.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", "L", "MSE", "MAE"])
        for r in rows:
            w.writerow([r["dataset"], r["horizon"], f"{r['mse']:.6f}", f"{r['mae']:.6f}"])
    for r in rows:
        print(f"{r['dataset']} L={r['horizon']}: MSE {r['mse']:.4f} MAE {r['mae']:.4f} (alpha {r['alpha']:g})")
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = _config(args)
    bundle = pipeline.load_dataset(cfg)
    splits = pipeline.prepare_splits(cfg, bundle)
    model = _load_model(args, cfg, bundle.n_features)
    out = _out(args)
    stamps = bundle.timestamps
    delta = stamps[-1] - stamps[-2] if len(stamps) > 1 else None
    for k in sorted(cfg.horizon_list):
        pred = pipeline.forecast_final(model, splits, bundle, k, cfg.alpha_grid)
        path = out / f"forecast_L{k}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", *bundle.feature_names])
            for i, row in enumerate(pred, start=1):
                when = (stamps[-1] + i * delta).isoformat(sep=" ") if delta else str(i)
                w.writerow([when, *(repr(float(v)) for v in row)])
        print(f"wrote {path}")
    return EXIT_OK


def parse_synth_spec(text: str) -> SyntheticSpec:
    """``key = value`` lines; ``mixing`` rows are separated by ``;``."""
    fields = {}
    floats = lambda v: tuple(float(x) for x in v.split(",") if x.strip())
    convert = {
        "length": int, "seed": int, "freq_minutes": int, "noise": float,
        "sources": lambda v: tuple(x.strip() for x in v.split(",") if x.strip()),
        "feature_names": lambda v: tuple(x.strip() for x in v.split(",") if x.strip()),
        "trend_slopes": floats, "periods": floats, "amplitudes": floats,
        "mixing": lambda v: tuple(floats(row) for row in v.split(";") if row.strip()),
        "nonlinearity": str, "start": str, "name": str,
    }
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in convert:
            raise ConfigError(f"unknown synthetic spec key {key!r} (line {lineno})")
        try:
            fields[key] = convert[key](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r} (line {lineno}): {exc}") from None
    unknown = [s for s in fields.get("sources", ()) if s not in SOURCE_KINDS]
    if unknown:
        raise ConfigError(f"unknown source kinds {unknown}; expected {SOURCE_KINDS}")
    return SyntheticSpec(**fields)


def cmd_synth(args) -> int:
    if args.config is None:
        raise ConfigError("synth needs --config pointing to a synthetic spec file")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read spec {args.config}: {exc.strerror}") from None
    spec = parse_synth_spec(text)
    if args.seed is not None:
        spec = SyntheticSpec(**{**spec.__dict__, "seed": args.seed})
    try:
        csv_path, json_path = write_synthetic(spec, _out(args))
    except ValueError as exc:
        raise ConfigError(f"invalid synthetic spec: {exc}") from None
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


def cmd_check(args) -> int:
    return EXIT_OK if checks.run_checks(print) else EXIT_CHECK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "forecast": cmd_forecast,
    "synth": cmd_synth,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsi", description="Trend, seasonal and independent-component "
                                     "representations for multivariate forecasting.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config (synthetic spec for synth)")
        p.add_argument("--checkpoint", help="checkpoint path (default OUT/checkpoint.tsi)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, f"config error: {exc}"
    except DataError as exc:
        code, msg = EXIT_DATA, f"data error: {exc}"
    except DivergenceError as exc:
        code, msg = EXIT_DIVERGED, f"training diverged: {exc}"
    except CompatibilityError as exc:
        code, msg = EXIT_INCOMPATIBLE, f"incompatible checkpoint: {exc}"
    print(f"tsi: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

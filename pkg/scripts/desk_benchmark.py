"""Compare TSI features + ridge with persistence and raw-window ridge.

    python3 scripts/desk_benchmark.py [--config run.cfg] [--horizons 24,48]
"""

import argparse
import time

from tsi import pipeline
from tsi.config import RunConfig, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--horizons", default="24")
    args = ap.parse_args()
    horizons = tuple(int(h) for h in args.horizons.split(","))
    cfg = load_config(args.config, {"horizons": horizons}) if args.config else RunConfig(horizons=horizons)

    start = time.perf_counter()
    bundle = pipeline.load_dataset(cfg)
    splits = pipeline.prepare_splits(cfg, bundle)
    model, _ = pipeline.train_model(cfg, splits)
    trained = time.perf_counter() - start
    rows = pipeline.evaluate_model(model, splits, horizons, cfg.alpha_grid, cfg.name)

    print(f"{cfg.name}: T={len(bundle)}, window {cfg.window}, width {model.width}, trained in {trained:.0f}s")
    print(f"{'L':>5} {'TSI':>9} {'persist':>9} {'raw':>9}")
    for row in rows:
        base = pipeline.baseline_scores(splits, cfg.window, row["horizon"], cfg.alpha_grid)
        print(f"{row['horizon']:>5} {row['mse']:9.4f} {base['persistence']['mse']:9.4f} "
              f"{base['raw_ridge']['mse']:9.4f}")


if __name__ == "__main__":
    main()

"""Configs are INI files; presets ship with the package.

The same runs are available from the shell:

    python -m compass train --config preset:desk --set training.epochs=5
    python -m compass eval  --config preset:desk --fill zero
    COMPASS_OUTPUT_ROOT=/tmp/runs python -m compass ablate --config preset:weak
"""
from compass import config

cfg = config.load("preset:desk", ["dataset.seed=3", "model.fusion_mode=cross_attention"])
print("seed propagated to model and training:", cfg.model.seed, cfg.training.seed)
print("outputs go to:", cfg.paths.resolved_root())
print()
print(cfg.to_ini())

try:
    config.load("preset:desk", ["model.dim=30"])
except config.ConfigError as err:
    print("rejected:", err)

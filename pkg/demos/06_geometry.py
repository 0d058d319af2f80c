"""Cross-modal geometry of the global tokens.

Compactness: mean cosine between per-modality class centroids (higher means
modalities agree). Separation: smallest cosine distance to another class.
"""
import dataclasses

from compass import config
from compass.evaluator import geometry_metrics
from compass.model import CompassModel
from compass.synthdata import generate
from compass.trainer import train

cfg = config.load("preset:desk")
data = generate(cfg.dataset)
for label, weights in (("with shared-space loss", cfg.losses), ("without", dataclasses.replace(cfg.losses, lambda_s=0.0))):
    model = CompassModel(cfg.model)
    train(data, model, cfg.training, weights, cfg.masking)
    rep = geometry_metrics(data.test, model)
    print(f"{label}: compactness {rep.mean_compactness:.3f}, separation {rep.mean_separation:.3f}")

"""Proxy fill vs zero fill vs a model trained without the auxiliary losses."""
import dataclasses

from compass import config
from compass.evaluator import ablation_markdown, sweep_ablation
from compass.model import CompassModel
from compass.synthdata import generate
from compass.trainer import train

cfg = config.load("preset:weak")
data = generate(cfg.dataset)

models = {}
for name, weights in {
    "full": cfg.losses,
    "proxy_no_align": dataclasses.replace(cfg.losses, lambda_a=0.0, lambda_s=0.0, lambda_p=0.0),
}.items():
    models[name] = CompassModel(cfg.model)
    train(data, models[name], cfg.training, weights, cfg.masking)

print(ablation_markdown(sweep_ablation(data.test, models)))

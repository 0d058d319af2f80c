"""Train on the desk preset and report accuracy on all seven modality subsets.

Takes about 15 s on one CPU core.
"""
from compass import config
from compass.evaluator import sweep_subsets
from compass.model import CompassModel
from compass.synthdata import generate
from compass.trainer import train

cfg = config.load("preset:desk")
data = generate(cfg.dataset)
model = CompassModel(cfg.model)
result = train(data, model, cfg.training, cfg.losses, cfg.masking)

for h in result.history[::5]:
    print(f"epoch {h['epoch'] + 1:>2}  val acc {h['val_acc']:.3f}")
print(f"best full-modality val acc {result.best_val_acc:.3f}\n")

print(sweep_subsets(data.test, model).to_markdown())

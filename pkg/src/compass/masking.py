"""Training-time synthetic missingness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .modalities import ModalitySet


@dataclass(frozen=True)
class MaskConfig:
    n_modalities: int = 3
    p_drop: float = 0.7
    per_sample: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_drop <= 1.0:
            raise ValueError("p_drop must lie in [0, 1]")
        if self.n_modalities < 2:
            raise ValueError("masking needs at least 2 modalities")


def sample_mask(config: MaskConfig, rng: np.random.Generator) -> ModalitySet:
    """Draw an observed set.

    With probability ``p_drop`` the observed-set size k is uniform on
    {1, ..., N-1} and the subset is uniform among size-k subsets; otherwise
    every modality is observed.
    """
    n = config.n_modalities
    if rng.random() < config.p_drop:
        k = int(rng.integers(1, n))
        chosen = rng.choice(n, size=k, replace=False)
        return ModalitySet.of(chosen.tolist(), n)
    return ModalitySet.full(n)

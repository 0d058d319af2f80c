"""Slot-complete multimodal fusion under missing modalities, on numpy."""

from .modalities import ModalitySet, all_subsets
from .model import CompassModel, ModelConfig
from .synthdata import DatasetSpec, generate

__all__ = ["CompassModel", "DatasetSpec", "ModalitySet", "ModelConfig", "all_subsets", "generate"]
__version__ = "0.1.0"

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import PeriodicConv2d, SpectralConv2d, pad_periodic
from .models import ARCHITECTURES, DRN_DILATIONS, SurrogateConfig, SurrogateModel, build_model
from .postprocess import DegenerateMass, MassBudget, mass_correct, oil_mass_t, postprocess
from .rollout import mask_tensor, predict_bundle, rollout

__all__ = [
    "ARCHITECTURES", "CheckpointError", "DRN_DILATIONS", "DegenerateMass", "MassBudget", "PeriodicConv2d",
    "SpectralConv2d", "SurrogateConfig", "SurrogateModel", "build_model", "load_checkpoint", "mass_correct",
    "mask_tensor", "oil_mass_t", "pad_periodic", "postprocess", "predict_bundle", "rollout", "save_checkpoint",
]

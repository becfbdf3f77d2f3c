from .features import STRATEGIES, FeatureGrid, FusedVector
from .coding import (
    FbcCode,
    FbcDictionary,
    fbc_encode,
    fbc_objective,
    fbc_pool,
    soft_threshold,
    zero_code_threshold,
)
from .backbone import BACKBONES, DeskBackbone, backbone_features, build_backbone
from .baselines import baseline_fuse, fit_linear_probe, fuse_arrays, linear_classifier, select_cc_weight
from .model import (
    FbcFusionModel,
    FbcModelConfig,
    extract_fused,
    extract_fused_batch,
    fit_fbc_model,
    train_fbc_classifier,
)

__all__ = [
    "STRATEGIES", "FeatureGrid", "FusedVector",
    "FbcCode", "FbcDictionary", "fbc_encode", "fbc_objective", "fbc_pool",
    "soft_threshold", "zero_code_threshold",
    "BACKBONES", "DeskBackbone", "backbone_features", "build_backbone",
    "baseline_fuse", "fit_linear_probe", "fuse_arrays", "linear_classifier",
    "select_cc_weight",
    "FbcFusionModel", "FbcModelConfig", "extract_fused", "extract_fused_batch",
    "fit_fbc_model", "train_fbc_classifier",
]

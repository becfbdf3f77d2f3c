from .maps import ResidualMap, spectral_transform
from .prnu import prnu_extract
from .wavelet import (
    WAVELETS,
    DenoiserConfig,
    dwt2,
    estimate_sigma2,
    idwt2,
    pad_to_multiple,
    qmf,
    wavelet_denoise,
)
from .learned import (
    ResidualNet,
    ResidualNetConfig,
    TrainedResidualNet,
    build_patch_pairs,
    residual_net_extract,
    train_residual_net,
)

__all__ = [
    "ResidualMap", "spectral_transform", "prnu_extract",
    "WAVELETS", "DenoiserConfig", "dwt2", "estimate_sigma2", "idwt2",
    "pad_to_multiple", "qmf", "wavelet_denoise",
    "ResidualNet", "ResidualNetConfig", "TrainedResidualNet",
    "build_patch_pairs", "residual_net_extract", "train_residual_net",
]

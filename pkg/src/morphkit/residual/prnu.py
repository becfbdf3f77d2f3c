"""Sensor pattern noise extraction.

The residual is the difference between an image and its wavelet-Wiener
denoised estimate.  For genuine photographs this difference is dominated by
the sensor's photo-response non-uniformity; morphing pipelines disturb or
replace that pattern, which makes the residual a detection feature.
"""

import numpy as np

from .maps import ResidualMap
from .wavelet import DenoiserConfig, wavelet_denoise


def prnu_extract(image: np.ndarray, config: DenoiserConfig = DenoiserConfig()) -> ResidualMap:
    """Noise residual W = I - F(I) with F the wavelet Wiener denoiser.

    Expects a preprocessed 2-D luminance image; output has the same shape.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("expected a 2-D luminance image, got shape %r" % (img.shape,))
    denoised = wavelet_denoise(img, config)
    return ResidualMap(values=img - denoised, kind="prnu", domain="spatial")

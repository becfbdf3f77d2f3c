"""Face normalization.

Images are aligned into a square canonical frame before residual
extraction.  When eye landmarks are available a similarity transform maps
them onto fixed canonical positions; otherwise a center crop plus resize is
used.  All outputs are float64 in [0, 1].
"""

from typing import Optional, Tuple

import cv2
import numpy as np

# Canonical eye positions as fractions of the output side: the eyes sit on a
# horizontal line 35% from the top, at 35% and 65% of the width.
CANONICAL_LEFT = (0.35, 0.35)
CANONICAL_RIGHT = (0.65, 0.35)

# Rec. 601 luma weights, RGB channel order.
_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float64)


def to_luminance(image: np.ndarray) -> np.ndarray:
    """Collapse an RGB image to a single luminance channel (Rec. 601)."""
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image @ _LUMA
    raise ValueError("expected HxW or HxWx3 image, got shape %r" % (image.shape,))


def _as_unit_float(image: np.ndarray) -> np.ndarray:
    if image.size == 0:
        raise ValueError("empty image")
    img = np.asarray(image)
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    if img.dtype == np.uint16:
        return img.astype(np.float64) / 65535.0
    img = img.astype(np.float64)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return np.clip(img, 0.0, 1.0)


def _similarity_from_eyes(eye_left, eye_right, size: int) -> np.ndarray:
    """2x3 affine matrix mapping the given eye points onto the canonical ones.

    Solved in closed form with complex arithmetic: a rotation+scale w and a
    translation t with w*src + t = dst for both eyes.
    """
    src_l = complex(eye_left[0], eye_left[1])
    src_r = complex(eye_right[0], eye_right[1])
    if src_l == src_r:
        raise ValueError("eye landmarks are coincident")
    dst_l = complex(CANONICAL_LEFT[0] * size, CANONICAL_LEFT[1] * size)
    dst_r = complex(CANONICAL_RIGHT[0] * size, CANONICAL_RIGHT[1] * size)
    w = (dst_r - dst_l) / (src_r - src_l)
    t = dst_l - w * src_l
    return np.array([[w.real, -w.imag, t.real],
                     [w.imag, w.real, t.imag]], dtype=np.float64)


def preprocess_face(image: np.ndarray,
                    eye_left: Optional[Tuple[float, float]] = None,
                    eye_right: Optional[Tuple[float, float]] = None,
                    size: int = 270,
                    grayscale: bool = True) -> np.ndarray:
    """Normalize a face image into the canonical square frame.

    Args:
        image: HxW or HxWx3 array. uint8/uint16 are rescaled to [0, 1],
            floats are assumed to already live in [0, 1] and are clipped.
        eye_left, eye_right: optional (x, y) landmark positions in input
            pixel coordinates. Both or neither must be given.
        size: output side length in pixels.
        grayscale: collapse to luminance after alignment.

    Returns:
        (size, size) float64 array in [0, 1], or (size, size, 3) when
        ``grayscale`` is False and the input has three channels.
    """
    if size < 8:
        raise ValueError("output size too small: %d" % size)
    img = _as_unit_float(image)
    if img.ndim not in (2, 3):
        raise ValueError("expected HxW or HxWx3 image, got shape %r" % (img.shape,))
    if (eye_left is None) != (eye_right is None):
        raise ValueError("both eye landmarks or neither must be given")

    if eye_left is not None:
        m = _similarity_from_eyes(eye_left, eye_right, size)
        out = cv2.warpAffine(img, m, (size, size), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_REFLECT)
    else:
        h, w = img.shape[:2]
        side = min(h, w)
        top = (h - side) // 2
        left = (w - side) // 2
        crop = img[top:top + side, left:left + side]
        if side == size:
            out = crop.copy()
        else:
            interp = cv2.INTER_AREA if side > size else cv2.INTER_LINEAR
            out = cv2.resize(crop, (size, size), interpolation=interp)

    out = np.clip(out, 0.0, 1.0)
    if grayscale:
        out = to_luminance(out)
    return np.ascontiguousarray(out, dtype=np.float64)


def load_image(path: str) -> np.ndarray:
    """Read an image from disk as float64 in [0, 1], RGB channel order."""
    raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError("cannot read image: %s" % path)
    if raw.ndim == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return _as_unit_float(raw)


def preprocess_record(record, size: int = 270, grayscale: bool = True) -> np.ndarray:
    """Load and normalize the image behind a sample record."""
    img = load_image(record.path)
    return preprocess_face(img, record.eye_left, record.eye_right,
                           size=size, grayscale=grayscale)

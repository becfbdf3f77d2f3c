"""Residual map container and spectral view."""

from dataclasses import dataclass

import numpy as np

KINDS = ("prnu", "learned")
DOMAINS = ("spatial", "spectral")


@dataclass(frozen=True)
class ResidualMap:
    """A 2-D noise residual with provenance tags.

    ``kind`` records which extractor produced it; ``domain`` is ``spatial``
    for the raw residual and ``spectral`` for its centered magnitude
    spectrum (which is non-negative by construction).
    """

    values: np.ndarray
    kind: str
    domain: str = "spatial"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("residual must be 2-D, got shape %r" % (v.shape,))
        if not np.all(np.isfinite(v)):
            raise ValueError("residual contains non-finite values")
        if self.kind not in KINDS:
            raise ValueError("unknown residual kind %r" % self.kind)
        if self.domain not in DOMAINS:
            raise ValueError("unknown residual domain %r" % self.domain)
        if self.domain == "spectral" and np.any(v < 0):
            raise ValueError("spectral residual must be non-negative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def spectral_transform(residual: ResidualMap) -> ResidualMap:
    """Centered magnitude spectrum of a spatial residual.

    Output shape equals input shape; the zero frequency sits at the center.
    """
    if residual.domain != "spatial":
        raise ValueError("spectral_transform expects a spatial residual")
    mag = np.abs(np.fft.fftshift(np.fft.fft2(residual.values)))
    return ResidualMap(values=mag, kind=residual.kind, domain="spectral")

"""Morphing attack detection and fingerprinting toolkit.

Sensor-noise and learned residual extraction, sparse bilinear feature
fusion, and an episodic memory classifier for few-shot detection of
face morphing attacks and attribution of their generation pipelines.
"""

__version__ = "0.1.0"

from . import cli, datamodel, evaluation, fewshot, fusion, residual

__all__ = ["cli", "datamodel", "evaluation", "fewshot", "fusion", "residual",
           "__version__"]

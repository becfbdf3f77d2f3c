"""Synthetic face corpus with controlled morphing pipelines.

The generator renders smooth face-like textures with known eye geometry,
simulates acquisition (a fixed multiplicative sensor pattern plus per-shot
grain), then produces morphs by alpha-blending captured subject pairs and
applying one of several post-processing pipelines.  Bona fide captures
carry the intact sensor signature; blending halves the grain power and
each post-process reshapes what is left (blockwise quantization, low-pass
blur, or a frequency-band splice), so every class has a distinct noise
fingerprint for the residual extractors to pick up.  Everything is driven
by a single seed and reproduces bit for bit.
"""

import itertools
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import cv2
import numpy as np
from scipy import fft as sfft
from scipy.ndimage import gaussian_filter

from .records import BONA_FIDE, Dataset, DatasetManifest, SampleRecord, save_manifest

POST_KINDS = ("none", "quantize", "blur", "splice")


@dataclass(frozen=True)
class MorphPipeline:
    """One morph generation recipe: blend factor plus a post-process."""

    pipeline_id: str
    alpha: float = 0.5
    post: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if not self.pipeline_id:
            raise ValueError("pipeline_id must be non-empty")
        if self.pipeline_id == BONA_FIDE:
            raise ValueError("pipeline_id must differ from the bona fide label")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must lie in [0, 1], got %r" % self.alpha)
        if self.post not in POST_KINDS:
            raise ValueError("unknown post-process %r (expected one of %s)"
                             % (self.post, POST_KINDS))


def default_pipelines() -> Tuple[MorphPipeline, ...]:
    return (
        MorphPipeline("quantize", alpha=0.5, post="quantize", param=0.15),
        MorphPipeline("blur", alpha=0.5, post="blur", param=2.0),
        MorphPipeline("splice", alpha=0.5, post="splice", param=0.2),
    )


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Configuration of a generated corpus.

    A corpus with ``n`` subjects and ``p`` pipelines contains ``n`` bona fide
    images and ``p * n*(n-1)/2`` morphs (one per unordered subject pair per
    pipeline).
    """

    num_subjects: int
    image_size: int = 270
    pipelines: Tuple[MorphPipeline, ...] = field(default_factory=default_pipelines)
    seed: int = 0
    sensor_strength: float = 0.02
    grain: float = 0.02

    def __post_init__(self):
        if self.num_subjects < 1:
            raise ValueError("num_subjects must be >= 1")
        if self.image_size < 32:
            raise ValueError("image_size must be >= 32")
        if self.sensor_strength < 0 or self.grain < 0:
            raise ValueError("sensor_strength and grain must be >= 0")
        ids = [p.pipeline_id for p in self.pipelines]
        if len(set(ids)) != len(ids):
            raise ValueError("pipeline ids must be distinct: %r" % ids)
        if len(self.pipelines) < 2:
            raise ValueError("need at least 2 distinct pipelines")

    @property
    def num_morphs(self) -> int:
        n = self.num_subjects
        return len(self.pipelines) * (n * (n - 1)) // 2

    @property
    def num_images(self) -> int:
        return self.num_subjects + self.num_morphs


def render_subject(rng: np.random.Generator, size: int):
    """Render one synthetic face: smooth skin texture plus eye/mouth geometry.

    Returns (image, eye_left, eye_right) with the image float64 in [0, 1]
    and eye coordinates in (x, y) pixel units.
    """
    # Smooth per-subject skin texture: low-pass filtered noise.
    base = rng.standard_normal((size, size))
    texture = gaussian_filter(base, sigma=size / 16.0, mode="reflect")
    lo, hi = texture.min(), texture.max()
    texture = 0.25 + 0.5 * (texture - lo) / max(hi - lo, 1e-12)

    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cx = size * (0.5 + 0.04 * (rng.random() - 0.5))
    cy = size * (0.52 + 0.04 * (rng.random() - 0.5))
    ax = size * (0.30 + 0.04 * rng.random())
    ay = size * (0.38 + 0.04 * rng.random())
    face = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
    face_mask = np.clip(1.2 - face, 0.0, 1.0)
    face_mask = gaussian_filter(face_mask, sigma=size / 64.0, mode="reflect")
    face_mask = np.clip(face_mask, 0.0, 1.0)

    img = 0.15 + 0.05 * texture  # dim background
    img = img * (1 - face_mask) + texture * face_mask

    # Eyes: dark gaussian blobs fixed at the canonical alignment positions,
    # so downstream eye alignment is the identity warp and pipeline traces
    # survive preprocessing unresampled.
    eye_y = 0.35 * size
    eye_l = (0.35 * size, eye_y)
    eye_r = (0.65 * size, eye_y)
    sig_e = size * (0.020 + 0.006 * rng.random())
    for ex, ey in (eye_l, eye_r):
        blob = np.exp(-(((xx - ex) ** 2 + (yy - ey) ** 2) / (2 * sig_e ** 2)))
        img -= 0.45 * blob

    # Mouth: soft dark horizontal bar below center.
    my = cy + 0.45 * ay
    mw = 0.45 * ax
    bar = np.exp(-(((yy - my) / (size * 0.015)) ** 2)) * np.clip(1 - ((xx - cx) / mw) ** 2, 0, 1)
    img -= 0.30 * bar

    return np.clip(img, 0.0, 1.0), eye_l, eye_r


def _post_quantize(img: np.ndarray, step: float) -> np.ndarray:
    """Blockwise 8x8 DCT coefficient quantization, a compression-like trace."""
    n = 8
    h, w = img.shape
    ph, pw = (-h) % n, (-w) % n
    padded = np.pad(img, ((0, ph), (0, pw)), mode="edge")
    hh, ww = padded.shape
    blocks = padded.reshape(hh // n, n, ww // n, n).transpose(0, 2, 1, 3)
    coef = sfft.dctn(blocks, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / step) * step
    rec = sfft.idctn(coef, axes=(-2, -1), norm="ortho")
    out = rec.transpose(0, 2, 1, 3).reshape(hh, ww)[:h, :w]
    return np.clip(out, 0.0, 1.0)


def _post_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(gaussian_filter(img, sigma=sigma, mode="reflect"), 0.0, 1.0)


def _post_splice(img: np.ndarray, band: float) -> np.ndarray:
    """Rewrite an annular frequency band: attenuate mid frequencies and boost
    the top band, leaving a distinctive spectral notch."""
    h, w = img.shape
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    rad = np.sqrt(fy ** 2 + fx ** 2) / 0.5  # normalized to [0, ~1.4]
    spec = np.fft.fft2(img)
    gain = np.ones_like(rad)
    gain[(rad >= band) & (rad < 2 * band)] = 0.05
    gain[rad >= 2 * band] = 1.6
    out = np.fft.ifft2(spec * gain).real
    return np.clip(out, 0.0, 1.0)


_POST_FNS = {"quantize": _post_quantize, "blur": _post_blur, "splice": _post_splice}


def synth_morph(a: np.ndarray, b: np.ndarray, alpha: Optional[float] = None,
                pipeline: Optional[MorphPipeline] = None) -> np.ndarray:
    """post_process(alpha * a + (1 - alpha) * b) per the pipeline descriptor.

    ``alpha`` defaults to the pipeline's blend weight; no pipeline means a
    pure blend with no post-process.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("parent shapes differ: %r vs %r" % (a.shape, b.shape))
    if alpha is None:
        alpha = pipeline.alpha if pipeline is not None else 0.5
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must lie in [0, 1], got %r" % alpha)
    blend = alpha * a + (1.0 - alpha) * b
    if pipeline is None or pipeline.post == "none":
        return blend
    return _POST_FNS[pipeline.post](blend, pipeline.param)


def _capture(img: np.ndarray, sensor: np.ndarray,
             spec: SyntheticCorpusSpec, rng: np.random.Generator) -> np.ndarray:
    """Simulated acquisition: multiplicative sensor pattern plus shot grain."""
    noisy = img * (1.0 + spec.sensor_strength * sensor)
    noisy = noisy + spec.grain * rng.standard_normal(img.shape)
    return np.clip(noisy, 0.0, 1.0)


def _write_png(path: str, img: np.ndarray):
    u8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    if not cv2.imwrite(path, u8):
        raise OSError("failed to write image: %s" % path)


def synth_generate_corpus(spec: SyntheticCorpusSpec, out_dir: str,
                          manifest_name: str = "manifest.jsonl") -> DatasetManifest:
    """Generate the corpus on disk and return its manifest.

    Layout: ``out_dir/bona_fide/subject_XXX.png`` plus one directory per
    pipeline id holding ``morph_XXX_YYY.png``.  The manifest (JSONL, with eye
    coordinates) is written to ``out_dir/manifest.jsonl``.
    """
    rng = np.random.default_rng(spec.seed)
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError("output directory not writable: %s" % out_dir)

    # One sensor pattern for the whole corpus: bona fide captures carry it
    # intact, morphs only through their blended (already captured) parents.
    sensor = rng.standard_normal((spec.image_size, spec.image_size))

    subjects = []
    records = []
    bf_dir = os.path.join(out_dir, BONA_FIDE)
    os.makedirs(bf_dir, exist_ok=True)
    for i in range(spec.num_subjects):
        img, eye_l, eye_r = render_subject(rng, spec.image_size)
        img = _capture(img, sensor, spec, rng)
        path = os.path.join(bf_dir, "subject_%03d.png" % i)
        _write_png(path, img)
        subjects.append((img, eye_l, eye_r))
        records.append(SampleRecord(
            path=path, dataset=Dataset.SYNTHETIC, class_label=BONA_FIDE,
            width=spec.image_size, height=spec.image_size,
            eye_left=eye_l, eye_right=eye_r))

    for pipe in spec.pipelines:
        pdir = os.path.join(out_dir, pipe.pipeline_id)
        os.makedirs(pdir, exist_ok=True)
        for i, j in itertools.combinations(range(spec.num_subjects), 2):
            img_a, eyes_la, eyes_ra = subjects[i]
            img_b, eyes_lb, eyes_rb = subjects[j]
            morph = synth_morph(img_a, img_b, pipeline=pipe)
            path = os.path.join(pdir, "morph_%03d_%03d.png" % (i, j))
            _write_png(path, morph)
            # The blended face's landmarks are the same blend of the parents'.
            al = pipe.alpha
            eye_l = (al * eyes_la[0] + (1 - al) * eyes_lb[0],
                     al * eyes_la[1] + (1 - al) * eyes_lb[1])
            eye_r = (al * eyes_ra[0] + (1 - al) * eyes_rb[0],
                     al * eyes_ra[1] + (1 - al) * eyes_rb[1])
            records.append(SampleRecord(
                path=path, dataset=Dataset.SYNTHETIC, class_label=pipe.pipeline_id,
                width=spec.image_size, height=spec.image_size,
                eye_left=eye_l, eye_right=eye_r))

    manifest = DatasetManifest.from_records("synthetic", records)
    save_manifest(manifest, os.path.join(out_dir, manifest_name), relative_to=out_dir)
    return manifest

"""Learned noise-residual extraction.

A small fully-convolutional network maps an image to a residual map that
emphasizes processing artifacts.  It is trained in a siamese fashion on
patch pairs: residuals of patches from the same source should be close,
residuals from different sources far apart.  The pairwise loss is a
logistic head on the mean squared residual distance.
"""

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .maps import ResidualMap


@dataclass(frozen=True)
class ResidualNetConfig:
    layers: int = 8
    channels: int = 32
    kernel: int = 3
    in_channels: int = 1
    patch_size: int = 48
    pairs_per_source: int = 24
    lr: float = 1e-3
    epochs: int = 2
    batch_size: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.layers < 3:
            raise ValueError("layers must be >= 3")
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd to preserve shape")
        if self.patch_size < 8:
            raise ValueError("patch_size must be >= 8")


class ResidualNet(nn.Module):
    """Shape-preserving conv stack: image in, residual map out."""

    def __init__(self, config: ResidualNetConfig):
        super().__init__()
        c, k = config.channels, config.kernel
        pad = k // 2
        layers: List[nn.Module] = [nn.Conv2d(config.in_channels, c, k, padding=pad),
                                   nn.ReLU()]
        for _ in range(config.layers - 2):
            layers += [nn.Conv2d(c, c, k, padding=pad), nn.ReLU()]
        layers.append(nn.Conv2d(c, config.in_channels, k, padding=pad))
        self.body = nn.Sequential(*layers)
        self.config = config
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class PairwiseDistanceLoss(nn.Module):
    """BCE on sigmoid(alpha - beta * mean squared residual distance)."""

    def __init__(self):
        super().__init__()
        self.alpha = nn.Parameter(torch.tensor(1.0, dtype=torch.float64))
        self.beta = nn.Parameter(torch.tensor(1.0, dtype=torch.float64))

    def forward(self, res_a: torch.Tensor, res_b: torch.Tensor,
                same: torch.Tensor) -> torch.Tensor:
        d = ((res_a - res_b) ** 2).mean(dim=(1, 2, 3))
        logits = self.alpha - self.beta * d
        return nn.functional.binary_cross_entropy_with_logits(logits, same)


def build_patch_pairs(images_by_source: dict,
                      config: ResidualNetConfig,
                      rng: np.random.Generator) -> List[Tuple[np.ndarray, np.ndarray, int]]:
    """Sample balanced same-source / cross-source patch pairs.

    ``images_by_source`` maps a source identifier to a list of 2-D images.
    Patches are cut at seeded random offsets. Needs at least two sources.
    """
    sources = sorted(images_by_source)
    if len(sources) < 2:
        raise ValueError("degenerate training set: need at least two sources")
    ps = config.patch_size
    for s in sources:
        for img in images_by_source[s]:
            if img.shape[0] % ps or img.shape[1] % ps:
                raise ValueError("patch size %d must divide image shape %r (source %r)"
                                 % (ps, img.shape, s))

    def cut(img):
        top = rng.integers(0, img.shape[0] - ps + 1)
        left = rng.integers(0, img.shape[1] - ps + 1)
        return np.asarray(img[top:top + ps, left:left + ps], dtype=np.float64)

    pairs = []
    for s in sources:
        pool = images_by_source[s]
        others = [t for t in sources if t != s]
        for _ in range(config.pairs_per_source):
            img_a = pool[rng.integers(0, len(pool))]
            img_b = pool[rng.integers(0, len(pool))]
            pairs.append((cut(img_a), cut(img_b), 1))
            t = others[rng.integers(0, len(others))]
            pool_t = images_by_source[t]
            img_c = pool_t[rng.integers(0, len(pool_t))]
            pairs.append((cut(img_a), cut(img_c), 0))
    order = rng.permutation(len(pairs))
    return [pairs[i] for i in order]


class TrainedResidualNet:
    """A trained extractor: wraps the net with its config and loss trace."""

    def __init__(self, net: ResidualNet, config: ResidualNetConfig, history=None):
        self.net = net
        self.config = config
        self.history = history or []

    def extract(self, image: np.ndarray) -> ResidualMap:
        img = np.asarray(image, dtype=np.float64)
        if img.ndim != 2:
            raise ValueError("expected a 2-D luminance image, got shape %r" % (img.shape,))
        self.net.eval()
        with torch.no_grad():
            x = torch.from_numpy(img)[None, None, :, :]
            out = self.net(x)[0, 0].numpy()
        return ResidualMap(values=out, kind="learned", domain="spatial")


def residual_net_extract(image: np.ndarray, extractor: TrainedResidualNet) -> ResidualMap:
    """Learned residual map for one image; same spatial shape as the input."""
    return extractor.extract(image)


def train_residual_net(pairs: Sequence[Tuple[np.ndarray, np.ndarray, int]],
                       config: ResidualNetConfig = ResidualNetConfig()) -> TrainedResidualNet:
    """Train the extractor on prepared patch pairs.

    Pair order is taken as given (shuffle when building); batching walks the
    sequence in fixed chunks so runs reproduce exactly.
    """
    labels = {p[2] for p in pairs}
    if labels != {0, 1}:
        raise ValueError("degenerate training set: need both same- and "
                         "cross-source pairs")
    shapes = {p[0].shape for p in pairs} | {p[1].shape for p in pairs}
    if len(shapes) != 1:
        raise ValueError("all patches must share one shape, got %s" % sorted(shapes))

    torch.manual_seed(config.seed)
    net = ResidualNet(config)
    head = PairwiseDistanceLoss()
    opt = torch.optim.Adam(list(net.parameters()) + list(head.parameters()), lr=config.lr)

    a = torch.from_numpy(np.stack([p[0] for p in pairs])[:, None]).double()
    b = torch.from_numpy(np.stack([p[1] for p in pairs])[:, None]).double()
    y = torch.tensor([float(p[2]) for p in pairs], dtype=torch.float64)

    history = []
    n = len(pairs)
    batches = math.ceil(n / config.batch_size)
    net.train()
    for epoch in range(config.epochs):
        total = 0.0
        for i in range(batches):
            sl = slice(i * config.batch_size, (i + 1) * config.batch_size)
            opt.zero_grad()
            loss = head(net(a[sl]), net(b[sl]), y[sl])
            loss.backward()
            opt.step()
            total += float(loss.detach()) * (min(n, sl.stop) - sl.start)
        history.append(total / n)
    return TrainedResidualNet(net, config, history)

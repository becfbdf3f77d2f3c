"""Backbones turning residual maps into feature grids.

The compact backbone is a six-conv bias-free stack with three stride-2
stages, so an n-pixel side maps to floor(n/8) grid cells and an all-zero
residual maps to all-zero features.  Heavier torchvision backbones can be
requested by name for full-scale runs; they change the grid geometry but
not the downstream contracts.
"""

from typing import Tuple

import numpy as np
import torch
from torch import nn

from ..residual.maps import ResidualMap
from .features import FeatureGrid

BACKBONES = ("desk", "vgg16", "resnet50")


class DeskBackbone(nn.Module):
    """1 -> 32 -> 32 -> 64 -> 64 -> 64 -> 64 channels, stride 8 overall.

    No biases and no normalization anywhere, so zero input gives zero
    output.  Downsampling convs use kernel 2 stride 2: an n-pixel side
    becomes exactly floor(n/2).
    """

    out_channels = 64
    stride = 8

    def __init__(self, in_channels: int = 1):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, 32, 3, padding=1, bias=False), nn.ReLU(),
            nn.Conv2d(32, 32, 2, stride=2, bias=False), nn.ReLU(),
            nn.Conv2d(32, 64, 3, padding=1, bias=False), nn.ReLU(),
            nn.Conv2d(64, 64, 2, stride=2, bias=False), nn.ReLU(),
            nn.Conv2d(64, 64, 3, padding=1, bias=False), nn.ReLU(),
            nn.Conv2d(64, 64, 2, stride=2, bias=False),
        )
        for m in self.body:
            if isinstance(m, nn.Conv2d):
                # variance-preserving init; the default decays activations
                # roughly 2x per layer, starving the coder downstream
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


def build_backbone(name: str, in_channels: int = 1) -> nn.Module:
    """Construct a backbone by config name.

    ``desk`` is the compact default.  ``vgg16`` and ``resnet50`` wrap the
    torchvision feature extractors (randomly initialized, first conv adapted
    to the requested channel count); they carry ``out_channels`` and
    ``stride`` attributes like the compact one.
    """
    if name == "desk":
        return DeskBackbone(in_channels)
    if name == "vgg16":
        from torchvision.models import vgg16
        net = vgg16(weights=None).features
        if in_channels != 3:
            old = net[0]
            net[0] = nn.Conv2d(in_channels, old.out_channels, old.kernel_size,
                               padding=old.padding)
        net.out_channels = 512
        net.stride = 32
        return net.double()
    if name == "resnet50":
        from torchvision.models import resnet50
        m = resnet50(weights=None)
        if in_channels != 3:
            m.conv1 = nn.Conv2d(in_channels, 64, 7, stride=2, padding=3, bias=False)
        net = nn.Sequential(m.conv1, m.bn1, m.relu, m.maxpool,
                            m.layer1, m.layer2, m.layer3, m.layer4)
        net.out_channels = 2048
        net.stride = 32
        return net.double()
    raise ValueError("unknown backbone %r (expected one of %s)" % (name, BACKBONES))


def grid_from_activation(act: torch.Tensor) -> FeatureGrid:
    """Flatten a (c, h, w) activation into an (h*w, c) feature grid."""
    c, h, w = act.shape
    entries = act.permute(1, 2, 0).reshape(h * w, c).numpy()
    return FeatureGrid(entries=entries, grid_shape=(h, w))


def _grid_for(residual: ResidualMap, net: nn.Module) -> FeatureGrid:
    v = residual.values
    stride = getattr(net, "stride", 8)
    if min(v.shape) < stride:
        raise ValueError("residual shape %r incompatible with backbone stride %d"
                         % (v.shape, stride))
    net.eval()
    with torch.no_grad():
        x = torch.from_numpy(v)[None, None, :, :].double()
        act = net(x)[0]
    return grid_from_activation(act)


def backbone_features(prnu: ResidualMap, learned: ResidualMap,
                      backbone) -> Tuple[FeatureGrid, FeatureGrid]:
    """Run the two residual maps through their backbone branches.

    ``backbone`` is either a single module (weights shared by both
    branches) or a (module, module) pair.
    """
    if isinstance(backbone, nn.Module):
        net_a = net_b = backbone
    else:
        net_a, net_b = backbone
    return _grid_for(prnu, net_a), _grid_for(learned, net_b)

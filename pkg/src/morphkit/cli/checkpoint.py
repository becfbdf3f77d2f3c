"""Versioned single-file checkpoints for models and memory snapshots."""

import dataclasses
from typing import Optional

import torch

from ..fewshot.apl import AplConfig, AplModel
from ..fewshot.memory import MemoryStore
from ..fusion.model import FbcFusionModel, FbcModelConfig
from ..residual.learned import ResidualNet, ResidualNetConfig, TrainedResidualNet

SNAPSHOT_VERSION = 1


class VersionError(IOError):
    """Checkpoint written by a newer format than this build understands."""


def snapshot_save(path: str, kind: str, state: dict, config: Optional[dict] = None,
                  seed: Optional[int] = None):
    torch.save({
        "format_version": SNAPSHOT_VERSION,
        "kind": kind,
        "state": state,
        "config": config or {},
        "seed": seed,
    }, path)


def snapshot_load(path: str, expected_kind: Optional[str] = None) -> dict:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    version = blob.get("format_version")
    if version is None or version > SNAPSHOT_VERSION:
        raise VersionError("checkpoint %s has format version %r, supported <= %d"
                           % (path, version, SNAPSHOT_VERSION))
    if expected_kind is not None and blob.get("kind") != expected_kind:
        raise VersionError("checkpoint %s holds %r, expected %r"
                           % (path, blob.get("kind"), expected_kind))
    return blob


def save_residual_extractor(extractor: TrainedResidualNet, path: str):
    snapshot_save(path, kind="residual_net",
                  state={"net": extractor.net.state_dict(),
                         "history": extractor.history},
                  config=dataclasses.asdict(extractor.config),
                  seed=extractor.config.seed)


def load_residual_extractor(path: str) -> TrainedResidualNet:
    blob = snapshot_load(path, expected_kind="residual_net")
    config = ResidualNetConfig(**blob["config"])
    net = ResidualNet(config)
    net.load_state_dict(blob["state"]["net"])
    net.eval()
    return TrainedResidualNet(net, config, blob["state"].get("history"))


def save_fbc_model(model: FbcFusionModel, path: str):
    snapshot_save(path, kind="fbc_model",
                  state={"model": model.state_dict()},
                  config=dataclasses.asdict(model.config),
                  seed=model.config.seed)


def load_fbc_model(path: str) -> FbcFusionModel:
    blob = snapshot_load(path, expected_kind="fbc_model")
    config = FbcModelConfig(**blob["config"])
    model = FbcFusionModel(config)
    model.load_state_dict(blob["state"]["model"])
    model.eval()
    return model


def save_apl(model: AplModel, memory: MemoryStore, path: str):
    snapshot_save(path, kind="apl",
                  state={"model": model.state_dict(),
                         "memory": memory.to_dict()},
                  config=dataclasses.asdict(model.config),
                  seed=model.config.seed)


def load_apl(path: str):
    blob = snapshot_load(path, expected_kind="apl")
    config = AplConfig(**blob["config"])
    model = AplModel(config)
    model.load_state_dict(blob["state"]["model"])
    model.eval()
    memory = MemoryStore.from_dict(blob["state"]["memory"])
    return model, memory

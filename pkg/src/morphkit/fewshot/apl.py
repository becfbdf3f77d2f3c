"""Adaptive posterior learning over fused descriptors.

The model embeds each incoming descriptor, retrieves its nearest stored
examples, and decodes a class posterior from the retrieved set.  Training
is episodic: each batch is classified against the memory state frozen at
batch start, the encoder/decoder take one gradient step, and samples whose
pre-update true-class probability fell below chance are written to memory
(their pre-update embeddings, append-only).  Within an episode memory
grows quickly while the stream still surprises the model and saturates
once it stops.  Each training epoch replays the data as a fresh episode,
so the store returned at the end holds only rows written by the final
encoder.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from .decoder import DecoderConfig, RelationalDecoder, sentinel_neighbors
from .encoder import EncoderConfig, VectorEncoder
from .memory import MemoryStore, memory_should_write


@dataclass(frozen=True)
class AplConfig:
    num_classes: int = 2
    input_dim: int = 64
    embed_dim: int = 64
    metric: str = "euclidean"
    k: int = 5
    encoder_blocks: int = 15
    decoder_hidden: int = 128
    decoder_heads: int = 4
    decoder_repeats: int = 5
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(input_dim=self.input_dim, embed_dim=self.embed_dim,
                             blocks=self.encoder_blocks)

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(num_classes=self.num_classes, embed_dim=self.embed_dim,
                             hidden=self.decoder_hidden, heads=self.decoder_heads,
                             repeats=self.decoder_repeats)


class AplModel(nn.Module):
    def __init__(self, config: AplConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.encoder = VectorEncoder(config.encoder_config())
        self.decoder = RelationalDecoder(config.decoder_config())

    def new_memory(self) -> MemoryStore:
        return MemoryStore(metric=self.config.metric, k=self.config.k)

    def embed(self, z: torch.Tensor) -> torch.Tensor:
        return self.encoder(z)

    def _neighbor_tensors(self, emb: torch.Tensor, memory: MemoryStore):
        """Retrieve neighbors for an embedded batch.

        Selection runs on detached embeddings; distances are recomputed on
        the live tensors so gradients reach the encoder through both the
        query tokens and the distance features.
        """
        b = emb.shape[0]
        cfg = self.config
        if len(memory) == 0:
            return sentinel_neighbors(b, cfg.embed_dim, cfg.num_classes)
        idx, _ = memory.neighbors(emb.detach().numpy())
        rows_emb, rows_lab = memory.rows(idx)
        neigh = torch.from_numpy(rows_emb)  # (B, K, E), constants
        onehot = torch.nn.functional.one_hot(
            torch.from_numpy(rows_lab), cfg.num_classes).double()
        if cfg.metric == "euclidean":
            dist = torch.linalg.norm(emb[:, None, :] - neigh, dim=-1)
        else:
            qn = torch.linalg.norm(emb, dim=-1, keepdim=True)
            mn = torch.linalg.norm(neigh, dim=-1)
            dist = 1.0 - (neigh @ emb[:, :, None]).squeeze(-1) / (qn * mn).clamp_min(1e-12)
        return neigh, onehot, dist, None

    def logits(self, z: torch.Tensor, memory: MemoryStore) -> torch.Tensor:
        emb = self.embed(z)
        neigh, onehot, dist, squashed = self._neighbor_tensors(emb, memory)
        return self.decoder(emb, neigh, onehot, dist, squashed=squashed)


def train_episode(model: AplModel, opt: torch.optim.Optimizer,
                  z_batch: torch.Tensor, y_batch: torch.Tensor,
                  memory: MemoryStore) -> Tuple[float, np.ndarray, int]:
    """One episodic step.

    The batch is classified against the memory state at entry; the encoder
    and decoder take one optimizer step; surprising samples (pre-update
    true-class probability strictly below chance) are appended to memory
    with their pre-update embeddings.  Returns (loss, pre-update
    probabilities, number of writes).
    """
    model.train()
    emb = model.embed(z_batch)
    neigh, onehot, dist, squashed = model._neighbor_tensors(emb, memory)
    logits = model.decoder(emb, neigh, onehot, dist, squashed=squashed)
    loss = nn.functional.cross_entropy(logits, y_batch)

    probs = torch.softmax(logits, dim=1).detach().numpy()
    emb_pre = emb.detach().numpy()

    opt.zero_grad()
    loss.backward()
    opt.step()

    writes = 0
    for i in range(len(y_batch)):
        step = memory.advance_step()
        if memory_should_write(probs[i], int(y_batch[i])):
            memory.write(emb_pre[i], int(y_batch[i]), step=step)
            writes += 1
    return float(loss.detach()), probs, writes


def _batch_slices(n: int, batch_size: int) -> List[np.ndarray]:
    """Contiguous index blocks; a trailing singleton merges into the previous
    block so batch statistics stay defined."""
    idx = np.arange(n)
    blocks = [idx[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(blocks) > 1 and len(blocks[-1]) == 1:
        blocks[-2] = np.concatenate([blocks[-2], blocks[-1]])
        blocks.pop()
    return blocks


def train_apl(z: np.ndarray, y: np.ndarray, config: AplConfig,
              memory: Optional[MemoryStore] = None) -> Tuple[AplModel, MemoryStore, List[dict]]:
    """Fit the episodic model on a descriptor set.

    Every epoch replays the (reshuffled, seeded) data as one fresh episode:
    memory restarts from the supplied seed state, empty by default, so rows
    written by stale early-epoch encoders never survive into the returned
    store.  The learning rate is cosine-annealed to zero so the final state
    is a settled one.  Returns the model, the last episode's memory and a
    per-epoch history (loss, accuracy, writes, memory size).
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if z.ndim != 2 or len(z) != len(y):
        raise ValueError("z must be (N, dim) aligned with y")
    present = np.unique(y)
    if present.min() < 0 or present.max() >= config.num_classes:
        raise ValueError("labels outside [0, %d)" % config.num_classes)

    model = AplModel(config)
    seed_mem = memory if memory is not None else model.new_memory()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=config.epochs)
    rng = np.random.default_rng(config.seed)

    zt = torch.from_numpy(z)
    yt = torch.from_numpy(y)
    history: List[dict] = []
    mem = MemoryStore.from_dict(seed_mem.to_dict())
    for epoch in range(config.epochs):
        mem = MemoryStore.from_dict(seed_mem.to_dict())
        order = rng.permutation(len(y))
        total_loss, correct, writes = 0.0, 0, 0
        for block in _batch_slices(len(y), config.batch_size):
            idx = order[block]
            loss, probs, w = train_episode(model, opt, zt[idx], yt[idx], mem)
            total_loss += loss * len(idx)
            correct += int((probs.argmax(axis=1) == y[idx]).sum())
            writes += w
        sched.step()
        history.append({
            "epoch": epoch,
            "loss": total_loss / len(y),
            "accuracy": correct / len(y),
            "writes": writes,
            "memory_size": len(mem),
        })
    model.eval()
    return model, mem, history


def predict(model: AplModel, memory: MemoryStore,
            z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Class predictions and posteriors for a descriptor batch."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    model.eval()
    with torch.no_grad():
        logits = model.logits(torch.from_numpy(z), memory)
        probs = torch.softmax(logits, dim=1).numpy()
    return probs.argmax(axis=1), probs

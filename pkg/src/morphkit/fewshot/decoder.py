"""Relational decoder over retrieved neighbors.

Each retrieved neighbor becomes a token: the query embedding, the neighbor
embedding, the neighbor's one-hot label and the squashed query-neighbor
distance d/(1+d), projected to a working width.  A stack of residual blocks
(two multi-head self-attention stages over the neighbor axis, then an MLP)
lets neighbors exchange information; per-neighbor class logits are finally
reduced by a softmax over negated distances, so nearer neighbors carry more
weight.  An empty memory is represented by a sentinel pseudo-neighbor with
a zero embedding, a uniform label and squashed distance exactly 1.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn


@dataclass(frozen=True)
class DecoderConfig:
    num_classes: int = 2
    embed_dim: int = 64
    hidden: int = 128
    heads: int = 4
    repeats: int = 5

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.hidden % self.heads:
            raise ValueError("hidden (%d) must be divisible by heads (%d)"
                             % (self.hidden, self.heads))
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


class _RelationBlock(nn.Module):
    def __init__(self, hidden: int, heads: int):
        super().__init__()
        self.attn_local = nn.MultiheadAttention(hidden, heads, batch_first=True)
        self.attn_pair = nn.MultiheadAttention(hidden, heads, batch_first=True)
        self.mlp = nn.Sequential(nn.Linear(hidden, hidden), nn.ReLU(),
                                 nn.Linear(hidden, hidden))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        h = h + self.attn_local(h, h, h, need_weights=False)[0]
        h = h + self.attn_pair(h, h, h, need_weights=False)[0]
        return h + self.mlp(h)


class RelationalDecoder(nn.Module):
    def __init__(self, config: DecoderConfig = DecoderConfig()):
        super().__init__()
        self.config = config
        in_dim = 2 * config.embed_dim + config.num_classes + 1
        self.proj = nn.Linear(in_dim, config.hidden)
        self.blocks = nn.ModuleList(
            _RelationBlock(config.hidden, config.heads) for _ in range(config.repeats))
        self.out = nn.Linear(config.hidden, config.num_classes)
        self.double()

    def forward(self, query: torch.Tensor, neigh_emb: torch.Tensor,
                neigh_onehot: torch.Tensor, dist: torch.Tensor,
                squashed: torch.Tensor = None) -> torch.Tensor:
        """Class logits for a query given its retrieved neighbors.

        query (B, E); neigh_emb (B, K, E); neigh_onehot (B, K, C);
        dist (B, K) raw distances used for both the squashed input feature
        and the reduction weights.  ``squashed`` overrides d/(1+d) when the
        caller needs the sentinel encoding.
        """
        b, k, _ = neigh_emb.shape
        if squashed is None:
            squashed = dist / (1.0 + dist)
        tokens = torch.cat([
            query[:, None, :].expand(b, k, query.shape[-1]),
            neigh_emb,
            neigh_onehot,
            squashed[:, :, None],
        ], dim=-1)
        h = self.proj(tokens)
        for block in self.blocks:
            h = block(h)
        per_neighbor = self.out(h)  # (B, K, C)
        weights = torch.softmax(-dist, dim=1)
        return (weights[:, :, None] * per_neighbor).sum(dim=1)


def sentinel_neighbors(batch: int, embed_dim: int, num_classes: int):
    """Cold-start pseudo-neighbor: zero embedding, uniform label, squashed 1."""
    emb = torch.zeros(batch, 1, embed_dim, dtype=torch.float64)
    onehot = torch.full((batch, 1, num_classes), 1.0 / num_classes, dtype=torch.float64)
    dist = torch.zeros(batch, 1, dtype=torch.float64)
    squashed = torch.ones(batch, 1, dtype=torch.float64)
    return emb, onehot, dist, squashed


def decode(query, neighbors, decoder: RelationalDecoder):
    """Class probabilities for one query given retrieved neighbors.

    ``neighbors`` is a list of (row, distance) pairs as returned by a
    memory query; an empty list takes the cold-start sentinel path.
    Probabilities are non-negative and sum to 1.
    """
    cfg = decoder.config
    q = torch.from_numpy(np.asarray(query, dtype=np.float64).ravel())[None, :]
    decoder.eval()
    with torch.no_grad():
        if not neighbors:
            emb, onehot, dist, squashed = sentinel_neighbors(
                1, cfg.embed_dim, cfg.num_classes)
        else:
            emb = torch.from_numpy(np.stack(
                [np.asarray(r.embedding, dtype=np.float64) for r, _ in neighbors]))[None]
            labels = torch.tensor([int(r.label) for r, _ in neighbors])
            onehot = nn.functional.one_hot(labels, cfg.num_classes).double()[None]
            dist = torch.tensor([[float(d) for _, d in neighbors]], dtype=torch.float64)
            squashed = None
        logits = decoder(q, emb, onehot, dist, squashed=squashed)
        probs = torch.softmax(logits, dim=1)[0]
    return probs.numpy()

from .memory import (
    METRICS,
    MemoryRow,
    MemoryStore,
    memory_query,
    memory_should_write,
    memory_write,
)
from .encoder import EncoderConfig, VectorEncoder, encode, most_square_grid
from .decoder import DecoderConfig, RelationalDecoder, decode, sentinel_neighbors
from .apl import AplConfig, AplModel, predict, train_apl, train_episode

__all__ = [
    "METRICS", "MemoryRow", "MemoryStore",
    "memory_query", "memory_should_write", "memory_write",
    "EncoderConfig", "VectorEncoder", "encode", "most_square_grid",
    "DecoderConfig", "RelationalDecoder", "decode", "sentinel_neighbors",
    "AplConfig", "AplModel", "predict", "train_apl", "train_episode",
]

from .checkpoint import (
    SNAPSHOT_VERSION,
    VersionError,
    load_apl,
    load_fbc_model,
    load_residual_extractor,
    save_apl,
    save_fbc_model,
    save_residual_extractor,
    snapshot_load,
    snapshot_save,
)
from .pipeline import AplParams, RunConfig, StageError, resolve_out_dir, run_pipeline
from .store import (
    FORMAT_VERSION,
    FeatureStore,
    StoreError,
    feature_store_read,
    feature_store_write,
)

__all__ = [
    "SNAPSHOT_VERSION",
    "VersionError",
    "load_apl",
    "load_fbc_model",
    "load_residual_extractor",
    "save_apl",
    "save_fbc_model",
    "save_residual_extractor",
    "snapshot_load",
    "snapshot_save",
    "AplParams",
    "RunConfig",
    "StageError",
    "resolve_out_dir",
    "run_pipeline",
    "FORMAT_VERSION",
    "FeatureStore",
    "StoreError",
    "feature_store_read",
    "feature_store_write",
]

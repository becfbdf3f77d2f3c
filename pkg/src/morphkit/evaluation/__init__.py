from .metrics import (
    ConfusionMatrix,
    ScoreSet,
    compute_accuracy,
    compute_acer,
    compute_apcer_bpcer,
    compute_eer,
    confusion_matrix,
)
from .report import EvalReport, build_report
from .grid import (
    GRID_PAIRINGS,
    GRID_STRATEGIES,
    GridResult,
    derive_spectral_stores,
    fusion_grid_experiment,
    pairing_name,
)

__all__ = [
    "ConfusionMatrix", "ScoreSet", "compute_accuracy", "compute_acer",
    "compute_apcer_bpcer", "compute_eer", "confusion_matrix",
    "EvalReport", "build_report",
    "GRID_PAIRINGS", "GRID_STRATEGIES", "GridResult", "derive_spectral_stores",
    "fusion_grid_experiment", "pairing_name",
]

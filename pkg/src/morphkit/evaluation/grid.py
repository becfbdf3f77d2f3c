"""Fusion-strategy comparison grid.

Six residual pairings (spatial/spectral crossings of the two extractor
kinds) each fused by five strategies and scored with a linear probe on the
binary bona-fide-vs-morph task.  Baseline strategies fuse the flattened
residual maps directly; the coding strategy trains the bilinear fusion
model on the pairing and probes its pooled codes.
"""

import json
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..datamodel.protocol import ProtocolSplit
from ..fusion.baselines import fit_linear_probe, fuse_arrays, select_cc_weight
from ..fusion.model import FbcModelConfig, extract_fused_batch, fit_fbc_model
from ..residual.maps import ResidualMap, spectral_transform
from .metrics import compute_accuracy

# Row order fixed by convention: each entry is ((kind, domain), (kind, domain)).
GRID_PAIRINGS = (
    (("prnu", "spatial"), ("prnu", "spectral")),
    (("learned", "spatial"), ("learned", "spectral")),
    (("prnu", "spatial"), ("learned", "spectral")),
    (("prnu", "spectral"), ("learned", "spatial")),
    (("prnu", "spectral"), ("learned", "spectral")),
    (("prnu", "spatial"), ("learned", "spatial")),
)

GRID_STRATEGIES = ("concat", "sum", "max", "cc", "fbc")


def pairing_name(pairing) -> str:
    (ka, da), (kb, db) = pairing
    return "%s:%s+%s:%s" % (ka, da, kb, db)


@dataclass(frozen=True)
class GridResult:
    rows: Tuple[str, ...]
    strategies: Tuple[str, ...]
    accuracies: np.ndarray  # (rows, strategies)

    def cell(self, row: str, strategy: str) -> float:
        return float(self.accuracies[self.rows.index(row),
                                     self.strategies.index(strategy)])

    def to_dict(self) -> dict:
        return {
            "rows": list(self.rows),
            "strategies": list(self.strategies),
            "accuracies": [[round(float(a), 6) for a in row]
                           for row in self.accuracies],
        }

    def save(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=2)
            f.write("\n")


def derive_spectral_stores(stores: Dict[Tuple[str, str], Dict[str, np.ndarray]]):
    """Fill in spectral stores computed from the spatial ones."""
    out = dict(stores)
    for kind in ("prnu", "learned"):
        if (kind, "spectral") not in out and (kind, "spatial") in out:
            out[(kind, "spectral")] = {
                sid: spectral_transform(ResidualMap(m, kind, "spatial")).values
                for sid, m in out[(kind, "spatial")].items()}
    return out


def _gather(store: Dict[str, np.ndarray], records) -> np.ndarray:
    try:
        return np.stack([store[r.sample_id] for r in records])
    except KeyError as e:
        raise KeyError("store missing residual for sample %s" % e) from None


def fusion_grid_experiment(split: ProtocolSplit,
                           stores: Dict[Tuple[str, str], Dict[str, np.ndarray]],
                           strategies: Sequence[str] = GRID_STRATEGIES,
                           domains: Sequence[str] = ("spatial", "spectral"),
                           pairings: Sequence = GRID_PAIRINGS,
                           fbc_config: FbcModelConfig = None,
                           seed: int = 0) -> GridResult:
    """Accuracy of every pairing x strategy cell on the split's binary task.

    ``stores`` maps (kind, domain) to {sample_id: residual map}.  The probe
    trains on the split's pretrain records and scores the test records.
    ``domains`` restricts the rows to pairings whose domains all fall in
    the given set; the default keeps all six rows.
    """
    domains = set(domains)
    pairings = [p for p in pairings if {p[0][1], p[1][1]} <= domains]
    if not pairings:
        raise ValueError("domain filter %s leaves no pairings" % sorted(domains))
    for pairing in pairings:
        for key in pairing:
            if key not in stores:
                raise KeyError("missing store for %s:%s" % key)

    train_recs = split.pretrain_records
    test_recs = split.test_records
    y_train = np.array([0 if r.is_bona_fide else 1 for r in train_recs])
    y_test = np.array([0 if r.is_bona_fide else 1 for r in test_recs])
    if fbc_config is None:
        fbc_config = FbcModelConfig(num_classes=2, epochs=10, seed=seed)

    acc = np.zeros((len(pairings), len(strategies)))
    for i, pairing in enumerate(pairings):
        (ka, da), (kb, db) = pairing
        maps_a_train = _gather(stores[(ka, da)], train_recs)
        maps_b_train = _gather(stores[(kb, db)], train_recs)
        maps_a_test = _gather(stores[(ka, da)], test_recs)
        maps_b_test = _gather(stores[(kb, db)], test_recs)
        flat_a_train = maps_a_train.reshape(len(train_recs), -1)
        flat_b_train = maps_b_train.reshape(len(train_recs), -1)
        flat_a_test = maps_a_test.reshape(len(test_recs), -1)
        flat_b_test = maps_b_test.reshape(len(test_recs), -1)

        for j, strat in enumerate(strategies):
            if strat == "fbc":
                model, _ = fit_fbc_model(maps_a_train, maps_b_train,
                                                y_train, fbc_config)
                z_train = extract_fused_batch(model, maps_a_train, maps_b_train)
                z_test = extract_fused_batch(model, maps_a_test, maps_b_test)
                pred, _ = fit_linear_probe(z_train, y_train, z_test, seed=seed)
            else:
                w = 0.5
                if strat == "cc":
                    w = select_cc_weight(flat_a_train, flat_b_train, y_train, seed=seed)
                f_train = fuse_arrays(flat_a_train, flat_b_train, strat, cc_weight=w)
                f_test = fuse_arrays(flat_a_test, flat_b_test, strat, cc_weight=w)
                pred, _ = fit_linear_probe(f_train, y_train, f_test, seed=seed)
            acc[i, j] = compute_accuracy(pred, y_test)

    return GridResult(rows=tuple(pairing_name(p) for p in pairings),
                      strategies=tuple(strategies), accuracies=acc)

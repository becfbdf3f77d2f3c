"""End-to-end experiment pipeline with cached stages.

A run owns an artifact directory (exclusive lock file) and executes
corpus -> protocol -> extract -> train-fbc -> extract-fused -> train-apl ->
eval, persisting each stage's outputs plus a sidecar hash of the full run
configuration.  A rerun with an unchanged config skips every stage; a
changed config invalidates all of them (stale artifacts are reported and
recomputed).  The final report depends only on the configuration, so
identical configs give byte-identical report files.
"""

import dataclasses
import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..datamodel.preprocess import preprocess_record
from ..datamodel.protocol import (
    ProtocolSplit,
    build_fsmad_protocol,
    build_fsmaf_protocol,
)
from ..datamodel.records import DatasetManifest, load_manifest
from ..datamodel.synth import SyntheticCorpusSpec, synth_generate_corpus
from ..evaluation.metrics import ScoreSet
from ..evaluation.report import EvalReport, build_report
from ..fewshot.apl import AplConfig, predict, train_apl
from ..fusion.model import FbcModelConfig, extract_fused_batch, fit_fbc_model
from ..residual.learned import ResidualNetConfig, build_patch_pairs, train_residual_net
from ..residual.prnu import prnu_extract
from ..residual.wavelet import DenoiserConfig
from .checkpoint import (
    load_apl,
    load_fbc_model,
    load_residual_extractor,
    save_apl,
    save_fbc_model,
    save_residual_extractor,
)
from .store import FeatureStore, feature_store_write

STAGES = ("corpus", "protocol", "extract", "train_fbc", "extract_fused",
          "train_apl", "eval")

TASK_METRIC = {"fsmad": "euclidean", "fsmaf": "cosine"}
TASK_K = {"fsmad": 5, "fsmaf": 3}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__("stage %r failed: %s" % (stage, cause))
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class AplParams:
    """APL knobs; class count and input width come from earlier stages."""

    metric: Optional[str] = None  # None selects the task default
    k: Optional[int] = None       # None selects the task default
    encoder_blocks: int = 15
    decoder_hidden: int = 128
    decoder_heads: int = 4
    decoder_repeats: int = 5
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 40

    def resolve(self, task: str, num_classes: int, input_dim: int,
                seed: int) -> AplConfig:
        return AplConfig(
            num_classes=num_classes, input_dim=input_dim,
            metric=self.metric or TASK_METRIC[task],
            k=self.k or TASK_K[task],
            encoder_blocks=self.encoder_blocks,
            decoder_hidden=self.decoder_hidden,
            decoder_heads=self.decoder_heads,
            decoder_repeats=self.decoder_repeats,
            lr=self.lr, batch_size=self.batch_size, epochs=self.epochs,
            seed=seed)


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run depends on."""

    task: str = "fsmaf"
    shots: int = 5
    seed: int = 0
    out_dir: str = "runs/desk"
    profile: str = "desk"
    manifest_paths: Tuple[str, ...] = ()
    synth: Optional[SyntheticCorpusSpec] = None
    face_size: int = 64
    allow_any_shots: bool = False
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    residual_net: ResidualNetConfig = field(default_factory=lambda: ResidualNetConfig(
        layers=6, channels=24, patch_size=32, pairs_per_source=12, epochs=2))
    fbc: FbcModelConfig = field(default_factory=lambda: FbcModelConfig(
        num_atoms=64, code_iters=50, epochs=30, batch_size=8, lam=1e-2))
    apl: AplParams = field(default_factory=AplParams)

    def __post_init__(self):
        if self.task not in ("fsmad", "fsmaf"):
            raise ValueError("unknown task %r" % self.task)
        if self.profile not in ("desk", "full"):
            raise ValueError("unknown profile %r" % self.profile)
        if self.shots not in (1, 5) and not self.allow_any_shots:
            raise ValueError("shots must be 1 or 5 (set allow_any_shots to override)")
        if not self.manifest_paths and self.synth is None:
            raise ValueError("config needs manifest_paths or a synth spec")
        if self.face_size < 2 ** self.denoiser.levels:
            raise ValueError("face_size below denoiser transform support")

    def config_hash(self) -> str:
        blob = json.dumps(_jsonable(self), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def to_json(self) -> str:
        return json.dumps(_jsonable(self), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("synth"):
            sd = dict(d["synth"])
            from ..datamodel.synth import MorphPipeline
            sd["pipelines"] = tuple(MorphPipeline(**p) for p in sd.get("pipelines", []))
            d["synth"] = SyntheticCorpusSpec(**sd)
        for key, typ in (("denoiser", DenoiserConfig),
                         ("residual_net", ResidualNetConfig),
                         ("fbc", FbcModelConfig),
                         ("apl", AplParams)):
            if key in d and isinstance(d[key], dict):
                sub = dict(d[key])
                for k, v in sub.items():
                    if isinstance(v, list):
                        sub[k] = tuple(v)
                d[key] = typ(**sub)
        if "manifest_paths" in d:
            d["manifest_paths"] = tuple(d["manifest_paths"])
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    return obj


def resolve_out_dir(config: RunConfig) -> str:
    return os.environ.get("MORPHKIT_CACHE_DIR") or config.out_dir


class _Run:
    """Stage bookkeeping: caching, timing, logging."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out_dir = resolve_out_dir(config)
        self.hash = config.config_hash()
        self.log: List[dict] = []

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def _sidecar(self, stage: str) -> str:
        return self.path(stage + ".hash")

    def cached(self, stage: str, outputs: List[str]) -> Optional[str]:
        """None when the stage must run, else 'skipped'. Stale hashes report."""
        side = self._sidecar(stage)
        if not all(os.path.exists(self.path(o)) for o in outputs):
            return None
        if not os.path.exists(side):
            return None
        with open(side, "r", encoding="utf-8") as f:
            stored = f.read().strip()
        if stored != self.hash:
            self.log.append({"stage": stage, "status": "stale",
                             "stored_hash": stored})
            return None
        return "skipped"

    def run_stage(self, stage: str, outputs: List[str], fn):
        status = self.cached(stage, outputs)
        if status == "skipped":
            self.log.append({"stage": stage, "status": "skipped"})
            return
        t0 = time.perf_counter()
        try:
            fn()
        except Exception as e:
            self.log.append({"stage": stage, "status": "failed", "error": str(e)})
            self.write_log()
            raise StageError(stage, e) from e
        with open(self._sidecar(stage), "w", encoding="utf-8") as f:
            f.write(self.hash + "\n")
        self.log.append({"stage": stage, "status": "run",
                         "seconds": round(time.perf_counter() - t0, 3)})

    def write_log(self):
        with open(self.path("runlog.json"), "w", encoding="utf-8") as f:
            json.dump({"seed": self.config.seed, "config_hash": self.hash,
                       "stages": self.log}, f, sort_keys=True, indent=2)
            f.write("\n")


def _load_manifests(run: _Run) -> List[DatasetManifest]:
    cfg = run.config
    manifests = [load_manifest(p) for p in cfg.manifest_paths]
    synth_manifest = run.path(os.path.join("corpus", "manifest.jsonl"))
    if cfg.synth is not None:
        manifests.append(load_manifest(synth_manifest, name="synthetic"))
    return manifests


def _build_split(run: _Run) -> ProtocolSplit:
    cfg = run.config
    manifests = _load_manifests(run)
    if cfg.task == "fsmad":
        return build_fsmad_protocol(manifests, cfg.shots, seed=cfg.seed)
    if len(manifests) == 1:
        manifest = manifests[0]
    else:
        from ..datamodel.records import merge_manifests
        manifest = merge_manifests(manifests)
    return build_fsmaf_protocol(manifest, cfg.shots, seed=cfg.seed)


def _unique_records(split: ProtocolSplit):
    seen = {}
    for r in split.pretrain_records + split.train_records + split.test_records:
        seen.setdefault(r.sample_id, r)
    return list(seen.values())


def _collect_images(split: ProtocolSplit, face_size: int) -> Dict[str, np.ndarray]:
    return {r.sample_id: preprocess_record(r, size=face_size)
            for r in _unique_records(split)}


def run_pipeline(config: RunConfig) -> EvalReport:
    """Execute the full pipeline, reusing cached stages where valid."""
    run = _Run(config)
    os.makedirs(run.out_dir, exist_ok=True)
    for p in config.manifest_paths:
        if not os.path.isfile(p):
            raise FileNotFoundError("manifest not found: %s" % p)

    lock_path = run.path(".lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RuntimeError("run directory %s is locked by another run "
                           "(remove %s if that run is dead)" % (run.out_dir, lock_path))
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)

    try:
        report = _run_stages(run)
        run.write_log()
        return report
    finally:
        os.unlink(lock_path)


def _run_stages(run: _Run) -> EvalReport:
    cfg = run.config

    # corpus: generate the synthetic data when configured.
    def corpus():
        if cfg.synth is not None:
            synth_generate_corpus(cfg.synth, run.path("corpus"))
    corpus_outputs = [os.path.join("corpus", "manifest.jsonl")] if cfg.synth else []
    run.run_stage("corpus", corpus_outputs, corpus)

    # protocol: freeze the split.
    def protocol():
        _build_split(run).save(run.path("split.json"))
    run.run_stage("protocol", ["split.json"], protocol)
    split = ProtocolSplit.load(run.path("split.json"))

    # extract: residual-net training plus both residual stores.
    def extract():
        images = _collect_images(split, cfg.face_size)
        by_source: Dict[str, list] = {}
        for r in split.pretrain_records:
            by_source.setdefault(r.class_label, []).append(images[r.sample_id])
        rng = np.random.default_rng(cfg.seed)
        pairs = build_patch_pairs(by_source, cfg.residual_net, rng)
        extractor = train_residual_net(pairs, cfg.residual_net)
        save_residual_extractor(extractor, run.path("residual.ckpt"))

        ids = sorted(images)
        prnu_records = [(sid, prnu_extract(images[sid], cfg.denoiser).values)
                        for sid in ids]
        feature_store_write(run.path("prnu_spatial.mpfs"), prnu_records,
                            dtype=np.float32)
        learned_records = [(sid, extractor.extract(images[sid]).values)
                           for sid in ids]
        feature_store_write(run.path("learned_spatial.mpfs"), learned_records,
                            dtype=np.float32)
    run.run_stage("extract", ["residual.ckpt", "prnu_spatial.mpfs",
                              "learned_spatial.mpfs"], extract)

    prnu_store = FeatureStore(run.path("prnu_spatial.mpfs")).load_all()
    learned_store = FeatureStore(run.path("learned_spatial.mpfs")).load_all()

    def maps_for(records):
        a = [prnu_store[r.sample_id].astype(np.float64) for r in records]
        b = [learned_store[r.sample_id].astype(np.float64) for r in records]
        return a, b

    # train_fbc: fusion classifier on the pretrain partition.
    def train_fbc():
        a, b = maps_for(split.pretrain_records)
        y = split.targets(split.pretrain_records)
        fbc_cfg = dataclasses.replace(cfg.fbc, num_classes=split.num_classes,
                                      seed=cfg.seed)
        model, history = fit_fbc_model(a, b, y, fbc_cfg)
        save_fbc_model(model, run.path("fbc.ckpt"))
        with open(run.path("fbc_history.json"), "w", encoding="utf-8") as f:
            json.dump(history, f, sort_keys=True, indent=2)
    run.run_stage("train_fbc", ["fbc.ckpt"], train_fbc)

    # extract_fused: pooled codes for every record in the split.
    def extract_fused_stage():
        model = load_fbc_model(run.path("fbc.ckpt"))
        records = _unique_records(split)
        ids = sorted(r.sample_id for r in records)
        by_id = {r.sample_id: r for r in records}
        a, b = maps_for([by_id[i] for i in ids])
        z = extract_fused_batch(model, a, b)
        feature_store_write(run.path("fused.mpfs"),
                            list(zip(ids, z)), dtype=np.float64)
    run.run_stage("extract_fused", ["fused.mpfs"], extract_fused_stage)

    fused = FeatureStore(run.path("fused.mpfs")).load_all()

    # train_apl: episodic adaptation on the few-shot records.
    def train_apl_stage():
        z = np.stack([fused[r.sample_id] for r in split.train_records])
        y = split.targets(split.train_records)
        apl_cfg = cfg.apl.resolve(cfg.task, split.num_classes, z.shape[1], cfg.seed)
        model, memory, history = train_apl(z, y, apl_cfg)
        save_apl(model, memory, run.path("apl.ckpt"))
        with open(run.path("apl_history.json"), "w", encoding="utf-8") as f:
            json.dump(history, f, sort_keys=True, indent=2)
    run.run_stage("train_apl", ["apl.ckpt"], train_apl_stage)

    # eval: report on the test partition.
    def eval_stage():
        model, memory = load_apl(run.path("apl.ckpt"))
        z = np.stack([fused[r.sample_id] for r in split.test_records])
        true = split.targets(split.test_records)
        pred, probs = predict(model, memory, z)
        attack_scores = ScoreSet(scores=1.0 - probs[:, 0],
                                 labels=(true != 0).astype(np.int64))
        report = build_report(cfg.task, pred, true, split.num_classes,
                              attack_scores=attack_scores)
        report.save(run.path("report.json"))
    run.run_stage("eval", ["report.json"], eval_stage)

    return EvalReport.load(run.path("report.json"))

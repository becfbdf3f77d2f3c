"""Command-line interface.

Subcommands mirror the pipeline stages so each step can run standalone;
``run`` executes the whole pipeline with cached stages.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ..datamodel.preprocess import preprocess_record
from ..datamodel.protocol import (
    ProtocolSplit,
    build_fsmad_protocol,
    build_fsmaf_protocol,
)
from ..datamodel.records import load_manifest, merge_manifests
from ..datamodel.synth import MorphPipeline, SyntheticCorpusSpec, synth_generate_corpus
from ..evaluation.grid import derive_spectral_stores, fusion_grid_experiment
from ..evaluation.metrics import ScoreSet
from ..evaluation.report import build_report
from ..fewshot.apl import predict, train_apl
from ..fusion.model import FbcModelConfig, extract_fused_batch, fit_fbc_model
from ..residual.learned import build_patch_pairs, train_residual_net
from ..residual.maps import ResidualMap, spectral_transform
from ..residual.prnu import prnu_extract
from ..residual.wavelet import DenoiserConfig
from .checkpoint import load_apl, load_fbc_model, load_residual_extractor, save_apl, \
    save_fbc_model, save_residual_extractor
from .pipeline import RunConfig, run_pipeline
from .store import FeatureStore, feature_store_write


def _load_split(path: str) -> ProtocolSplit:
    return ProtocolSplit.load(path)


def _split_images(split: ProtocolSplit, face_size: int, records):
    return {r.sample_id: preprocess_record(r, size=face_size) for r in records}


def _unique_records(split: ProtocolSplit):
    seen = {}
    for r in split.pretrain_records + split.train_records + split.test_records:
        seen.setdefault(r.sample_id, r)
    return list(seen.values())


def cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest, check_paths=not args.no_check_paths)
    counts = manifest.counts()
    print("manifest %s: %d records, %d classes" % (manifest.name, len(manifest),
                                                   len(manifest.label_set)))
    for label in manifest.label_set:
        print("  %-20s %d" % (label, counts[label]))
    return 0


def cmd_synth(args) -> int:
    pipelines = None
    if args.pipelines:
        pipelines = []
        for item in args.pipelines.split(","):
            pid, post, param, alpha = item.split(":")
            pipelines.append(MorphPipeline(pid, alpha=float(alpha), post=post,
                                           param=float(param)))
    kwargs = {"num_subjects": args.subjects, "image_size": args.size,
              "seed": args.seed}
    if pipelines is not None:
        kwargs["pipelines"] = tuple(pipelines)
    spec = SyntheticCorpusSpec(**kwargs)
    manifest = synth_generate_corpus(spec, args.out)
    print("wrote %d images (%d bona fide, %d morphs) to %s"
          % (len(manifest), spec.num_subjects, spec.num_morphs, args.out))
    return 0


def cmd_protocol(args) -> int:
    manifests = [load_manifest(p, check_paths=not args.no_check_paths)
                 for p in args.manifest]
    if args.task == "fsmad":
        split = build_fsmad_protocol(manifests, args.shots, seed=args.seed)
    else:
        manifest = manifests[0] if len(manifests) == 1 else merge_manifests(manifests)
        split = build_fsmaf_protocol(manifest, args.shots, seed=args.seed)
    split.save(args.out)
    print("split %s: %d pretrain, %d train, %d test, %d classes -> %s"
          % (split.task, len(split.pretrain_records), len(split.train_records),
             len(split.test_records), split.num_classes, args.out))
    return 0


def cmd_extract(args) -> int:
    split = _load_split(args.split)
    records = _unique_records(split)
    images = _split_images(split, args.face_size, records)
    ids = sorted(images)
    if args.kind == "prnu":
        maps = {sid: prnu_extract(images[sid], DenoiserConfig()) for sid in ids}
    else:
        if not args.weights:
            raise SystemExit("--weights required for --kind learned")
        extractor = load_residual_extractor(args.weights)
        maps = {sid: extractor.extract(images[sid]) for sid in ids}
    if args.domain == "spectral":
        maps = {sid: spectral_transform(m) for sid, m in maps.items()}
    feature_store_write(args.out, [(sid, maps[sid].values) for sid in ids],
                        dtype=np.float32)
    print("wrote %d %s/%s residual maps to %s" % (len(ids), args.kind,
                                                  args.domain, args.out))
    return 0


def cmd_train_residual(args) -> int:
    split = _load_split(args.split)
    images = _split_images(split, args.face_size, split.pretrain_records)
    by_source = {}
    for r in split.pretrain_records:
        by_source.setdefault(r.class_label, []).append(images[r.sample_id])
    from ..residual.learned import ResidualNetConfig
    cfg = ResidualNetConfig(layers=args.layers, channels=args.channels,
                            patch_size=args.patch_size, epochs=args.epochs,
                            seed=args.seed)
    rng = np.random.default_rng(args.seed)
    pairs = build_patch_pairs(by_source, cfg, rng)
    extractor = train_residual_net(pairs, cfg)
    save_residual_extractor(extractor, args.out)
    print("trained residual extractor on %d pairs, final loss %.4f -> %s"
          % (len(pairs), extractor.history[-1], args.out))
    return 0


def _stores_maps(path: str):
    return {sid: m.astype(np.float64) for sid, m in FeatureStore(path).load_all().items()}


def cmd_train_fbc(args) -> int:
    split = _load_split(args.split)
    store_a = _stores_maps(args.store_a)
    store_b = _stores_maps(args.store_b)
    recs = split.pretrain_records
    a = [store_a[r.sample_id] for r in recs]
    b = [store_b[r.sample_id] for r in recs]
    y = split.targets(recs)
    num_classes = 2 if args.task == "mad" else split.num_classes
    if args.task == "mad":
        y = np.array([0 if r.is_bona_fide else 1 for r in recs])
    cfg = FbcModelConfig(num_atoms=args.atoms, lam=args.lam,
                         code_iters=args.code_iters, epochs=args.epochs,
                         num_classes=num_classes, seed=args.seed)
    model, history = fit_fbc_model(a, b, y, cfg)
    save_fbc_model(model, args.out)
    print("trained fusion model: final accuracy %.3f -> %s"
          % (history[-1]["accuracy"], args.out))
    return 0


def cmd_extract_fused(args) -> int:
    split = _load_split(args.split)
    model = load_fbc_model(args.model)
    store_a = _stores_maps(args.store_a)
    store_b = _stores_maps(args.store_b)
    ids = sorted(r.sample_id for r in _unique_records(split))
    z = extract_fused_batch(model, [store_a[i] for i in ids],
                            [store_b[i] for i in ids])
    feature_store_write(args.out, list(zip(ids, z)), dtype=np.float64)
    print("wrote %d fused vectors of dim %d to %s" % (len(ids), z.shape[1], args.out))
    return 0


def cmd_train_apl(args) -> int:
    split = _load_split(args.split)
    fused = FeatureStore(args.fused).load_all()
    z = np.stack([fused[r.sample_id] for r in split.train_records])
    y = split.targets(split.train_records)
    from .pipeline import AplParams
    params = AplParams(epochs=args.epochs, lr=args.lr, batch_size=args.batch_size)
    cfg = params.resolve(split.task, split.num_classes, z.shape[1], args.seed)
    model, memory, history = train_apl(z, y, cfg)
    save_apl(model, memory, args.out)
    print("trained episodic classifier: %d memory rows, final accuracy %.3f -> %s"
          % (len(memory), history[-1]["accuracy"], args.out))
    return 0


def cmd_predict(args) -> int:
    split = _load_split(args.split)
    model, memory = load_apl(args.model)
    fused = FeatureStore(args.fused).load_all()
    recs = split.test_records
    z = np.stack([fused[r.sample_id] for r in recs])
    pred, probs = predict(model, memory, z)
    with open(args.out, "w", encoding="utf-8") as f:
        for r, p, pr in zip(recs, pred, probs):
            f.write(json.dumps({
                "sample_id": r.sample_id,
                "true": int(split.label_index(r.class_label)),
                "pred": int(p),
                "probs": [float(x) for x in pr],
            }, sort_keys=True) + "\n")
    print("wrote %d predictions to %s" % (len(recs), args.out))
    return 0


def cmd_eval(args) -> int:
    rows = []
    with open(args.pred, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append(json.loads(line))
    pred = [r["pred"] for r in rows]
    true = [r["true"] for r in rows]
    num_classes = max(len(r["probs"]) for r in rows)
    scores = ScoreSet(scores=np.array([1.0 - r["probs"][0] for r in rows]),
                      labels=np.array([1 if t != 0 else 0 for t in true]))
    report = build_report(args.task, pred, true, num_classes, attack_scores=scores)
    report.save(args.report)
    print(report.to_json(), end="")
    return 0


def cmd_fusion_grid(args) -> int:
    split = _load_split(args.split)
    stores = {
        ("prnu", "spatial"): _stores_maps(args.prnu_spatial),
        ("learned", "spatial"): _stores_maps(args.learned_spatial),
    }
    if args.prnu_spectral:
        stores[("prnu", "spectral")] = _stores_maps(args.prnu_spectral)
    if args.learned_spectral:
        stores[("learned", "spectral")] = _stores_maps(args.learned_spectral)
    stores = derive_spectral_stores(stores)
    fbc_cfg = FbcModelConfig(num_atoms=args.atoms, code_iters=args.code_iters,
                             epochs=args.epochs, num_classes=2, seed=args.seed)
    result = fusion_grid_experiment(split, stores, fbc_config=fbc_cfg, seed=args.seed)
    result.save(args.out)
    print("%-32s" % "pairing", *("%8s" % s for s in result.strategies))
    for i, row in enumerate(result.rows):
        print("%-32s" % row, *("%8.4f" % a for a in result.accuracies[i]))
    return 0


def cmd_run(args) -> int:
    if args.config:
        config = RunConfig.load(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out:
            overrides["out_dir"] = args.out
        if args.profile:
            overrides["profile"] = args.profile
        if overrides:
            config = dataclasses.replace(config, **overrides)
    else:
        synth = SyntheticCorpusSpec(num_subjects=args.subjects, image_size=64,
                                    seed=args.seed or 0)
        config = RunConfig(task=args.task, shots=args.shots,
                           seed=args.seed or 0,
                           out_dir=args.out or "runs/desk",
                           profile=args.profile or "desk", synth=synth)
    report = run_pipeline(config)
    print(report.to_json(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morphkit",
                                description="Morphing attack detection and "
                                            "fingerprinting toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="validate a dataset manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--no-check-paths", action="store_true")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("synth", help="generate the synthetic corpus")
    s.add_argument("--subjects", type=int, default=10)
    s.add_argument("--size", type=int, default=270)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pipelines",
                   help="comma list of id:post:param:alpha descriptors")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("protocol", help="build a train/test split")
    s.add_argument("--task", choices=("fsmad", "fsmaf"), required=True)
    s.add_argument("--shots", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--manifest", action="append", required=True)
    s.add_argument("--no-check-paths", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_protocol)

    s = sub.add_parser("extract", help="extract residual maps into a store")
    s.add_argument("--kind", choices=("prnu", "learned"), required=True)
    s.add_argument("--domain", choices=("spatial", "spectral"), default="spatial")
    s.add_argument("--split", required=True)
    s.add_argument("--weights", help="residual net checkpoint (kind=learned)")
    s.add_argument("--face-size", type=int, default=64)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_extract)

    s = sub.add_parser("train-residual", help="train the learned extractor")
    s.add_argument("--split", required=True)
    s.add_argument("--face-size", type=int, default=64)
    s.add_argument("--layers", type=int, default=6)
    s.add_argument("--channels", type=int, default=24)
    s.add_argument("--patch-size", type=int, default=32)
    s.add_argument("--epochs", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train_residual)

    s = sub.add_parser("train-fbc", help="train the bilinear fusion classifier")
    s.add_argument("--task", choices=("mad", "maf"), required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--store-a", required=True, help="first residual store")
    s.add_argument("--store-b", required=True, help="second residual store")
    s.add_argument("--atoms", type=int, default=64)
    s.add_argument("--lam", type=float, default=1e-3)
    s.add_argument("--code-iters", type=int, default=50)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train_fbc)

    s = sub.add_parser("extract-fused", help="extract pooled fusion codes")
    s.add_argument("--model", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--store-a", required=True)
    s.add_argument("--store-b", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_extract_fused)

    s = sub.add_parser("train-apl", help="train the episodic classifier")
    s.add_argument("--split", required=True)
    s.add_argument("--fused", required=True)
    s.add_argument("--epochs", type=int, default=40)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_train_apl)

    s = sub.add_parser("predict", help="classify the test partition")
    s.add_argument("--model", required=True)
    s.add_argument("--split", required=True)
    s.add_argument("--fused", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("eval", help="score a prediction file")
    s.add_argument("--pred", required=True)
    s.add_argument("--task", default="fsmaf")
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("fusion-grid", help="pairing x strategy accuracy grid")
    s.add_argument("--split", required=True)
    s.add_argument("--prnu-spatial", required=True)
    s.add_argument("--learned-spatial", required=True)
    s.add_argument("--prnu-spectral")
    s.add_argument("--learned-spectral")
    s.add_argument("--atoms", type=int, default=64)
    s.add_argument("--code-iters", type=int, default=50)
    s.add_argument("--epochs", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_fusion_grid)

    s = sub.add_parser("run", help="run the full pipeline")
    s.add_argument("--config", help="RunConfig JSON file")
    s.add_argument("--task", choices=("fsmad", "fsmaf"), default="fsmaf")
    s.add_argument("--shots", type=int, default=5)
    s.add_argument("--subjects", type=int, default=10)
    s.add_argument("--seed", type=int)
    s.add_argument("--profile", choices=("desk", "full"))
    s.add_argument("--out")
    s.set_defaults(fn=cmd_run)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

from .records import (
    BONA_FIDE,
    Dataset,
    DatasetManifest,
    ManifestError,
    SampleRecord,
    load_manifest,
    merge_manifests,
    save_manifest,
)
from .preprocess import load_image, preprocess_face, preprocess_record, to_luminance
from .protocol import (
    NOVEL_MORPH_LABELS,
    PREDEFINED_MORPH_LABELS,
    ProtocolError,
    ProtocolSplit,
    build_fsmad_protocol,
    build_fsmaf_protocol,
)
from .synth import (
    MorphPipeline,
    SyntheticCorpusSpec,
    default_pipelines,
    render_subject,
    synth_generate_corpus,
    synth_morph,
)

__all__ = [
    "BONA_FIDE", "Dataset", "DatasetManifest", "ManifestError", "SampleRecord",
    "load_manifest", "merge_manifests", "save_manifest",
    "load_image", "preprocess_face", "preprocess_record", "to_luminance",
    "NOVEL_MORPH_LABELS", "PREDEFINED_MORPH_LABELS", "ProtocolError", "ProtocolSplit",
    "build_fsmad_protocol", "build_fsmaf_protocol",
    "MorphPipeline", "SyntheticCorpusSpec", "default_pipelines", "render_subject",
    "synth_generate_corpus", "synth_morph",
]

"""Entropy Decay Curve profiling: h_k, H_k, u_k = h_k / H_k, IGS and collapse flags."""

from ._edc import (
    Backend,
    CleanedCorpus,
    CognitiveProfile,
    DeltaBackend,
    EdcError,
    EntropyRecord,
    MeanDistributionAccumulator,
    NGramBackend,
    NGramModel,
    ProfileConfig,
    RemoteBackend,
    ReplayBackend,
    Tokenizer,
    UniformBackend,
    detect_collapse,
    entropy_bits,
    igs,
    parse_profiles_document,
    profile_manifest,
    profile_to_json,
    profiles_document,
    render_edc,
    run_profile,
    softmax_stable,
    strip_boilerplate,
    to_igs_table,
    to_table,
    uncertainty_index,
)

__all__ = [name for name in dir() if not name.startswith("_")]

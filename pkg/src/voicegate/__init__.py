"""Keyword-gated few-shot speaker verification for always-on audio streams.

A small keyword-spotting CNN gates a voice-embedding CNN; the embedding side
enrolls a speaker from a handful of utterances held as raw vectors and
verifies later utterances by best-match cosine similarity against a
threshold. The package also carries the byte-exact memory budgeting for the
embedded target, an evaluation harness, and a local demo service.
"""

from .asv import (
    EnrollmentSet,
    SvDecision,
    best_match_similarity,
    cosine_similarity,
    enroll,
    extract_dvector,
    load_enrollment,
    mcs_similarity,
    save_enrollment,
    sv_decide,
)
from .dsp import (
    AudioWindow,
    SampleStream,
    Spectrogram,
    StreamConfig,
    extract_mfcc,
    frame_count,
    read_wav,
    window_from_samples,
    write_wav,
)
from .ks import KsClass, KsDecision, ks_classify
from .nn import (
    LayerSpec,
    WeightBundle,
    count_params,
    layer_table,
    load_bundle,
    run_network,
    save_bundle,
)
from .pipeline import (
    MemoryBudget,
    Mode,
    Pipeline,
    PipelineConfig,
    PipelineEvent,
    estimate_memory,
    load_config,
    save_config,
)

__version__ = "0.1.0"

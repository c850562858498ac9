"""FTA hashing: fixed-length codes that record which latent posture acts first."""

__version__ = "0.1.0"

from .core import (
    Dataset,
    SynthSpec,
    VideoSequence,
    make_synthetic,
    transform_rate,
    transform_scale,
    transform_translate,
)
from .hashing import (
    NEVER,
    FtaCode,
    HashSpec,
    Mode,
    ProjectionBank,
    encode,
    encode_bow,
    first_act_peak,
    first_act_threshold,
    hash_sequence,
    make_bank,
    make_hash_spec,
    pack,
    score,
    unpack,
)
from .search import CodeDatabase, hamming, knn_classify
from .evaluation import EvalReport, ExperimentConfig, run_experiment, select_theta, sweep

"""Hop-normalized dense progress estimation toolkit."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    EngineConfig,
    ProgressPoint,
    ProgressSeries,
    backward_anchored,
    confidence_weight,
    conservative_update,
    forward_anchored,
    fuse_mean,
    hop_to_delta,
    incremental_step,
    normalized_discrepancy,
    reconstruct,
    reconstruct_reversed,
)
from .labeler import HopSample, LabelerConfig, build_hop_samples, hop_label, validate_balance  # noqa: E402
from .predictors import (  # noqa: E402
    ExternalBridge,
    HopPredictor,
    HopQuery,
    NoisyPredictor,
    OODPredictor,
    OraclePredictor,
    PredictorSpec,
    ProgressTable,
    QuantizedPredictor,
)
from .trajectory import (  # noqa: E402
    SampledSequence,
    StateObservation,
    Trajectory,
    ground_truth_progress,
    intermediate_count,
    sample_sequence,
)

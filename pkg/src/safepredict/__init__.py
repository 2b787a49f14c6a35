"""Online refusal meta-algorithms with distribution-free error guarantees."""

from ._backend import NAME as BACKEND
from .meta import (
    Decision,
    MetaConfig,
    MetaState,
    SafePredict,
    Variant,
    learning_rate_for_epoch,
    optimal_fixed_rate,
    prediction_prob_bounds,
    run_stream,
    ws_refusal_bound,
)
from .trace import RunSummary, RunTrace, read_csv, summarize, write_csv

__version__ = "0.1.0"

"""SLO-aware priority mapping and batching for LLM inference requests."""

from .core import (
    TABLE_COEFFICIENTS,
    InstanceState,
    LatencyCoefficients,
    Request,
    Schedule,
    SloKind,
    SloSpec,
    TaskClass,
    Workload,
)
from .mapper import AnnealConfig, anneal, exhaustive
from .objective import evaluate
from .scheduler import schedule_all
from .simulator import compare, run

__version__ = "0.1.0"

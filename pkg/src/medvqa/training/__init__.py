"""Optimizer, training loop, evaluation, and reporting."""

from .adadelta import AdaDelta, adadelta_step
from .report import (
    CURVE_FIELDS,
    CurveRow,
    EvalReport,
    ReportRow,
    compile_report,
    read_curves,
    write_curves,
)
from .trainer import (
    ArrayImageStore,
    EvalResult,
    FileImageStore,
    GroupStats,
    OptimizerConfig,
    TrainConfig,
    TrainResult,
    evaluate,
    train,
)

__all__ = [
    "AdaDelta",
    "ArrayImageStore",
    "CURVE_FIELDS",
    "CurveRow",
    "EvalReport",
    "EvalResult",
    "FileImageStore",
    "GroupStats",
    "OptimizerConfig",
    "ReportRow",
    "TrainConfig",
    "TrainResult",
    "adadelta_step",
    "compile_report",
    "evaluate",
    "read_curves",
    "train",
    "write_curves",
]

from .scoring import PRReport, score
from .sweep import AXES, SweepResult, configure, run_pipeline, sweep
from .synthetic import SyntheticConfig, SyntheticDataset, generate_synthetic

__all__ = [
    "AXES",
    "PRReport",
    "SweepResult",
    "SyntheticConfig",
    "SyntheticDataset",
    "configure",
    "generate_synthetic",
    "run_pipeline",
    "score",
    "sweep",
]

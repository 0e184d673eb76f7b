"""trajevo: trajectory-aware evolution of metaheuristic solver configurations.

The package evaluates solvers by their full convergence trajectory (not just
the endpoint), evolves mechanism/schedule configurations through layered
tolerance-gated acceptance, and archives group specialists for profile-based
warm-start retrieval on new instances.
"""

__version__ = "0.1.0"

from .trajectory import (  # noqa: F401
    AltMetrics,
    IncumbentTrace,
    MetricConfig,
    TracePoint,
    alt_metrics,
    decay_rate,
    fold_incumbent,
    log_residual,
    terminal_log_residual,
    time_avg_log_residual,
)

"""Multi-agent index advisor: Python access to the C++ core.

Schemas and workloads are passed as JSON strings in the same formats the
command-line tool reads.
"""

from ._core import (
    OracleError,
    ValidationError,
    advise,
    benefit_to_cost,
    candidates,
    create_index_statement,
    generate_instance,
    index_storage_mb,
    indicator_accuracy,
    relative_improvement,
    run_experiment,
    train_indicator,
    workload_cost,
)

__all__ = [
    "OracleError",
    "ValidationError",
    "advise",
    "benefit_to_cost",
    "candidates",
    "create_index_statement",
    "generate_instance",
    "index_storage_mb",
    "indicator_accuracy",
    "relative_improvement",
    "run_experiment",
    "train_indicator",
    "workload_cost",
]

"""Value-based adaptive stopping for iterative retrieval pipelines."""

__version__ = "0.1.0"

from .mdp import (  # noqa: E402
    Action,
    Document,
    EpisodeConfig,
    EvidenceStep,
    RewardTable,
    TraceState,
    Trajectory,
    is_terminal,
    make_prefix,
)
from .targets import (  # noqa: E402
    TargetPair,
    binary_label,
    mc_target,
    n_step_target,
    q0_target,
    q_lambda_target,
    recursive_backup_oracle,
)

__all__ = [
    "Action", "Document", "EpisodeConfig", "EvidenceStep", "RewardTable", "TraceState",
    "Trajectory", "is_terminal", "make_prefix", "TargetPair", "binary_label", "mc_target",
    "n_step_target", "q0_target", "q_lambda_target", "recursive_backup_oracle",
]
